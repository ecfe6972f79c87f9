"""``hmcgap`` command line: run the named experiments from JSON configs.

Usage:  hmcgap <experiment> [--config file.json] [--check] [--out dir] [flags]

Flags override config-file values, which override built-in defaults.
Exit codes: 0 success, 2 config error, 3 numerical failure,
4 acceptance-assertion failure in --check mode.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .dynamics import IntegratorFailure
from .experiments import (
    EXPERIMENTS,
    ConfigError,
    render_csv,
    run_checks,
    run_experiment,
    write_outputs,
)

_CSV_DOC = {
    "conductance": "CSV: method,phi,se,phi_plus_half,phi_plus_corrected,pi_S,n,resamples",
    "flux": (
        "CSV: phi_plus_mc,se_mc,phi_plus_corrected,phi_plus_half,rel_err_corrected,"
        "half_discrepancy_factor,mean_n,n,resamples"
    ),
    "spectral-gap": "CSV: a,T_or_eps,gap,lambda2,converged,defect",
    "scaling": (
        "CSV per sigma: phi (parity, T=sigma), flux_bound_half, linear flux bounds, "
        "-2 sigma^2 log columns, hmc_gap, rwm_gap, log_gap_ratio, hitting summary"
    ),
    "degenerate": (
        "CSV per T: phi, linear flux bounds, grid gap, Rayleigh bound 1-cos(T), "
        "log phi / log T, log gap / log T"
    ),
    "figure": "CSV: a,T,gap,lambda2,converged (the full (a, T) spectral-gap grid)",
    "hitting": "CSV per sigma: tau quantiles/mean, censored count, phi_flux, log_ratio",
    "drift": "CSV per kernel: ratio,se,ucb95,in_drift_region,passed,n",
    "chains": "CSV: chain_id,step,q0[,q1,...]",
}


def _add_common(sp):
    sp.add_argument("--config", help="JSON config file")
    sp.add_argument("--out", help="output directory for CSV + JSON sidecar")
    sp.add_argument("--check", action="store_true", help="run acceptance assertions")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--energy-tol", dest="energy_tol", type=float)
    sp.add_argument("--max-step", dest="max_step", type=float)


def _json_flag(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmcgap",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subs = parser.add_subparsers(dest="experiment", required=True)

    for name in EXPERIMENTS:
        sp = subs.add_parser(name, description=_CSV_DOC[name])
        _add_common(sp)
        if name in ("conductance", "flux", "spectral-gap", "chains"):
            sp.add_argument("--target", type=_json_flag, help='e.g. \'{"kind":"mixture1d","sigma":0.5}\'')
            sp.add_argument("--boundary", type=_json_flag, help='e.g. \'{"kind":"point1d","value":0}\'')
        if name in ("conductance", "flux", "spectral-gap", "chains"):
            sp.add_argument("--T", type=float, help="HMC integration time")
        if name == "conductance":
            sp.add_argument("--method", choices=["direct", "parity", "flux", "all"])
            sp.add_argument("--n", type=int)
        if name == "flux":
            sp.add_argument("--n", type=int)
        if name == "spectral-gap":
            sp.add_argument("--kernel", choices=["hmc", "rwm"])
            sp.add_argument("--epsilon", type=float, help="RWM proposal std dev")
            sp.add_argument("--bins", type=int)
            sp.add_argument("--quad-order", dest="quad_order", type=int)
        if name == "scaling":
            sp.add_argument("--sigmas", type=_float_list)
            sp.add_argument("--n", type=int)
            sp.add_argument("--bins", type=int)
            sp.add_argument("--hitting-replicas", dest="hitting_replicas", type=int)
        if name == "degenerate":
            sp.add_argument("--T-list", dest="T_list", type=_float_list)
            sp.add_argument("--n", type=int)
            sp.add_argument("--bins", type=int)
        if name == "figure":
            sp.add_argument("--a-list", dest="a_list", type=_float_list)
            sp.add_argument("--T-list", dest="T_list", type=_float_list)
            sp.add_argument("--bins", type=int)
            sp.add_argument("--quad-order", dest="quad_order", type=int)
            sp.add_argument("--convergence-audit", dest="convergence_audit", action="store_true", default=None)
        if name == "hitting":
            sp.add_argument("--sigmas", type=_float_list)
            sp.add_argument("--replicas", type=int)
            sp.add_argument("--horizon", type=int)
            sp.add_argument("--x", type=float)
        if name == "drift":
            sp.add_argument("--sigma", type=float)
            sp.add_argument("--x", type=float)
            sp.add_argument("--n", type=int)
        if name == "chains":
            sp.add_argument("--kernel", choices=["rwm", "hmc", "rhmc"])
            sp.add_argument("--epsilon", type=float)
            sp.add_argument("--chains", type=int)
            sp.add_argument("--steps", type=int)
            sp.add_argument("--x0", type=float)
    return parser


_NOT_CONFIG = {"experiment", "config", "out", "check"}


def _merge_config(args) -> dict:
    config = {}
    if args.config:
        with open(args.config) as fh:
            config = json.load(fh)
    for key, value in vars(args).items():
        if key in _NOT_CONFIG or value is None:
            continue
        config[key] = value
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _merge_config(args)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        rows, meta = run_experiment(args.experiment, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IntegratorFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    if args.out:
        csv_path, meta_path = write_outputs(args.out, args.experiment, rows, meta)
        print(f"wrote {csv_path} and {meta_path}")
    else:
        sys.stdout.write(render_csv(rows))

    for warning in meta.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)

    if args.check:
        failures = run_checks(args.experiment, rows, meta)
        for failure in failures:
            print(f"CHECK FAILED: {failure}", file=sys.stderr)
        if failures:
            return 4
        print("all checks passed", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
