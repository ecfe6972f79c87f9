"""Named experiment runners behind the ``hmcgap`` command line.

Every experiment is a pure function of its validated JSON config: rows
come out in parameter order (never completion order), cell parallelism
uses ordered process maps, and all randomness is addressed through the
counter-based streams.  A run therefore produces byte-identical CSV
output for any worker count.

Each runner returns (rows, meta); ``write_outputs`` renders rows to CSV
next to a JSON sidecar carrying full provenance (config echo, seed,
sample sizes, tolerance stack, build id, warnings).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from typing import Callable

import numpy as np

from . import __version__
from .conductance import (
    conductance_upper_bound,
    direct_conductance,
    flux_quadrature,
    parity_conductance,
    set_mass,
    substream_index,
)
from .dynamics import FlowConfig, HamiltonianSystem
from .geometry import PointSet1D, boundary_from_config
from .samplers import (
    HmcKernel,
    RwmKernel,
    hitting_times,
    lyapunov_drift,
    run_chain,
)
from .spectral import (
    fit_log_gap_slope,
    gap_surface,
    hmc_kernel_matrix,
    rayleigh_bound,
    rwm_kernel_matrix,
    spectral_gap,
)
from .targets import Gaussian1D, GaussianMixture1D, target_from_config

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "validate_config",
    "run_experiment",
    "write_outputs",
    "build_id",
]


class ConfigError(ValueError):
    """Config rejected before any computation."""


_TARGET_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["mixture1d", "maxgauss1d", "mixtureNd", "gauss1d", "degenerate2d"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number", "minimum": 0},
        "dim": {"type": "integer", "minimum": 2},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_BOUNDARY_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["point1d", "hyperplane", "levelset-circle"]},
        "value": {"type": ["number", "array"]},
        "normal": {"type": "array", "items": {"type": "number"}},
        "offset": {"type": "number"},
        "radius": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

_COMMON = {
    "seed": {"type": "integer", "minimum": 0},
    "workers": {"type": "integer", "minimum": 1},
    "energy_tol": {"type": "number", "exclusiveMinimum": 0},
    "max_step": {"type": "number", "exclusiveMinimum": 0},
}


def _schema(props: dict, required=()):
    full = dict(_COMMON)
    full.update(props)
    return {
        "type": "object",
        "properties": full,
        "required": list(required),
        "additionalProperties": False,
    }


SCHEMAS = {
    "conductance": _schema(
        {
            "target": _TARGET_SCHEMA,
            "boundary": _BOUNDARY_SCHEMA,
            "T": {"type": "number", "exclusiveMinimum": 0},
            "method": {"enum": ["direct", "parity", "flux", "all"]},
            "n": {"type": "integer", "minimum": 1},
        },
        required=["target", "T"],
    ),
    "flux": _schema(
        {
            "target": _TARGET_SCHEMA,
            "boundary": _BOUNDARY_SCHEMA,
            "T": {"type": "number", "exclusiveMinimum": 0},
            "n": {"type": "integer", "minimum": 1},
        },
        required=["target", "T"],
    ),
    "spectral-gap": _schema(
        {
            "target": _TARGET_SCHEMA,
            "kernel": {"enum": ["hmc", "rwm"]},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "T_list": _NUM_LIST,
            "epsilon": {"type": "number", "exclusiveMinimum": 0},
            "epsilon_list": _NUM_LIST,
            "bins": {"type": "integer", "minimum": 16},
            "quad_order": {"type": "integer", "minimum": 16},
        },
        required=["target", "kernel"],
    ),
    "scaling": _schema(
        {
            "sigmas": _NUM_LIST,
            "n": {"type": "integer", "minimum": 1},
            "bins": {"type": "integer", "minimum": 16},
            "quad_order": {"type": "integer", "minimum": 16},
            "hitting_replicas": {"type": "integer", "minimum": 0},
            "hitting_horizon": {"type": "integer", "minimum": 1},
        }
    ),
    "degenerate": _schema(
        {
            "T_list": _NUM_LIST,
            "n": {"type": "integer", "minimum": 1},
            "bins": {"type": "integer", "minimum": 16},
        }
    ),
    "figure": _schema(
        {
            "a_list": _NUM_LIST,
            "T_list": _NUM_LIST,
            "bins": {"type": "integer", "minimum": 16},
            "quad_order": {"type": "integer", "minimum": 16},
            "convergence_audit": {"type": "boolean"},
        }
    ),
    "hitting": _schema(
        {
            "sigmas": _NUM_LIST,
            "x": {"type": "number"},
            "replicas": {"type": "integer", "minimum": 1},
            "horizon": {"type": "integer", "minimum": 1},
        }
    ),
    "drift": _schema(
        {
            "sigma": {"type": "number", "exclusiveMinimum": 0},
            "x": {"type": "number"},
            "n": {"type": "integer", "minimum": 1},
        }
    ),
    "chains": _schema(
        {
            "target": _TARGET_SCHEMA,
            "kernel": {"enum": ["rwm", "hmc", "rhmc"]},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "epsilon": {"type": "number", "exclusiveMinimum": 0},
            "chains": {"type": "integer", "minimum": 1},
            "steps": {"type": "integer", "minimum": 1},
            "x0": {"type": ["number", "array"]},
        },
        required=["target", "kernel"],
    ),
}

DEFAULTS = {
    "conductance": {"method": "all", "n": 100_000, "seed": 0,
                    "boundary": {"kind": "point1d", "value": 0.0}},
    "flux": {"n": 1_000_000, "seed": 0, "boundary": {"kind": "point1d", "value": 0.0}},
    "spectral-gap": {"bins": 400, "quad_order": 256, "seed": 0},
    "scaling": {
        "sigmas": [0.6, 0.5, 0.4, 0.3, 0.25],
        "n": 100_000,
        "bins": 400,
        "quad_order": 256,
        "hitting_replicas": 200,
        "hitting_horizon": 50_000,
        "seed": 0,
    },
    "degenerate": {"T_list": [0.1, 0.2, 0.5, 1.0], "n": 100_000, "bins": 400, "seed": 0},
    "figure": {
        "a_list": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
        "T_list": [
            math.pi / 8, math.pi / 4, 1.0, 3 * math.pi / 8, math.pi / 2,
            2.0, math.pi, 2 * math.pi,
        ],
        "bins": 400,
        "quad_order": 256,
        "convergence_audit": False,
        "seed": 0,
    },
    "hitting": {"sigmas": [0.4], "x": -1.0, "replicas": 1000, "horizon": 100_000, "seed": 0},
    "drift": {"sigma": 0.3, "x": -3.0, "n": 10_000, "seed": 0},
    "chains": {"chains": 4, "steps": 100, "x0": 0.0, "seed": 0},
}


def validate_config(experiment: str, config: dict) -> dict:
    """Schema-validate and fill defaults; unknown keys are rejected."""
    import jsonschema

    if experiment not in SCHEMAS:
        raise ConfigError(
            f"unknown experiment {experiment!r}; choose from {sorted(SCHEMAS)}"
        )
    merged = dict(DEFAULTS[experiment])
    merged.update(config or {})
    try:
        jsonschema.validate(merged, SCHEMAS[experiment])
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid {experiment} config: {exc.message}") from None
    return merged


def _flow_config(cfg) -> FlowConfig:
    kwargs = {}
    if "energy_tol" in cfg:
        kwargs["energy_tolerance"] = cfg["energy_tol"]
    if "max_step" in cfg:
        kwargs["max_step"] = cfg["max_step"]
    return FlowConfig(**kwargs)


def _pmap(fn: Callable, items: list, workers: int) -> list:
    """Ordered map, optionally across processes; result order is fixed."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=1))


# ---------------------------------------------------------------------------
# runners


def run_conductance(cfg: dict) -> tuple:
    target = target_from_config(cfg)
    boundary = boundary_from_config(cfg.get("boundary", {"kind": "point1d", "value": 0.0}))
    T, n, seed = cfg["T"], cfg["n"], cfg["seed"]
    system = HamiltonianSystem(target)
    methods = [cfg["method"]] if cfg["method"] != "all" else ["direct", "parity", "flux"]
    fq_half = flux_quadrature(target, boundary, T, "half")
    fq_corr = flux_quadrature(target, boundary, T, "normal_mean_positive")
    pi_s = set_mass(target, boundary)
    rows, warnings = [], []

    def row(method, phi, se, n_used, resamples):
        return {
            "method": method,
            "phi": phi,
            "se": se,
            "phi_plus_half": fq_half.phi_plus,
            "phi_plus_corrected": fq_corr.phi_plus,
            "pi_S": pi_s,
            "n": n_used,
            "resamples": resamples,
        }

    for method in methods:
        if method == "direct":
            est = direct_conductance(HmcKernel(target, T, _flow_config(cfg)), boundary, n, seed)
            rows.append(row("direct", est.phi, est.std_error, est.n_samples, 0))
        elif method == "parity":
            est = parity_conductance(system, boundary, T, n, seed)
            warnings.extend(est.warnings)
            rows.append(row("parity", est.phi, est.std_error, est.n_samples, est.resample_count))
        elif method == "flux":
            bound = conductance_upper_bound(target, boundary, T)
            rows.append(row("flux", bound["normal_mean_positive"], 0.0, 0, 0))
    return rows, {"warnings": warnings, "pi_S": pi_s}


def check_conductance(rows, meta) -> list:
    failures = []
    by = {r["method"]: r for r in rows}
    if "direct" in by and "parity" in by:
        d, p = by["direct"], by["parity"]
        gap = abs(d["phi"] - p["phi"])
        tol = 3.0 * math.hypot(d["se"], p["se"])
        if gap > tol:
            failures.append(
                f"parity vs direct disagree: |{p['phi']:.5f} - {d['phi']:.5f}| > 3 SE ({tol:.5f})"
            )
    return failures


def run_flux(cfg: dict) -> tuple:
    target = target_from_config(cfg)
    boundary = boundary_from_config(cfg.get("boundary", {"kind": "point1d", "value": 0.0}))
    T, n, seed = cfg["T"], cfg["n"], cfg["seed"]
    system = HamiltonianSystem(target)
    est = parity_conductance(system, boundary, T, n, seed)
    mc = est.components["phi_plus_mc"]
    corr = flux_quadrature(target, boundary, T, "normal_mean_positive").phi_plus
    half = flux_quadrature(target, boundary, T, "half").phi_plus
    var_n = est.components["var_n"]
    se_mc = 0.5 * math.sqrt(var_n / est.n_samples)
    rows = [
        {
            "phi_plus_mc": mc,
            "se_mc": se_mc,
            "phi_plus_corrected": corr,
            "phi_plus_half": half,
            "rel_err_corrected": (mc - corr) / corr if corr else float("nan"),
            "half_discrepancy_factor": half / corr if corr else float("nan"),
            "mean_n": est.components["mean_n"],
            "n": est.n_samples,
            "resamples": est.resample_count,
        }
    ]
    return rows, {"warnings": list(est.warnings)}


def check_flux(rows, meta) -> list:
    r = rows[0]
    if abs(r["rel_err_corrected"]) > 0.02:
        return [
            f"flux identity violated: E[N]/2 = {r['phi_plus_mc']:.6f} vs quadrature "
            f"{r['phi_plus_corrected']:.6f} ({100 * r['rel_err_corrected']:.2f}% > 2%)"
        ]
    return []


def run_spectral_gap(cfg: dict) -> tuple:
    target = target_from_config(cfg)
    kernel = cfg["kernel"]
    if kernel == "hmc":
        values = cfg.get("T_list", [cfg["T"]] if "T" in cfg else [])
    else:
        values = cfg.get("epsilon_list", [cfg["epsilon"]] if "epsilon" in cfg else [])
    if not values:
        raise ConfigError(f"spectral-gap with kernel={kernel} needs T/epsilon (or a list)")
    a_val = getattr(target, "a", "")
    rows = []
    for v in values:
        if kernel == "hmc":
            tm = hmc_kernel_matrix(target, v, n_bins=cfg["bins"], quad_order=cfg["quad_order"])
        else:
            tm = rwm_kernel_matrix(target, v, n_bins=cfg["bins"])
        res = spectral_gap(tm)
        rows.append(
            {
                "a": a_val,
                "T_or_eps": v,
                "gap": res.gap,
                "lambda2": res.lambda2,
                "converged": "",
                "defect": tm.reversibility_defect,
            }
        )
    return rows, {"bins": cfg["bins"]}


def check_spectral_gap(rows, meta) -> list:
    return []


def _scaling_row(args) -> dict:
    sigma, cfg = args
    seed = substream_index(cfg["seed"], int(round(sigma * 1e6)))
    target = GaussianMixture1D(sigma)
    boundary = PointSet1D((0.0,))
    system = HamiltonianSystem(target)
    T = sigma
    est = parity_conductance(system, boundary, T, cfg["n"], seed)
    bound = conductance_upper_bound(target, boundary, T)
    flux_half = flux_quadrature(target, boundary, T, "half").phi_plus
    odd_hits = est.components["p_odd"] * est.n_samples
    starving = odd_hits < 25
    phi = bound["normal_mean_positive"] if starving else est.phi
    hmc_gap = spectral_gap(
        hmc_kernel_matrix(target, T, n_bins=cfg["bins"], quad_order=cfg["quad_order"])
    ).gap
    rwm_gap = spectral_gap(rwm_kernel_matrix(target, sigma, n_bins=cfg["bins"])).gap
    row = {
        "sigma": sigma,
        "T": T,
        "phi": phi,
        "phi_se": 0.0 if starving else est.std_error,
        "phi_source": "quadrature-only" if starving else "parity",
        "flux_bound_half": flux_half,
        "bound_half": bound["half"],
        "bound_corrected": bound["normal_mean_positive"],
        "neg2s2_log_flux_bound": -2.0 * sigma * sigma * math.log(flux_half),
        "neg2s2_log_phi": -2.0 * sigma * sigma * math.log(phi) if phi > 0 else float("inf"),
        "hmc_gap": hmc_gap,
        "rwm_gap": rwm_gap,
        "log_gap_ratio": math.log(hmc_gap) / math.log(rwm_gap),
        "resamples": est.resample_count,
    }
    if cfg["hitting_replicas"] > 0:
        kernel = HmcKernel(target, T)
        taus, cens = hitting_times(
            kernel,
            -1.0,
            boundary,
            cfg["hitting_replicas"],
            horizon=cfg["hitting_horizon"],
            seed=substream_index(seed, 1),
        )
        row["tau_median"] = float(np.median(taus))
        row["tau_mean"] = float(np.mean(taus))
        row["tau_censored"] = int(np.sum(cens))
    else:
        row["tau_median"] = row["tau_mean"] = float("nan")
        row["tau_censored"] = 0
    return row


def run_scaling_sweep(cfg: dict, workers: int = 1) -> tuple:
    sigmas = sorted(cfg["sigmas"], reverse=True)
    if any(not 0.25 <= s <= 1.0 for s in sigmas):
        raise ConfigError("scaling sweep sigmas must lie in [0.25, 1]")
    rows = _pmap(_scaling_row, [(s, cfg) for s in sigmas], workers)
    warnings = [
        f"sigma={r['sigma']}: {r['phi_source']}"
        for r in rows
        if r["phi_source"] != "parity"
    ]
    return rows, {"warnings": warnings}


def check_scaling(rows, meta) -> list:
    failures = []
    vals = [r["neg2s2_log_flux_bound"] for r in rows]
    if any(b >= a for a, b in zip(vals, vals[1:])):
        failures.append(f"-2s^2 log(flux bound) not decreasing toward 1: {vals}")
    if any(not 1.0 <= v <= 2.2 for v in vals):
        failures.append(f"-2s^2 log(flux bound) outside [1, 2.2]: {vals}")
    smallest = min(rows, key=lambda r: r["sigma"])
    if smallest["sigma"] <= 0.26 and vals[-1] > 1.45:
        failures.append(f"terminal value {vals[-1]:.3f} > 1.45")
    for r in rows:
        if abs(r["sigma"] - 0.3) < 1e-9 and r["phi_source"] == "parity":
            ratio = r["phi"] / r["flux_bound_half"]
            if not (1.0 / 3.0 <= ratio <= 3.0):
                failures.append(
                    f"parity phi at sigma=0.3 not within factor 3 of bound: ratio={ratio:.3f}"
                )
    return failures


def _degenerate_row(args) -> dict:
    T, cfg = args
    seed = substream_index(cfg["seed"], int(round(T * 1e9)))
    target = Gaussian1D()
    boundary = PointSet1D((0.0,))
    system = HamiltonianSystem(target)
    est = parity_conductance(system, boundary, T, cfg["n"], seed)
    bound = conductance_upper_bound(target, boundary, T)
    gap = spectral_gap(hmc_kernel_matrix(target, T, n_bins=cfg["bins"])).gap
    rayleigh = rayleigh_bound(target, T)
    return {
        "T": T,
        "phi": est.phi,
        "phi_se": est.std_error,
        "bound_half": bound["half"],
        "bound_corrected": bound["normal_mean_positive"],
        "gap": gap,
        "rayleigh": rayleigh,
        "log_phi_over_log_T": math.log(est.phi) / math.log(T) if 0 < T < 1 else float("nan"),
        "log_gap_over_log_T": math.log(gap) / math.log(T) if 0 < T < 1 else float("nan"),
        "gap_minus_rayleigh": gap - rayleigh,
    }


def run_degenerate_study(cfg: dict, workers: int = 1) -> tuple:
    T_list = cfg["T_list"]
    if any(not 0 < t <= 1.57 for t in T_list):
        raise ConfigError("degenerate study expects T in (0, pi/2]")
    rows = _pmap(_degenerate_row, [(t, cfg) for t in T_list], workers)
    return rows, {}


def check_degenerate(rows, meta) -> list:
    failures = []
    for r in rows:
        if abs(r["gap_minus_rayleigh"]) > 1e-3:
            failures.append(
                f"T={r['T']}: grid gap {r['gap']:.6f} vs 1 - cos T {r['rayleigh']:.6f} "
                "differ by more than 1e-3"
            )
        lo, hi = 0.5 * r["phi"] ** 2, 2.0 * r["phi"]
        if not (lo - 3.0 * r["phi_se"] * r["phi"] <= r["gap"] <= hi + 6.0 * r["phi_se"]):
            failures.append(
                f"T={r['T']}: Cheeger sandwich violated: "
                f"{lo:.5g} <= {r['gap']:.5g} <= {hi:.5g}"
            )
    return failures


def run_figure(cfg: dict, workers: int = 1) -> tuple:
    rows = gap_surface(
        sorted(cfg["a_list"]),
        sorted(cfg["T_list"]),
        n_bins=cfg["bins"],
        quad_order=cfg["quad_order"],
        check_convergence=cfg["convergence_audit"],
        workers=workers,
    )
    out = [
        {
            "a": r["a"],
            "T": r["T"],
            "gap": r["gap"],
            "lambda2": r["lambda2"],
            "converged": "" if r["converged"] is None else r["converged"],
        }
        for r in rows
    ]
    return out, {"bins": cfg["bins"], "quad_order": cfg["quad_order"]}


def check_figure(rows, meta) -> list:
    failures = []
    col0 = {round(r["T"], 12): r["gap"] for r in rows if r["a"] == 0.0}
    anchor_T = round(math.pi / 2, 12)
    if anchor_T in col0:
        if abs(col0[anchor_T] - 1.0) > 1e-3:
            failures.append(f"a=0, T=pi/2 gap {col0[anchor_T]:.6f} not within 1e-3 of 1")
        for frac in (1, 2, 3):
            t = round(frac * math.pi / 8, 12)
            if t in col0:
                linear = (frac / 4.0) * col0[anchor_T]
                if abs(col0[t] - linear) > 0.15 * linear:
                    failures.append(
                        f"a=0, T={float(t):.4f}: gap {col0[t]:.4f} not within 15% of the "
                        f"linear interpolation {linear:.4f}"
                    )
    slope_T = 1.0
    a_fit = [1.5, 2.0, 2.5]
    if all(any(r["a"] == a and r["T"] == slope_T for r in rows) for a in a_fit):
        slope = fit_log_gap_slope(rows, slope_T, a_fit)
        if not -0.6 <= slope <= -0.4:
            failures.append(f"log-gap vs a^2 slope {slope:.3f} outside -0.5 +- 0.1")
    return failures


def _hitting_row(args) -> dict:
    sigma, cfg = args
    seed = substream_index(cfg["seed"], int(round(sigma * 1e6)))
    target = GaussianMixture1D(sigma)
    boundary = PointSet1D((0.0,))
    kernel = HmcKernel(target, sigma)
    taus, cens = hitting_times(
        kernel, cfg["x"], boundary, cfg["replicas"], horizon=cfg["horizon"], seed=seed
    )
    phi_flux = conductance_upper_bound(target, boundary, sigma)["normal_mean_positive"]
    med = float(np.median(taus))
    ratio = math.log(med) / (-math.log(phi_flux)) if med > 1 else 0.0
    q = np.quantile(taus, [0.25, 0.5, 0.75, 0.9])
    return {
        "sigma": sigma,
        "x": cfg["x"],
        "replicas": cfg["replicas"],
        "tau_q25": float(q[0]),
        "tau_median": med,
        "tau_q75": float(q[2]),
        "tau_q90": float(q[3]),
        "tau_mean": float(np.mean(taus)),
        "censored": int(np.sum(cens)),
        "phi_flux": phi_flux,
        "log_ratio": ratio,
    }


def run_hitting(cfg: dict, workers: int = 1) -> tuple:
    if cfg["x"] >= 0.0:
        raise ConfigError("hitting start x must lie inside S = (-inf, 0)")
    sigmas = sorted(cfg["sigmas"], reverse=True)
    rows = _pmap(_hitting_row, [(s, cfg) for s in sigmas], workers)
    warnings = [f"sigma={r['sigma']}: {r['censored']} censored" for r in rows if r["censored"]]
    return rows, {"warnings": warnings}


def check_hitting(rows, meta) -> list:
    failures = []
    for r in rows:
        if abs(r["sigma"] - 0.4) < 1e-9 and not 0.6 <= r["log_ratio"] <= 1.3:
            failures.append(
                f"sigma=0.4: log median tau / -log phi = {r['log_ratio']:.3f} outside [0.6, 1.3]"
            )
    return failures


def run_drift(cfg: dict) -> tuple:
    sigma, x, n, seed = cfg["sigma"], cfg["x"], cfg["n"], cfg["seed"]
    target = GaussianMixture1D(sigma)
    rows = []
    for idx, (name, kernel) in enumerate(
        (("hmc", HmcKernel(target, sigma)), ("rwm", RwmKernel(target, sigma)))
    ):
        est = lyapunov_drift(kernel, x, n, sigma=sigma, seed=substream_index(seed, idx))
        rows.append(
            {
                "kernel": name,
                "ratio": est.ratio,
                "se": est.std_error,
                "ucb95": est.ucb95,
                "in_drift_region": est.in_drift_region,
                "passed": est.passed,
                "n": est.n_samples,
            }
        )
    return rows, {}


def check_drift(rows, meta) -> list:
    return [
        f"{r['kernel']}: drift upper bound {r['ucb95']:.4f} not below 1"
        for r in rows
        if not r["passed"]
    ]


def run_chains(cfg: dict) -> tuple:
    target = target_from_config(cfg)
    kind = cfg["kernel"]
    if kind == "rwm":
        if "epsilon" not in cfg:
            raise ConfigError("rwm chains need epsilon")
        kernel = RwmKernel(target, cfg["epsilon"])
    else:
        if "T" not in cfg:
            raise ConfigError("hmc/rhmc chains need T")
        if kind == "rhmc":
            from .samplers import RhmcKernel
            from .targets import identity_metric

            kernel = RhmcKernel(target, identity_metric(target.dim), cfg["T"], _flow_config(cfg))
        else:
            kernel = HmcKernel(target, cfg["T"], _flow_config(cfg))
    x0 = np.atleast_1d(np.asarray(cfg["x0"], dtype=float))
    if x0.size == 1 and target.dim > 1:
        x0 = np.full(target.dim, float(x0[0]))
    rows = []
    for chain in range(cfg["chains"]):
        path = run_chain(kernel, x0, cfg["steps"], seed=cfg["seed"], chain_id=chain)
        for step, q in enumerate(path):
            row = {"chain_id": chain, "step": step}
            for d in range(target.dim):
                row[f"q{d}"] = float(q[d])
            rows.append(row)
    return rows, {}


def check_chains(rows, meta) -> list:
    return []


EXPERIMENTS = {
    "conductance": (run_conductance, check_conductance),
    "flux": (run_flux, check_flux),
    "spectral-gap": (run_spectral_gap, check_spectral_gap),
    "scaling": (run_scaling_sweep, check_scaling),
    "degenerate": (run_degenerate_study, check_degenerate),
    "figure": (run_figure, check_figure),
    "hitting": (run_hitting, check_hitting),
    "drift": (run_drift, check_drift),
    "chains": (run_chains, check_chains),
}

_PARALLEL = {"scaling", "degenerate", "figure", "hitting"}


def run_experiment(experiment: str, config: dict) -> tuple:
    """Validate, run, and return (rows, meta) for a named experiment."""
    cfg = validate_config(experiment, config)
    runner, _ = EXPERIMENTS[experiment]
    workers = cfg.get("workers", 1)
    if experiment in _PARALLEL:
        rows, meta = runner(cfg, workers=workers)
    else:
        rows, meta = runner(cfg)
    meta = dict(meta)
    meta.update(
        {
            "experiment": experiment,
            "config": cfg,
            "seed": cfg.get("seed", 0),
            "tolerances": {
                "energy": cfg.get("energy_tol", FlowConfig().energy_tolerance),
                "flow_rtol": FlowConfig().rtol,
                "flow_atol": FlowConfig().atol,
            },
            "version": __version__,
            "build_id": build_id(),
        }
    )
    return rows, meta


def run_checks(experiment: str, rows, meta) -> list:
    _, checker = EXPERIMENTS[experiment]
    return checker(rows, meta)


# ---------------------------------------------------------------------------
# output rendering


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return f"{float(value):.12g}"
    return str(value)


def render_csv(rows: list) -> str:
    if not rows:
        return "\n"
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def build_id() -> str:
    """Content hash of the package source (git-style provenance tag)."""
    digest = hashlib.sha1()
    pkg_dir = os.path.dirname(__file__)
    for name in sorted(os.listdir(pkg_dir)):
        if name.endswith(".py"):
            with open(os.path.join(pkg_dir, name), "rb") as fh:
                digest.update(name.encode())
                digest.update(fh.read())
    return digest.hexdigest()[:12]


def write_outputs(out_dir: str, experiment: str, rows: list, meta: dict) -> tuple:
    """Write <experiment>.csv and <experiment>.meta.json under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{experiment}.csv")
    meta_path = os.path.join(out_dir, f"{experiment}.meta.json")
    with open(csv_path, "w") as fh:
        fh.write(render_csv(rows))
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")
    return csv_path, meta_path
