"""Vectorized flows and crossing counters for large replica sets.

The conductance and flux estimators integrate 1e5 to 1e6 trajectories per
run, which rules out one ODE-solver call per trajectory.  This module
advances whole ensembles at once: the closed-form rotation flow when the
target is a product of centered Gaussians, otherwise a fixed-step RK4
whose step obeys the same curvature cap as the dense integrator (so the
side function cannot change sign unseen between mesh points).

Counting across a step uses the endpoint side values plus a cubic-Hermite
near-miss check: an interval whose side derivative changes sign gets its
interior extremum reconstructed, catching grazing double crossings and
flagging near-tangencies for resampling.

Correctness is anchored elsewhere: tests compare these counters against
`geometry.count_crossings` (dense output + bisection refinement) on
shared trajectories.
"""

from __future__ import annotations

import numpy as np

from .dynamics import HamiltonianSystem, IntegratorFailure

__all__ = ["flow_endpoints", "count_crossings_ensemble", "ensemble_step_size"]

_TWO_PI = 2.0 * np.pi


def ensemble_step_size(system: HamiltonianSystem, T: float) -> float:
    """Fixed RK4 step honoring both step caps, at least 8 steps over [0, T].

    The scan cap keeps sign changes visible between mesh points; the
    stiffness cap keeps the per-step RK4 error far below the energy
    guard even through the high-curvature saddle regions.
    """
    cap = min(
        0.5 * system.max_step_bound(),
        0.05 / system.target.stiffness_bound(),
    )
    if T <= 0:
        return cap
    n = max(8, int(np.ceil(T / cap)))
    return T / n


def _grad(system: HamiltonianSystem, q):
    if system.dim == 1:
        return system.target.grad_log_density(q)
    return system.target.grad_log_density(q)


def _rk4_step(system, q, p, h):
    k1q = p
    k1p = _grad(system, q)
    k2q = p + 0.5 * h * k1p
    k2p = _grad(system, q + 0.5 * h * k1q)
    k3q = p + 0.5 * h * k2p
    k3p = _grad(system, q + 0.5 * h * k2q)
    k4q = p + h * k3p
    k4p = _grad(system, q + h * k3q)
    return (
        q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )


def _rk4_sweep(system, q, p, T, h, observe=None):
    """Advance (q, p) ensembles to time T; call observe after each step.

    Rows that step across a gradient kink are redone in two sub-steps
    split at the (linearly estimated) crossing time, so the
    discontinuity sits at a step boundary instead of mid-stage.
    """
    n_steps = max(1, int(round(T / h)))
    h = T / n_steps
    kinks = system.target.kinks if system.dim == 1 else ()
    for _ in range(n_steps):
        q1, p1 = _rk4_step(system, q, p, h)
        for c in kinks:
            crossed = (q - c) * (q1 - c) < 0.0
            if np.any(crossed):
                qc, pc = q[crossed], p[crossed]
                # per-row step lengths broadcast through the RK4 stages
                theta = np.clip((c - qc) / (q1[crossed] - qc), 0.05, 0.95)
                qm, pm = _rk4_step(system, qc, pc, theta * h)
                qf, pf = _rk4_step(system, qm, pm, (1.0 - theta) * h)
                q1[crossed], p1[crossed] = qf, pf
        q, p = q1, p1
        if observe is not None:
            observe(q, p, h)
    return q, p


def _exact_endpoints(system, q, p, T):
    var = np.asarray(system.target.gaussian_variances, dtype=float)
    omega = 1.0 / np.sqrt(var)
    if system.dim == 1:
        w = float(omega[0])
        c, s = np.cos(w * T), np.sin(w * T)
        return q * c + (p / w) * s, p * c - q * w * s
    c, s = np.cos(omega * T), np.sin(omega * T)
    return q * c + (p / omega) * s, p * c - q * omega * s


def flow_endpoints(system: HamiltonianSystem, q0, p0, T: float, h: float = None):
    """Positions and momenta of the flow at time T for an ensemble.

    q0, p0 have shape (n,) for 1D targets or (n, d) otherwise.
    """
    if system.metric is not None:
        raise NotImplementedError("ensemble flows cover isotropic systems only")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if T == 0.0:
        return q0.copy(), p0.copy()
    if system.has_exact_flow:
        return _exact_endpoints(system, q0, p0, T)
    if h is None:
        h = ensemble_step_size(system, T)
    q, p = _rk4_sweep(system, q0, p0, T, h)
    _energy_guard(system, q0, p0, q, p)
    return q, p


def _energy_guard(system, q0, p0, q1, p1, tol=None):
    # loose end-to-end relative drift check; the dense integrator carries
    # the strict 1e-8 guarantee, this catches a mis-sized ensemble step.
    # Kinked targets keep an O(h^2) error per force-discontinuity
    # crossing even with substepping, so their threshold is wider.
    if tol is None:
        tol = 2e-2 if system.target.kinks else 1e-5
    if system.dim == 1:
        h0 = -system.target.log_density(q0) + 0.5 * p0 * p0
        h1 = -system.target.log_density(q1) + 0.5 * p1 * p1
    else:
        h0 = -system.target.log_density(q0) + 0.5 * np.sum(p0 * p0, axis=-1)
        h1 = -system.target.log_density(q1) + 0.5 * np.sum(p1 * p1, axis=-1)
    if not h0.size:
        return
    drift = float(np.max(np.abs(h1 - h0) / (1.0 + np.abs(h0))))
    if drift > tol:
        raise IntegratorFailure(
            f"integrator failure: ensemble energy drift {drift:.2e} exceeds {tol:.0e}"
        )


def _count_harmonic(omega, q0, p0, T, level, tangent_tol=1e-9):
    """Exact crossing counts of a level for the rotation flow.

    The path is R cos(omega t - phase); crossings of `level` in [0, T]
    are two arithmetic progressions of angles, counted in closed form.
    """
    w = float(omega)
    amp = np.hypot(q0, p0 / w)
    counts = np.zeros(q0.shape, dtype=np.int64)
    tangent = np.zeros(q0.shape, dtype=bool)
    reach = amp > abs(level)
    graze = np.abs(amp - abs(level)) <= tangent_tol * np.maximum(1.0, amp)
    tangent |= graze
    sel = reach & ~graze
    if np.any(sel):
        ratio = np.clip(level / amp[sel], -1.0, 1.0)
        alpha = np.arccos(ratio)
        phase = np.arctan2(p0[sel] / w, q0[sel])
        th0 = -phase
        th1 = w * T - phase
        for root in (alpha, -alpha):
            counts_sel = np.floor((th1 - root) / _TWO_PI) - np.floor(
                (th0 - root) / _TWO_PI
            )
            counts[sel] += counts_sel.astype(np.int64)
    return counts, tangent


def count_crossings_ensemble(
    system: HamiltonianSystem,
    q0,
    p0,
    T: float,
    level: float = 0.0,
    axis: int = 0,
    h: float = None,
    tangent_tol: float = 1e-8,
):
    """Crossing counts of {q[axis] = level} over [0, T] for an ensemble.

    Returns (counts, tangency_flags, q_end, p_end).  Tangency-flagged
    rows should be resampled by the caller (grazing contacts carry zero
    probability under the continuous model but finite precision cannot
    classify them).
    """
    if system.metric is not None:
        raise NotImplementedError("ensemble counting covers isotropic systems only")
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if T == 0.0:
        z = np.zeros(q0.shape[0] if q0.ndim else (), dtype=np.int64)
        return z, np.zeros_like(z, dtype=bool), q0.copy(), p0.copy()

    if system.has_exact_flow and system.dim == 1:
        omega = 1.0 / np.sqrt(system.target.gaussian_variances[0])
        counts, tangent = _count_harmonic(omega, q0, p0, T, level)
        qT, pT = _exact_endpoints(system, q0, p0, T)
        return counts, tangent, qT, pT

    if h is None:
        h = ensemble_step_size(system, T)

    one_d = system.dim == 1
    side = (q0 if one_d else q0[:, axis]) - level
    dside = p0 if one_d else p0[:, axis]
    counts = np.zeros(side.shape, dtype=np.int64)
    tangent = np.zeros(side.shape, dtype=bool)
    state = {"s": side, "ds": dside}

    def observe(q, p, step):
        s0, d0 = state["s"], state["ds"]
        s1 = (q if one_d else q[:, axis]) - level
        d1 = p if one_d else p[:, axis]
        crossed = s0 * s1 < 0.0
        counts[crossed] += 1
        # near-miss check: interior extremum on steps with no sign change
        cand = (~crossed) & (d0 * d1 < 0.0)
        if np.any(cand):
            extremum = _hermite_extremum(
                s0[cand], d0[cand] * step, s1[cand], d1[cand] * step
            )
            scale = np.maximum(np.abs(s0[cand]), np.abs(s1[cand])) + 1.0
            graze = np.abs(extremum) <= tangent_tol * scale
            double = (extremum * s0[cand] < 0.0) & ~graze
            idx = np.nonzero(cand)[0]
            counts[idx[double]] += 2
            tangent[idx[graze]] = True
        # shallow crossings are tangency candidates too
        if np.any(crossed):
            slope = np.abs(d0[crossed]) + np.abs(d1[crossed])
            tangent[np.nonzero(crossed)[0][slope < 2.0 * tangent_tol]] = True
        state["s"], state["ds"] = s1, d1

    q1, p1 = _rk4_sweep(system, q0, p0, T, h, observe=observe)
    _energy_guard(system, q0, p0, q1, p1)
    return counts, tangent, q1, p1


def _hermite_extremum(s0, d0, s1, d1):
    """Extremal value of the cubic Hermite through (s0, d0), (s1, d1) on [0,1].

    d0, d1 are derivatives already scaled by the step length.  Returns
    the cubic's value at its interior critical point (s0 when none lies
    strictly inside the interval).
    """
    # cubic s(t) = a t^3 + b t^2 + d0 t + s0
    a = 2.0 * (s0 - s1) + d0 + d1
    b = 3.0 * (s1 - s0) - 2.0 * d0 - d1
    # s'(t) = 3a t^2 + 2b t + d0
    out = s0.copy()
    disc = 4.0 * b * b - 12.0 * a * d0
    ok = disc >= 0.0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    denom = np.where(np.abs(a) > 1e-300, 6.0 * a, 1.0)
    for sign in (1.0, -1.0):
        t = np.where(np.abs(a) > 1e-300, (-2.0 * b + sign * sq) / denom,
                     np.divide(-d0, 2.0 * b, out=np.full_like(b, -1.0),
                               where=np.abs(b) > 1e-300))
        inside = ok & (t > 0.0) & (t < 1.0)
        val = ((a * t + b) * t + d0) * t + s0
        # keep the extremum of largest excursion from s0
        better = inside & (np.abs(val - s0) > np.abs(out - s0))
        out = np.where(better, val, out)
    return out
