"""Seeded Markov kernels: random-walk Metropolis, idealized HMC, RHMC.

All randomness is drawn from counter-based streams keyed by
(seed, chain_id, step), so a chain is a pure function of its key and
replica sets can be executed with any worker layout without changing a
single draw.  Gaussian variates go through the inverse normal CDF, which
makes the rhmc kernel with the identity metric reproduce the hmc kernel
bit-for-bit under a shared seed.

The idealized HMC kernels have no accept/reject step: a trajectory that
cannot be computed within tolerance invalidates the run (it is never
silently retried or Metropolized).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import ndtri

from . import ensemble
from .dynamics import FlowConfig, HamiltonianSystem, PhasePoint, flow
from .geometry import Boundary
from .rng import substream, uniforms
from .targets import MetricField, TargetDensity

__all__ = [
    "RwmConfig",
    "HmcConfig",
    "ChainState",
    "HittingTimeSample",
    "DriftEstimate",
    "RwmKernel",
    "HmcKernel",
    "RhmcKernel",
    "rwm_step",
    "hmc_step",
    "rhmc_step",
    "run_chain",
    "hitting_time",
    "hitting_times",
    "TraceKernel",
    "trace_chain",
    "lyapunov_drift",
]


@dataclass(frozen=True)
class RwmConfig:
    """Random-walk Metropolis tuning: proposal standard deviation."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class HmcConfig:
    """Idealized HMC tuning: integration time plus flow tolerances."""

    T: float
    flow: FlowConfig = FlowConfig()
    riemannian: bool = False
    metric: Optional[MetricField] = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("integration time T must be positive")
        if self.riemannian and self.metric is None:
            raise ValueError("riemannian config requires a metric")


@dataclass(frozen=True)
class ChainState:
    """Current position plus the (seed, chain, step) stream address."""

    q: np.ndarray
    step: int = 0
    chain_id: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, dtype=float)))

    def gen(self) -> np.random.Generator:
        return substream(self.seed, self.chain_id, self.step)

    def advanced(self, q_next) -> "ChainState":
        return ChainState(q_next, self.step + 1, self.chain_id, self.seed)


class _Kernel:
    """Shared interface: single-state and vectorized one-step maps."""

    target: TargetDensity
    label: str

    @property
    def dim(self):
        return self.target.dim

    def step(self, q: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, qs: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class RwmKernel(_Kernel):
    """Algorithm: propose x + N(0, eps^2 Id), Metropolis accept on pi.

    Acceptance always compares log densities, never raw density ratios.
    """

    def __init__(self, target: TargetDensity, epsilon: float):
        RwmConfig(epsilon)  # validation
        self.target = target
        self.epsilon = float(epsilon)
        self.label = f"rwm(eps={epsilon:g})"

    def _logpi(self, q):
        return self.target.log_density(q)

    def step(self, q, gen):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        u = uniforms(gen, self.dim + 1)
        prop = q + self.epsilon * ndtri(u[: self.dim])
        x = q if self.dim > 1 else q[0]
        xhat = prop if self.dim > 1 else prop[0]
        if np.log(u[self.dim]) < self._logpi(xhat) - self._logpi(x):
            return prop
        return q.copy()

    def step_batch(self, qs, gen):
        qs = np.asarray(qs, dtype=float)
        n = qs.shape[0]
        u = uniforms(gen, (n, self.dim + 1))
        noise = ndtri(u[:, : self.dim])
        if self.dim == 1:
            prop = qs + self.epsilon * noise[:, 0]
        else:
            prop = qs + self.epsilon * noise
        accept = np.log(u[:, self.dim]) < self._logpi(prop) - self._logpi(qs)
        return np.where(accept if self.dim == 1 else accept[:, None], prop, qs)


class HmcKernel(_Kernel):
    """Idealized isotropic HMC: fresh N(0, Id) momentum, exact-flow advance."""

    def __init__(self, target: TargetDensity, T: float, flow_config: FlowConfig = FlowConfig()):
        HmcConfig(T, flow_config)
        self.target = target
        self.T = float(T)
        self.flow_config = flow_config
        self.system = HamiltonianSystem(target)
        self.label = f"hmc(T={T:g})"

    def step(self, q, gen):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        p = ndtri(uniforms(gen, self.dim))
        traj = flow(self.system, PhasePoint(q, p), self.T, self.flow_config)
        return np.atleast_1d(traj.q(self.T))

    def step_batch(self, qs, gen):
        qs = np.asarray(qs, dtype=float)
        p = ndtri(uniforms(gen, qs.shape))
        q1, _ = ensemble.flow_endpoints(self.system, qs, p, self.T)
        return q1

    def momenta_for(self, qs, gen):
        return ndtri(uniforms(gen, np.asarray(qs).shape))


class RhmcKernel(_Kernel):
    """Riemannian HMC: momentum N(0, G^{-1}(q)), Riemannian flow advance."""

    def __init__(
        self,
        target: TargetDensity,
        metric: MetricField,
        T: float,
        flow_config: FlowConfig = FlowConfig(),
    ):
        HmcConfig(T, flow_config, riemannian=True, metric=metric)
        self.target = target
        self.metric = metric
        self.T = float(T)
        self.flow_config = flow_config
        self.system = HamiltonianSystem(target, metric=metric)
        self.label = f"rhmc(T={T:g})"

    def draw_momentum(self, q, gen):
        z = ndtri(uniforms(gen, self.dim))
        g_inv = self.metric.metric_inv(np.atleast_1d(q))
        try:
            chol = np.linalg.cholesky(g_inv)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"metric factorization failed at q={q}: {exc}") from None
        return chol @ z

    def step(self, q, gen):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        p = self.draw_momentum(q, gen)
        if self.metric.constant_identity:
            # exact reduction: same flow path as the isotropic kernel
            iso = HamiltonianSystem(self.target)
            traj = flow(iso, PhasePoint(q, p), self.T, self.flow_config)
            return np.atleast_1d(traj.q(self.T))
        traj = flow(self.system, PhasePoint(q, p), self.T, self.flow_config)
        return np.atleast_1d(traj.q(self.T))


def rwm_step(state: ChainState, config: RwmConfig, target: TargetDensity) -> ChainState:
    """One Metropolis step from the state's addressed stream."""
    kernel = RwmKernel(target, config.epsilon)
    return state.advanced(kernel.step(state.q, state.gen()))


def hmc_step(state: ChainState, config: HmcConfig, target: TargetDensity) -> ChainState:
    """One idealized HMC step (no accept/reject)."""
    kernel = HmcKernel(target, config.T, config.flow)
    return state.advanced(kernel.step(state.q, state.gen()))


def rhmc_step(
    state: ChainState, config: HmcConfig, target: TargetDensity, metric: MetricField
) -> ChainState:
    """One Riemannian HMC step with momentum N(0, G^{-1}(q))."""
    kernel = RhmcKernel(target, metric, config.T, config.flow)
    return state.advanced(kernel.step(state.q, state.gen()))


def run_chain(kernel: _Kernel, x0, n_steps: int, seed: int, chain_id: int = 0):
    """Positions (n_steps + 1, d) of one chain under addressed streams."""
    d = kernel.dim
    out = np.empty((n_steps + 1, d))
    q = np.atleast_1d(np.asarray(x0, dtype=float))
    out[0] = q
    for step in range(n_steps):
        q = kernel.step(q, substream(seed, chain_id, step))
        out[step + 1] = q
    return out


@dataclass
class HittingTimeSample:
    """First exit step from S, censored at the horizon if never observed."""

    start: np.ndarray
    boundary_label: str
    tau: int
    censored: bool
    horizon: int


def hitting_time(
    kernel: _Kernel,
    x,
    boundary: Boundary,
    horizon: int = 10**8,
    seed: int = 0,
    chain_id: int = 0,
) -> HittingTimeSample:
    """First step index at which the chain leaves S = {side < 0}."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    q = np.atleast_1d(np.asarray(x, dtype=float))
    if not float(boundary.side(q if kernel.dim > 1 else q[0])) < 0:
        raise ValueError("hitting_time requires a start inside S")
    for step in range(int(horizon)):
        q = kernel.step(q, substream(seed, chain_id, step))
        if float(boundary.side(q if kernel.dim > 1 else q[0])) >= 0:
            return HittingTimeSample(np.atleast_1d(x), boundary.label, step + 1, False, horizon)
    return HittingTimeSample(np.atleast_1d(x), boundary.label, int(horizon), True, horizon)


def hitting_times(
    kernel: _Kernel,
    x,
    boundary: Boundary,
    n_replicas: int,
    horizon: int = 10**6,
    seed: int = 0,
    chain_offset: int = 0,
):
    """Vectorized replica hitting times; per-replica streams are preserved.

    Replica r consumes exactly the variates of (seed, chain_offset + r,
    step), so results match running each replica alone.
    """
    if kernel.dim != 1:
        raise NotImplementedError("replica hitting times implemented for 1D targets")
    q = np.full(n_replicas, float(np.asarray(x).reshape(-1)[0]))
    if not float(boundary.side(q[0])) < 0:
        raise ValueError("hitting_times requires a start inside S")
    taus = np.full(n_replicas, int(horizon), dtype=np.int64)
    censored = np.ones(n_replicas, dtype=bool)
    active = np.arange(n_replicas)
    is_hmc = isinstance(kernel, HmcKernel)
    for step in range(int(horizon)):
        if active.size == 0:
            break
        if is_hmc:
            p = np.empty(active.size)
            for i, r in enumerate(active):
                p[i] = ndtri(uniforms(substream(seed, chain_offset + int(r), step), 1))[0]
            q_new, _ = ensemble.flow_endpoints(kernel.system, q[active], p, kernel.T)
        else:
            q_new = np.empty(active.size)
            for i, r in enumerate(active):
                q_new[i] = kernel.step(
                    np.array([q[r]]), substream(seed, chain_offset + int(r), step)
                )[0]
        q[active] = q_new
        exited = np.asarray(boundary.side(q_new)) >= 0.0
        hit = active[exited]
        taus[hit] = step + 1
        censored[hit] = False
        active = active[~exited]
    return taus, censored


class TraceKernel(_Kernel):
    """Base kernel observed only on its visits to S = {side < 0}.

    Excursions longer than excursion_cap base steps mark the trace step
    censored (the state is then the first post-cap in-S position found,
    or the pre-excursion position if none).
    """

    def __init__(self, base: _Kernel, boundary: Boundary, excursion_cap: int = 10**6):
        self.base = base
        self.boundary = boundary
        self.excursion_cap = int(excursion_cap)
        self.target = base.target
        self.label = f"trace({base.label} on {boundary.label})"

    def _in_s(self, q):
        return float(self.boundary.side(q if self.dim > 1 else q[0])) < 0

    def run(self, x0, n_steps: int, seed: int, chain_id: int = 0):
        """Trace path (n_steps + 1, d) plus excursion stats.

        Returns (positions, excursion_lengths, censored_steps).
        """
        q = np.atleast_1d(np.asarray(x0, dtype=float))
        if not self._in_s(q):
            raise ValueError("trace chain must start inside S")
        out = np.empty((n_steps + 1, self.dim))
        out[0] = q
        excursions = np.zeros(n_steps, dtype=np.int64)
        censored = 0
        base_step = 0
        for t in range(n_steps):
            skipped = 0
            while True:
                q = self.base.step(q, substream(seed, chain_id, base_step))
                base_step += 1
                if self._in_s(q):
                    break
                skipped += 1
                if skipped >= self.excursion_cap:
                    censored += 1
                    q = out[t].copy()  # fall back to the last in-S position
                    break
            excursions[t] = skipped
            out[t + 1] = q
        return out, excursions, censored


def trace_chain(kernel: _Kernel, boundary: Boundary, excursion_cap: int = 10**6) -> TraceKernel:
    """Kernel of the chain observed only when it visits S."""
    return TraceKernel(kernel, boundary, excursion_cap)


@dataclass
class DriftEstimate:
    """Monte Carlo estimate of the one-step Lyapunov contraction (KV)/V."""

    ratio: float
    std_error: float
    ucb95: float
    n_samples: int
    in_drift_region: bool
    kernel_label: str

    @property
    def passed(self) -> bool:
        return self.in_drift_region and self.ucb95 < 1.0


def _log_v(x, sigma):
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        d1 = np.abs(x - 1.0)
        d2 = np.abs(x + 1.0)
    else:
        e1 = np.zeros(x.shape[-1])
        e1[0] = 1.0
        d1 = np.linalg.norm(x - e1, axis=-1)
        d2 = np.linalg.norm(x + e1, axis=-1)
    return np.minimum(d1, d2) / sigma


def lyapunov_drift(
    kernel: _Kernel,
    x,
    n_samples: int,
    sigma: float,
    seed: int = 0,
    block: int = 1 << 14,
) -> DriftEstimate:
    """Estimate (KV)(x) / V(x) for V(x) = exp(min |x -+ 1| / sigma).

    Everything is computed in log space so the drift function never
    overflows.  The pass criterion is an upper 95% confidence bound
    below 1; points within sigma of a mode center are reported as
    outside the drift region (V is at its floor there).
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    log_v0 = float(_log_v(x_arr if kernel.dim > 1 else x_arr[0], sigma))
    in_region = log_v0 > 1.0  # min mode distance exceeds sigma
    total, total_sq, count = 0.0, 0.0, 0
    n_blocks = (int(n_samples) + block - 1) // block
    for b in range(n_blocks):
        m = min(block, int(n_samples) - b * block)
        gen = substream(seed, "lyapunov", b)
        if kernel.dim == 1:
            qs = np.full(m, x_arr[0])
        else:
            qs = np.tile(x_arr, (m, 1))
        q1 = kernel.step_batch(qs, gen)
        log_v1 = _log_v(q1, sigma)
        r = np.exp(log_v1 - log_v0)
        total += float(np.sum(r))
        total_sq += float(np.sum(r * r))
        count += m
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0)
    se = float(np.sqrt(var / count))
    return DriftEstimate(
        ratio=float(mean),
        std_error=se,
        ucb95=float(mean + 1.6448536269514722 * se),
        n_samples=count,
        in_drift_region=bool(in_region),
        kernel_label=kernel.label,
    )
