"""Target densities with exact gradients, CDFs, and half-space masses.

All built-ins are immutable after construction and safe for concurrent
reads.  One-dimensional targets evaluate elementwise on arrays of any
shape; multivariate targets act on the last axis.

Conventions used throughout:

* log densities are natural-log and normalized,
* mixture log densities go through log-sum-exp so that components with
  weight ``exp(-1/(2 sigma^2))`` survive small ``sigma``,
* Gaussian CDFs and quantiles use ``scipy.special.ndtr``/``ndtri``
  (documented erf implementations, absolute error well below 1e-12),
* quadrature domains are truncated at mean +- 10 max-scale, where the
  discarded tail mass is below 1e-22.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

__all__ = [
    "TargetDensity",
    "Gaussian1D",
    "GaussianMixture1D",
    "MaxGaussian1D",
    "IsotropicMixtureD",
    "DegenerateGaussian2D",
    "MetricField",
    "MetricValidation",
    "density",
    "halfline_mass",
    "validate_metric",
    "identity_metric",
    "target_from_config",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


class TargetDensity:
    """Base class for smooth (or piecewise-smooth) target densities."""

    dim = 1
    label = "target"
    # locations where the gradient is discontinuous (1D targets only)
    kinks = ()
    # per-coordinate variances when the target is a product of centered
    # Gaussians (enables exact Hamiltonian flow); None otherwise
    gaussian_variances = None

    def log_density(self, q):
        raise NotImplementedError

    def grad_log_density(self, q):
        raise NotImplementedError

    def density(self, q):
        return np.exp(self.log_density(q))

    # 1D-only interface ------------------------------------------------
    def cdf(self, x):
        raise NotImplementedError(f"{self.label} has no closed-form CDF")

    def quantile(self, u):
        raise NotImplementedError

    def halfspace_mass(self, axis: int, threshold: float, side: str = "below"):
        """P(x[axis] <= threshold) for side="below", complement for "above"."""
        raise NotImplementedError

    def sample(self, gen: np.random.Generator, n: int):
        """Exact stationary draws via inverse-CDF of stream uniforms."""
        raise NotImplementedError

    # numerical hints ---------------------------------------------------
    @property
    def grid_halfwidth(self) -> float:
        """Half-width of the working window, mean +- 8 max-scale."""
        return 8.0

    def curvature_bound(self) -> float:
        """Max of the step-control proxy |grad log pi(q)| / (1 + |q|).

        Evaluated on a deterministic grid over the working window; used
        to cap integrator steps so boundary crossings cannot slip
        between mesh points.
        """
        hw = self.grid_halfwidth
        qs = np.linspace(-hw, hw, 2001)
        if self.dim == 1:
            g = np.abs(self.grad_log_density(qs))
            proxy = g / (1.0 + np.abs(qs))
        else:
            proxy = 0.0
            for axis in range(self.dim):
                pts = np.zeros((qs.size, self.dim))
                pts[:, axis] = qs
                g = np.linalg.norm(self.grad_log_density(pts), axis=-1)
                proxy = np.maximum(proxy, g / (1.0 + np.abs(qs)))
        return float(np.max(proxy))

    def stiffness_bound(self) -> float:
        """Largest local oscillation frequency sqrt(max |d^2 log pi|).

        The gradient-based proxy vanishes at saddle points where the
        curvature peaks (mixtures between modes), so fixed-step error
        control needs this second-derivative scan as well.  Points next
        to gradient kinks are excluded: the jump is handled by event
        splitting, not step refinement.
        """
        hw = self.grid_halfwidth
        qs = np.linspace(-hw, hw, 4001)
        step = qs[1] - qs[0]
        if self.dim == 1:
            g = np.asarray(self.grad_log_density(qs), dtype=float)
            curv = np.abs(np.diff(g)) / step
            mids = 0.5 * (qs[:-1] + qs[1:])
            for c in self.kinks:
                curv[np.abs(mids - c) < 2.0 * step] = 0.0
            peak = float(np.max(curv)) if curv.size else 1.0
        else:
            peak = 1.0
            for axis in range(self.dim):
                pts = np.zeros((qs.size, self.dim))
                pts[:, axis] = qs
                g = np.asarray(self.grad_log_density(pts), dtype=float)[:, axis]
                peak = max(peak, float(np.max(np.abs(np.diff(g)) / step)))
        return float(np.sqrt(max(peak, 1.0)))


def _check_finite(q):
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite point passed to target density")
    return q


def _halfline(side: str, below: float) -> float:
    if side == "below":
        return below
    if side == "above":
        return 1.0 - below
    raise ValueError(f"side must be 'below' or 'above', got {side!r}")


@dataclass(frozen=True)
class Gaussian1D(TargetDensity):
    """Standard normal target N(0, 1)."""

    dim: int = field(default=1, init=False)
    label: str = field(default="gauss1d", init=False)
    gaussian_variances = (1.0,)

    def log_density(self, q):
        q = np.asarray(q, dtype=float)
        return -0.5 * q * q - 0.5 * _LOG_2PI

    def grad_log_density(self, q):
        return -np.asarray(q, dtype=float)

    def cdf(self, x):
        return ndtr(np.asarray(x, dtype=float))

    def quantile(self, u):
        return ndtri(np.asarray(u, dtype=float))

    def halfspace_mass(self, axis, threshold, side="below"):
        if axis != 0:
            raise ValueError("Gaussian1D has a single axis")
        return _halfline(side, float(ndtr(threshold)))

    def sample(self, gen, n):
        from .rng import uniforms

        return ndtri(uniforms(gen, n))


@dataclass(frozen=True)
class GaussianMixture1D(TargetDensity):
    """Even two-mode mixture: half N(-1, sigma^2) plus half N(1, sigma^2)."""

    sigma: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "label", f"mixture1d(sigma={self.sigma:g})")

    @property
    def grid_halfwidth(self):
        return 8.0 * (1.0 + self.sigma)

    def _component_logs(self, q):
        q = np.asarray(q, dtype=float)
        s2 = self.sigma * self.sigma
        la = -0.5 * (q + 1.0) ** 2 / s2
        lb = -0.5 * (q - 1.0) ** 2 / s2
        return la, lb

    def log_density(self, q):
        la, lb = self._component_logs(q)
        m = np.maximum(la, lb)
        lse = m + np.log(0.5 * np.exp(la - m) + 0.5 * np.exp(lb - m))
        return lse - np.log(self.sigma) - 0.5 * _LOG_2PI

    def grad_log_density(self, q):
        q = np.asarray(q, dtype=float)
        la, lb = self._component_logs(q)
        m = np.maximum(la, lb)
        wa = np.exp(la - m)
        wb = np.exp(lb - m)
        s2 = self.sigma * self.sigma
        return (wa * (-(q + 1.0)) + wb * (-(q - 1.0))) / (s2 * (wa + wb))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * ndtr((x + 1.0) / self.sigma) + 0.5 * ndtr((x - 1.0) / self.sigma)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        lo = np.full(u.shape, -1.0 - 14.0 * self.sigma)
        hi = np.full(u.shape, 1.0 + 14.0 * self.sigma)
        # 90 bisection steps: interval shrinks below double precision
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            high = self.cdf(mid) >= u
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)
        return 0.5 * (lo + hi)

    def halfspace_mass(self, axis, threshold, side="below"):
        if axis != 0:
            raise ValueError("GaussianMixture1D has a single axis")
        return _halfline(side, float(self.cdf(threshold)))

    def sample(self, gen, n):
        from .rng import uniforms

        return self.quantile(uniforms(gen, n))


@dataclass(frozen=True)
class MaxGaussian1D(TargetDensity):
    """Density proportional to max of two unit normals centered at -a, +a.

    Normalizing constant is 2 F(a) with F the standard normal CDF.  The
    gradient jumps at q = 0 for a > 0; the symmetric subgradient 0 is
    used there and trajectories that step across it carry a flag.
    """

    a: float
    dim: int = field(default=1, init=False)

    def __post_init__(self):
        if self.a < 0:
            raise ValueError("a must be nonnegative")
        object.__setattr__(self, "label", f"maxgauss1d(a={self.a:g})")
        if self.a == 0.0:
            object.__setattr__(self, "gaussian_variances", (1.0,))
        else:
            object.__setattr__(self, "kinks", (0.0,))

    @property
    def grid_halfwidth(self):
        return 8.0 * (1.0 + self.a)

    @property
    def _log_norm(self):
        return float(np.log(2.0 * ndtr(self.a)))

    def log_density(self, q):
        q = np.asarray(q, dtype=float)
        return -0.5 * (np.abs(q) - self.a) ** 2 - 0.5 * _LOG_2PI - self._log_norm

    def grad_log_density(self, q):
        q = np.asarray(q, dtype=float)
        # sign(0) = 0 realizes the symmetric subgradient at the kink
        return -(np.abs(q) - self.a) * np.sign(q)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        fa = ndtr(self.a)
        below = ndtr(x + self.a)
        above = fa + ndtr(x - self.a) - ndtr(-self.a)
        return np.where(x < 0.0, below, above) / (2.0 * fa)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        fa = ndtr(self.a)
        left = ndtri(np.minimum(2.0 * fa * u, 1.0 - 1e-17)) - self.a
        right = ndtri(np.clip(2.0 * fa * u - fa + ndtr(-self.a), 1e-17, 1.0 - 1e-17)) + self.a
        return np.where(u < 0.5, left, right)

    def halfspace_mass(self, axis, threshold, side="below"):
        if axis != 0:
            raise ValueError("MaxGaussian1D has a single axis")
        return _halfline(side, float(self.cdf(threshold)))

    def sample(self, gen, n):
        from .rng import uniforms

        return self.quantile(uniforms(gen, n))


@dataclass(frozen=True)
class IsotropicMixtureD(TargetDensity):
    """d-dimensional even mixture with centers (-1,0,...,0), (1,0,...,0).

    The axis-0 marginal is GaussianMixture1D(sigma); every other
    coordinate is N(0, sigma^2) independent of the rest.
    """

    sigma: float
    dim: int = 2

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("IsotropicMixtureD needs dim >= 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(
            self, "label", f"mixture{self.dim}d(sigma={self.sigma:g})"
        )
        object.__setattr__(self, "_marginal", GaussianMixture1D(self.sigma))

    @property
    def grid_halfwidth(self):
        return 8.0 * (1.0 + self.sigma)

    def log_density(self, q):
        q = _as_points(q, self.dim)
        s2 = self.sigma * self.sigma
        rest = -0.5 * np.sum(q[..., 1:] ** 2, axis=-1) / s2
        la = -0.5 * (q[..., 0] + 1.0) ** 2 / s2
        lb = -0.5 * (q[..., 0] - 1.0) ** 2 / s2
        m = np.maximum(la, lb)
        lse = m + np.log(0.5 * np.exp(la - m) + 0.5 * np.exp(lb - m))
        return lse + rest - self.dim * (np.log(self.sigma) + 0.5 * _LOG_2PI)

    def grad_log_density(self, q):
        q = _as_points(q, self.dim)
        s2 = self.sigma * self.sigma
        la = -0.5 * (q[..., 0] + 1.0) ** 2 / s2
        lb = -0.5 * (q[..., 0] - 1.0) ** 2 / s2
        m = np.maximum(la, lb)
        wa = np.exp(la - m)
        wb = np.exp(lb - m)
        g = -q / s2
        g[..., 0] = (wa * (-(q[..., 0] + 1.0)) + wb * (-(q[..., 0] - 1.0))) / (
            s2 * (wa + wb)
        )
        return g

    def halfspace_mass(self, axis, threshold, side="below"):
        if axis == 0:
            below = float(self._marginal.cdf(threshold))
        elif 0 < axis < self.dim:
            below = float(ndtr(threshold / self.sigma))
        else:
            raise ValueError(f"axis {axis} out of range for dim {self.dim}")
        return _halfline(side, below)

    def sample(self, gen, n):
        from .rng import uniforms

        u = uniforms(gen, (n, self.dim))
        out = np.empty((n, self.dim))
        out[:, 0] = self._marginal.quantile(u[:, 0])
        out[:, 1:] = self.sigma * ndtri(u[:, 1:])
        return out


@dataclass(frozen=True)
class DegenerateGaussian2D(TargetDensity):
    """Centered bivariate normal with covariance diag(1, sigma^2)."""

    sigma: float
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "label", f"degenerate2d(sigma={self.sigma:g})")
        object.__setattr__(self, "gaussian_variances", (1.0, self.sigma**2))

    def log_density(self, q):
        q = _as_points(q, 2)
        s2 = self.sigma * self.sigma
        return (
            -0.5 * q[..., 0] ** 2
            - 0.5 * q[..., 1] ** 2 / s2
            - _LOG_2PI
            - np.log(self.sigma)
        )

    def grad_log_density(self, q):
        q = _as_points(q, 2)
        g = -q.copy()
        g[..., 1] /= self.sigma * self.sigma
        return g

    def halfspace_mass(self, axis, threshold, side="below"):
        if axis == 0:
            below = float(ndtr(threshold))
        elif axis == 1:
            below = float(ndtr(threshold / self.sigma))
        else:
            raise ValueError("DegenerateGaussian2D has axes 0 and 1")
        return _halfline(side, below)

    def sample(self, gen, n):
        from .rng import uniforms

        u = uniforms(gen, (n, 2))
        out = ndtri(u)
        out[:, 1] *= self.sigma
        return out


def _as_points(q, dim):
    q = _check_finite(q)
    if q.shape[-1] != dim:
        raise ValueError(f"expected last axis of size {dim}, got shape {q.shape}")
    return q


# ---------------------------------------------------------------------------
# module-level operations


def density(target: TargetDensity, q):
    """Density value exp(log pi(q)); underflows cleanly to 0."""
    q = _check_finite(q)
    return np.exp(target.log_density(q))


def halfline_mass(target: TargetDensity, threshold: float) -> float:
    """Mass of (-inf, threshold] for a one-dimensional target.

    Uses the closed-form CDF when the target provides one, otherwise
    adaptive quadrature on the 10-max-scale truncation to 1e-10.
    """
    if target.dim != 1:
        raise ValueError("halfline_mass is defined for 1D targets")
    threshold = float(threshold)
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    try:
        return float(target.cdf(threshold))
    except NotImplementedError:
        from scipy.integrate import quad

        lo = -1.25 * target.grid_halfwidth  # 10 max-scale truncation
        if threshold <= lo:
            return 0.0
        val, _ = quad(
            lambda x: float(np.exp(target.log_density(x))),
            lo,
            threshold,
            epsabs=1e-10,
            limit=200,
        )
        return float(val)


# ---------------------------------------------------------------------------
# Riemannian metrics


@dataclass(frozen=True)
class MetricField:
    """Position-dependent SPD metric G(q) for Riemannian HMC.

    derivative callables are optional; when absent, central finite
    differences with step 1e-6 are used (documented accuracy warning:
    metric-derivative terms are then only good to about 1e-8).
    """

    G: Callable[[np.ndarray], np.ndarray]
    G_inv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    log_det_G: Optional[Callable[[np.ndarray], float]] = None
    grad_quadratic: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    grad_log_det: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-6
    label: str = "metric"
    # identity everywhere: Riemannian kernels then reduce exactly to the
    # isotropic ones and are dispatched through the same flow path
    constant_identity: bool = False

    def metric(self, q):
        return np.asarray(self.G(np.asarray(q, dtype=float)), dtype=float)

    def metric_inv(self, q):
        if self.G_inv is not None:
            return np.asarray(self.G_inv(np.asarray(q, dtype=float)), dtype=float)
        return np.linalg.inv(self.metric(q))

    def logdet(self, q):
        if self.log_det_G is not None:
            return float(self.log_det_G(np.asarray(q, dtype=float)))
        sign, val = np.linalg.slogdet(self.metric(q))
        if sign <= 0:
            raise ValueError(f"metric is not positive definite at q={q}")
        return float(val)

    def d_quadratic(self, q, p):
        """Gradient in q of p^T G^{-1}(q) p."""
        if self.grad_quadratic is not None:
            return np.asarray(self.grad_quadratic(q, p), dtype=float)
        return self._central(lambda x: float(p @ self.metric_inv(x) @ p), q)

    def d_logdet(self, q):
        if self.grad_log_det is not None:
            return np.asarray(self.grad_log_det(q), dtype=float)
        return self._central(self.logdet, q)

    def _central(self, f, q):
        q = np.asarray(q, dtype=float)
        out = np.empty_like(q)
        h = self.fd_step
        for i in range(q.size):
            e = np.zeros_like(q)
            e[i] = h
            out[i] = (f(q + e) - f(q - e)) / (2.0 * h)
        return out


def identity_metric(dim: int) -> MetricField:
    eye = np.eye(dim)
    zeros = np.zeros(dim)
    return MetricField(
        G=lambda q: eye,
        G_inv=lambda q: eye,
        log_det_G=lambda q: 0.0,
        grad_quadratic=lambda q, p: zeros,
        grad_log_det=lambda q: zeros,
        label="identity",
        constant_identity=True,
    )


@dataclass
class MetricValidation:
    """Sampled singular-value report for a metric over a box."""

    passed: bool
    min_singular: float
    max_singular: float
    n_samples: int
    bounds: tuple
    worst_point: Optional[np.ndarray] = None


def validate_metric(
    metric: MetricField,
    box: Sequence[tuple],
    n_samples: int,
    bounds: tuple = (1e-12, 1e12),
    seed: int = 0,
) -> MetricValidation:
    """Check the bounded-singular-value assumption on a compact box.

    Raises on any non-SPD sample, naming the offending point; otherwise
    reports the sampled singular-value range against the configured
    bounds.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    box = [tuple(map(float, b)) for b in box]
    if any(b[1] < b[0] for b in box):
        raise ValueError("box is empty")
    from .rng import substream

    gen = substream(seed, "validate_metric")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    dim = len(box)
    smin, smax = np.inf, 0.0
    worst = None
    for _ in range(int(n_samples)):
        q = lo + (hi - lo) * gen.random(dim)
        g = metric.metric(q)
        if not np.allclose(g, g.T, atol=1e-10):
            raise ValueError(f"metric not symmetric at point {q}")
        sv = np.linalg.svd(g, compute_uv=False)
        if sv[-1] <= 0 or not np.all(np.isfinite(sv)):
            raise ValueError(f"metric not positive definite at point {q}")
        try:
            np.linalg.cholesky(g)
        except np.linalg.LinAlgError:
            raise ValueError(f"metric not positive definite at point {q}") from None
        if sv[-1] < smin:
            smin, worst = float(sv[-1]), q.copy()
        smax = max(smax, float(sv[0]))
    lam_min, lam_max = bounds
    passed = (smin >= lam_min) and (smax <= lam_max)
    return MetricValidation(
        passed=passed,
        min_singular=smin,
        max_singular=smax,
        n_samples=int(n_samples),
        bounds=(float(lam_min), float(lam_max)),
        worst_point=worst,
    )


# ---------------------------------------------------------------------------
# config plumbing

_KINDS = ("mixture1d", "maxgauss1d", "mixtureNd", "gauss1d", "degenerate2d")


def target_from_config(config: dict) -> TargetDensity:
    """Build a target from the JSON config object {"target": {...}}."""
    spec = config.get("target", config)
    kind = spec.get("kind")
    if kind == "gauss1d":
        return Gaussian1D()
    if kind == "mixture1d":
        return GaussianMixture1D(sigma=float(spec["sigma"]))
    if kind == "maxgauss1d":
        return MaxGaussian1D(a=float(spec["a"]))
    if kind == "mixtureNd":
        return IsotropicMixtureD(dim=int(spec["dim"]), sigma=float(spec["sigma"]))
    if kind == "degenerate2d":
        return DegenerateGaussian2D(sigma=float(spec["sigma"]))
    raise ValueError(f"unknown target kind {kind!r}; expected one of {_KINDS}")
