"""Target densities: values, gradients, masses, metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import ndtr

from hmcgap.rng import substream
from hmcgap.targets import (
    DegenerateGaussian2D,
    Gaussian1D,
    GaussianMixture1D,
    IsotropicMixtureD,
    MaxGaussian1D,
    MetricField,
    density,
    halfline_mass,
    identity_metric,
    target_from_config,
    validate_metric,
)

ALL_1D = [
    Gaussian1D(),
    GaussianMixture1D(0.5),
    GaussianMixture1D(0.3),
    MaxGaussian1D(0.0),
    MaxGaussian1D(1.5),
]

ALL_TARGETS = ALL_1D + [IsotropicMixtureD(sigma=0.5, dim=3), DegenerateGaussian2D(0.1)]


def _phi(x, mu=0.0, sd=1.0):
    return np.exp(-0.5 * ((x - mu) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))


class TestDensityValues:
    def test_mixture_at_origin(self):
        # oracle: half phi_{0.5}(1) + half phi_{0.5}(-1) by direct formula
        expected = 0.5 * _phi(0, -1, 0.5) + 0.5 * _phi(0, 1, 0.5)
        assert density(GaussianMixture1D(0.5), 0.0) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.10798193302637613, rel=1e-12)

    def test_standard_normal_mode(self):
        assert density(Gaussian1D(), 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-14)

    def test_maxgauss_degenerates_to_normal(self):
        t = MaxGaussian1D(0.0)
        for q in [-2.7, -0.4, 0.0, 1.3, 3.1]:
            assert density(t, q) == pytest.approx(_phi(q), abs=1e-12)

    def test_nonfinite_point_rejected(self):
        with pytest.raises(ValueError):
            density(Gaussian1D(), np.nan)
        with pytest.raises(ValueError):
            density(GaussianMixture1D(0.5), np.inf)


class TestHalflineMass:
    def test_symmetry_at_zero(self):
        assert halfline_mass(GaussianMixture1D(0.5), 0.0) == pytest.approx(0.5, abs=1e-14)
        assert halfline_mass(Gaussian1D(), 0.0) == pytest.approx(0.5, abs=1e-14)

    def test_mixture_left_mode(self):
        expected = 0.25 + 0.5 * ndtr(-4.0)  # mixture CDF by erf evaluation
        assert halfline_mass(GaussianMixture1D(0.5), -1.0) == pytest.approx(expected, abs=1e-12)

    def test_quadrature_matches_cdf(self):
        t = GaussianMixture1D(0.4)
        for thr in [-1.3, 0.2, 1.7]:
            num, _ = quad(lambda x: float(density(t, x)), -1 - 10 * 0.4, thr, epsabs=1e-12, limit=200)
            assert halfline_mass(t, thr) == pytest.approx(num, abs=1e-9)

    def test_requires_1d(self):
        with pytest.raises(ValueError):
            halfline_mass(DegenerateGaussian2D(0.1), 0.0)

    @given(st.floats(-6, 6), st.floats(-6, 6))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_threshold(self, a, b):
        lo, hi = min(a, b), max(a, b)
        for t in [GaussianMixture1D(0.5), MaxGaussian1D(1.0)]:
            assert t.halfspace_mass(0, lo, "below") <= t.halfspace_mass(0, hi, "below") + 1e-15


class TestGradients:
    @pytest.mark.parametrize("target", ALL_TARGETS, ids=lambda t: t.label)
    def test_gradient_matches_central_differences(self, target):
        gen = substream(7, "gradcheck", target.label)
        h = 1e-5
        for _ in range(100):
            if target.dim == 1:
                q = float(4.0 * (gen.random() - 0.5) * 2)
                if target.kinks and min(abs(q - c) for c in target.kinks) < 0.01:
                    continue  # subgradient point: derivative not defined
                g = float(target.grad_log_density(q))
                fd = (target.log_density(q + h) - target.log_density(q - h)) / (2 * h)
                scale = max(1.0, abs(fd))
                assert abs(g - fd) / scale < 1e-5
            else:
                q = 2.0 * (gen.random(target.dim) - 0.5) * 2
                g = np.asarray(target.grad_log_density(q))
                for i in range(target.dim):
                    e = np.zeros(target.dim)
                    e[i] = h
                    fd = (target.log_density(q + e) - target.log_density(q - e)) / (2 * h)
                    assert abs(g[i] - fd) / max(1.0, abs(fd)) < 1e-5

    def test_maxgauss_subgradient_zero_at_kink(self):
        assert MaxGaussian1D(1.5).grad_log_density(0.0) == 0.0


class TestNormalizationAndSymmetry:
    @pytest.mark.parametrize("target", ALL_1D, ids=lambda t: t.label)
    def test_density_integrates_to_one(self, target):
        hw = 1.25 * target.grid_halfwidth  # 10 max-scale truncation
        val, _ = quad(lambda x: float(density(target, x)), -hw, hw, limit=400, epsabs=1e-10)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_mixture_normalization_tight(self):
        t = GaussianMixture1D(0.5)
        val, _ = quad(lambda x: float(density(t, x)), -6, 6, limit=400, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("target", [GaussianMixture1D(0.5), MaxGaussian1D(2.0)])
    def test_even_density(self, target):
        qs = np.linspace(0.0, 5.0, 41)
        np.testing.assert_allclose(
            target.log_density(qs), target.log_density(-qs), rtol=0, atol=1e-12
        )

    def test_maxgauss_normalizer(self):
        a = 1.7
        t = MaxGaussian1D(a)
        val, _ = quad(
            lambda x: np.exp(-0.5 * (abs(x) - a) ** 2) / np.sqrt(2 * np.pi), -30, 30, limit=400
        )
        assert val == pytest.approx(2 * ndtr(a), abs=1e-10)
        total, _ = quad(lambda x: float(density(t, x)), -30, 30, limit=400)
        assert total == pytest.approx(1.0, abs=1e-9)


class TestMarginals:
    def test_isotropic_mixture_axis0_marginal(self):
        t = IsotropicMixtureD(sigma=0.5, dim=2)
        m = GaussianMixture1D(0.5)
        for x0 in [-1.2, 0.0, 0.8]:
            marg, _ = quad(lambda y: float(np.exp(t.log_density(np.array([x0, y])))), -8, 8, limit=200)
            assert marg == pytest.approx(float(density(m, x0)), rel=1e-8)

    def test_degenerate_marginals(self):
        t = DegenerateGaussian2D(0.1)
        gen = substream(3, "deg")
        x = t.sample(gen, 200_000)
        assert np.var(x[:, 0]) == pytest.approx(1.0, rel=0.02)
        assert np.var(x[:, 1]) == pytest.approx(0.01, rel=0.02)
        assert t.halfspace_mass(1, 0.1, "below") == pytest.approx(float(ndtr(1.0)), abs=1e-12)


class TestQuantiles:
    @pytest.mark.parametrize(
        "target", [Gaussian1D(), GaussianMixture1D(0.5), GaussianMixture1D(0.3), MaxGaussian1D(1.5)],
        ids=lambda t: t.label,
    )
    def test_cdf_quantile_roundtrip(self, target):
        u = np.linspace(0.001, 0.999, 101)
        x = target.quantile(u)
        np.testing.assert_allclose(target.cdf(x), u, atol=1e-9)

    def test_samples_match_cdf(self):
        from scipy.stats import kstest

        t = GaussianMixture1D(0.5)
        x = t.sample(substream(11, "ks"), 50_000)
        assert kstest(x, lambda v: t.cdf(v)).pvalue > 0.01


class TestMetric:
    def test_identity_metric_passes(self):
        rep = validate_metric(identity_metric(2), [(-5, 5), (-5, 5)], 64, bounds=(0.5, 2.0))
        assert rep.passed and rep.min_singular == pytest.approx(1.0) and rep.max_singular == pytest.approx(1.0)

    def test_diagonal_metric_bounds(self):
        sigma = 0.1
        metric = MetricField(G=lambda q: np.diag([1.0, sigma**2 + q[0] ** 2]))
        rep = validate_metric(metric, [(-1, 1), (-1, 1)], 200, bounds=(0.01, 2.0))
        assert rep.passed
        assert rep.min_singular >= 0.01  # analytic eigenvalue floor sigma^2

    def test_degenerate_metric_fails_hard(self):
        # zero eigenvalue exactly at q[0] = 0
        metric = MetricField(G=lambda q: np.diag([1.0, q[0] ** 2]))
        with pytest.raises(ValueError, match="positive definite"):
            validate_metric(metric, [(0.0, 0.0), (-1, 1)], 50)

    def test_metric_inverse_consistency(self):
        metric = MetricField(G=lambda q: np.diag([1.0, 0.01 + q[0] ** 2]))
        gen = substream(0, "minv")
        for _ in range(10):
            q = gen.random(2) * 2 - 1
            gi = metric.metric_inv(q)
            np.testing.assert_allclose(metric.metric(q) @ gi, np.eye(2), atol=1e-10)

    def test_bad_bounds_reported(self):
        rep = validate_metric(identity_metric(2), [(-1, 1), (-1, 1)], 16, bounds=(2.0, 3.0))
        assert not rep.passed


class TestConfig:
    @pytest.mark.parametrize(
        "cfg,cls",
        [
            ({"kind": "gauss1d"}, Gaussian1D),
            ({"kind": "mixture1d", "sigma": 0.5}, GaussianMixture1D),
            ({"kind": "maxgauss1d", "a": 2.0}, MaxGaussian1D),
            ({"kind": "mixtureNd", "sigma": 0.5, "dim": 3}, IsotropicMixtureD),
            ({"kind": "degenerate2d", "sigma": 0.1}, DegenerateGaussian2D),
        ],
    )
    def test_kinds(self, cfg, cls):
        assert isinstance(target_from_config({"target": cfg}), cls)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown target kind"):
            target_from_config({"target": {"kind": "banana"}})

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            GaussianMixture1D(-0.5)
        with pytest.raises(ValueError):
            MaxGaussian1D(-1.0)
        with pytest.raises(ValueError):
            IsotropicMixtureD(sigma=0.5, dim=1)
