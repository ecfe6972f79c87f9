"""Conductance estimators, flux conventions, Cheeger bounds."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmcgap import ensemble
from hmcgap.conductance import (
    CONVENTIONS,
    cheeger_interval,
    conductance_upper_bound,
    direct_conductance,
    flux_quadrature,
    linear_T_probe,
    parity_conductance,
    set_mass,
)
from hmcgap.dynamics import HamiltonianSystem, PhasePoint, flow
from hmcgap.geometry import Hyperplane, PointSet1D, count_crossings
from hmcgap.rng import normals, substream
from hmcgap.samplers import HmcKernel, RwmKernel
from hmcgap.targets import Gaussian1D, GaussianMixture1D, IsotropicMixtureD

B0 = PointSet1D((0.0,))


class TestDirect:
    def test_gaussian_orthant_oracle(self):
        # rotation kernel: P(Q < 0, Q' > 0) = T / (2 pi), so Phi = T / pi
        T = 0.5
        est = direct_conductance(HmcKernel(Gaussian1D(), T), B0, 100_000, seed=1)
        assert est.phi == pytest.approx(T / np.pi, abs=3 * est.std_error)

    def test_quarter_period_is_iid_resampling(self):
        est = direct_conductance(HmcKernel(Gaussian1D(), np.pi / 2), B0, 50_000, seed=2)
        assert est.phi == pytest.approx(0.5, abs=3 * est.std_error)

    def test_empty_retention_errors(self):
        b = PointSet1D((-1e6,))  # S carries no mass
        with pytest.raises(ValueError, match="too small"):
            direct_conductance(HmcKernel(Gaussian1D(), 0.5), b, 1000, seed=0)

    def test_rwm_kernel_supported(self):
        est = direct_conductance(RwmKernel(GaussianMixture1D(0.5), 0.5), B0, 50_000, seed=3)
        assert 0.0 < est.phi < 0.1  # same e^{-1/(2 sigma^2)} scale as HMC


class TestParity:
    def test_matches_direct_on_gaussian(self):
        T = 0.5
        par = parity_conductance(HamiltonianSystem(Gaussian1D()), B0, T, 100_000, seed=4)
        dir_ = direct_conductance(HmcKernel(Gaussian1D(), T), B0, 100_000, seed=5)
        tol = 3 * math.hypot(par.std_error, dir_.std_error)
        assert abs(par.phi - dir_.phi) <= tol
        assert par.phi == pytest.approx(T / np.pi, abs=3 * par.std_error)

    def test_matches_direct_on_mixture(self):
        sys = HamiltonianSystem(GaussianMixture1D(0.5))
        par = parity_conductance(sys, B0, 0.5, 100_000, seed=6)
        dir_ = direct_conductance(HmcKernel(GaussianMixture1D(0.5), 0.5), B0, 100_000, seed=7)
        tol = 3 * math.hypot(par.std_error, dir_.std_error)
        assert abs(par.phi - dir_.phi) <= tol

    def test_theorem_identity_is_algebraic(self):
        # phi == phi_plus * tilted / pi(S) exactly on the same sample
        est = parity_conductance(HamiltonianSystem(GaussianMixture1D(0.5)), B0, 0.5, 30_000, seed=8)
        c = est.components
        recon = c["phi_plus_mc"] * c["tilted_expectation"] / c["pi_S"]
        assert abs(recon - 2.0 * est.phi * c["pi_S"] / (2.0 * c["pi_S"])) < 1e-12
        assert recon == pytest.approx(est.phi, abs=1e-12)

    def test_full_period_even_crossings(self):
        # exact harmonic flow at T = 2 pi: every trajectory closes, N even
        est = parity_conductance(HamiltonianSystem(Gaussian1D()), B0, 2 * np.pi, 50_000, seed=9)
        assert est.phi == 0.0
        assert est.components["mean_n"] == pytest.approx(2.0, abs=0.05)  # Rice: E[N] = T / pi

    def test_zero_time(self):
        est = parity_conductance(HamiltonianSystem(Gaussian1D()), B0, 0.0, 1000, seed=10)
        assert est.phi == 0.0

    def test_mixture_stays_below_linear_ceiling(self):
        target = GaussianMixture1D(0.5)
        est = parity_conductance(HamiltonianSystem(target), B0, 0.5, 50_000, seed=11)
        bound = conductance_upper_bound(target, B0, 0.5)
        assert est.phi > 0.0
        assert est.phi <= bound["half"] + 3 * est.std_error

    def test_tangency_rate_negligible_at_defaults(self):
        # transversality holds almost everywhere: resampling stays rare
        for target in (Gaussian1D(), GaussianMixture1D(0.5)):
            est = parity_conductance(HamiltonianSystem(target), B0, 1.0, 50_000, seed=21)
            assert est.resample_count <= 1e-3 * est.n_samples

    def test_cheeger_interval_contains_grid_gap(self):
        # cross-module consistency: the spectral gap sits inside the
        # Cheeger interval built from the conductance estimate
        from hmcgap.spectral import hmc_kernel_matrix, spectral_gap

        target = GaussianMixture1D(0.5)
        est = parity_conductance(HamiltonianSystem(target), B0, 0.5, 100_000, seed=22)
        lo, hi = cheeger_interval(est.phi)
        gap = spectral_gap(hmc_kernel_matrix(target, 0.5)).gap
        slack = 3 * est.std_error
        assert lo - slack * est.phi <= gap <= hi + 2 * slack

    def test_hyperplane_in_higher_dimension(self):
        # the d-dim mixture's axis-0 hyperplane reproduces the 1D picture
        target = IsotropicMixtureD(sigma=0.5, dim=2)
        b = Hyperplane(normal=np.array([1.0, 0.0]), offset=0.0)
        est = parity_conductance(HamiltonianSystem(target), b, 0.5, 30_000, seed=12)
        est1 = parity_conductance(HamiltonianSystem(GaussianMixture1D(0.5)), B0, 0.5, 30_000, seed=13)
        assert est.phi == pytest.approx(est1.phi, abs=3 * math.hypot(est.std_error, est1.std_error))

    def test_resampling_terminates_and_counts(self, monkeypatch):
        real = ensemble.count_crossings_ensemble
        calls = {"n": 0}

        def flaky(system, q0, p0, T, **kw):
            counts, tangent, q1, p1 = real(system, q0, p0, T, **kw)
            calls["n"] += 1
            if calls["n"] == 1:  # poison a few trajectories once
                tangent = tangent.copy()
                tangent[:3] = True
            return counts, tangent, q1, p1

        import hmcgap.conductance as cond

        monkeypatch.setattr(cond.ensemble, "count_crossings_ensemble", flaky)
        est = parity_conductance(HamiltonianSystem(GaussianMixture1D(0.5)), B0, 0.5, 2_000, seed=14)
        assert est.resample_count == 3
        assert "suspect" not in " ".join(est.warnings)


class TestEnsembleAgainstDenseCounting:
    @pytest.mark.parametrize("target,T", [(Gaussian1D(), 2.0), (GaussianMixture1D(0.5), 1.5)])
    def test_counters_agree_trajectory_by_trajectory(self, target, T):
        sys = HamiltonianSystem(target)
        gen = substream(15, "xcheck", target.label)
        n = 150
        q0 = target.sample(gen, n)
        p0 = normals(gen, n)
        counts, tangent, _, _ = ensemble.count_crossings_ensemble(sys, q0, p0, T)
        for i in range(n):
            if tangent[i]:
                continue
            traj = flow(sys, PhasePoint(q0[i : i + 1], p0[i : i + 1]), T)
            rec = count_crossings(traj, B0)
            assert rec.count == counts[i], f"trajectory {i}: dense {rec.count} vs batch {counts[i]}"


class TestFluxQuadrature:
    def test_gaussian_corrected_value(self):
        # 0.5 * phi(0) / sqrt(2 pi) = 0.5 / (2 pi)
        fq = flux_quadrature(Gaussian1D(), B0, 0.5, "normal_mean_positive")
        assert fq.phi_plus == pytest.approx(0.5 / (2 * np.pi), rel=1e-12)
        assert fq.method == "quadrature_general"

    def test_mixture_half_convention_value(self):
        fq = flux_quadrature(GaussianMixture1D(0.5), B0, 0.5, "half")
        assert fq.phi_plus == pytest.approx(0.026995483256594032, rel=1e-12)
        assert fq.method == "quadrature_simple"

    def test_zero_time(self):
        assert flux_quadrature(Gaussian1D(), B0, 0.0).phi_plus == 0.0

    def test_convention_ratio(self):
        half = flux_quadrature(Gaussian1D(), B0, 1.0, "half").phi_plus
        corr = flux_quadrature(Gaussian1D(), B0, 1.0, "normal_mean_positive").phi_plus
        assert half / corr == pytest.approx(np.sqrt(2 * np.pi) / 2, rel=1e-12)  # 1.2533

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            flux_quadrature(Gaussian1D(), B0, 1.0, "midpoint")

    def test_unsupported_boundary(self):
        from hmcgap.geometry import circle_boundary

        with pytest.raises(ValueError, match="unsupported"):
            flux_quadrature(IsotropicMixtureD(sigma=0.5, dim=2), circle_boundary(1.0), 1.0)

    def test_matches_mc_half_n(self):
        # E[N] / 2 against the corrected quadrature constant, 2% band
        target = GaussianMixture1D(0.5)
        est = parity_conductance(HamiltonianSystem(target), B0, 0.5, 200_000, seed=16)
        fq = flux_quadrature(target, B0, 0.5, "normal_mean_positive")
        assert est.components["phi_plus_mc"] == pytest.approx(fq.phi_plus, rel=0.02)


class TestConductanceUpperBound:
    def test_mixture_value(self):
        bound = conductance_upper_bound(GaussianMixture1D(0.5), B0, 0.5)
        # (1 / sqrt(2 pi)) e^{-1/(2 sigma^2)} for sigma = 1/2
        assert bound["half"] == pytest.approx(np.exp(-2.0) / np.sqrt(2 * np.pi), rel=1e-12)

    def test_gaussian_value(self):
        bound = conductance_upper_bound(Gaussian1D(), B0, 0.5)
        assert bound["half"] == pytest.approx(0.19947114020071635, rel=1e-12)

    def test_linear_in_T(self):
        b1 = conductance_upper_bound(Gaussian1D(), B0, 0.3)
        b2 = conductance_upper_bound(Gaussian1D(), B0, 0.6)
        for conv in CONVENTIONS:
            assert b2[conv] == pytest.approx(2 * b1[conv], rel=1e-12)

    def test_sigma_trend_toward_one(self):
        # -2 sigma^2 log(flux bound) decreases toward 1 as sigma shrinks
        vals = []
        for sigma in [0.6, 0.5, 0.4, 0.3]:
            fq = flux_quadrature(GaussianMixture1D(sigma), B0, sigma, "half")
            vals.append(-2 * sigma**2 * math.log(fq.phi_plus))
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert all(v > 1.0 for v in vals)


class TestCheeger:
    def test_examples(self):
        assert cheeger_interval(0.1) == (pytest.approx(0.005), pytest.approx(0.2))
        assert cheeger_interval(0.0) == (0.0, 0.0)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            cheeger_interval(1.5)

    @given(st.floats(0.0, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_interval_ordering(self, phi):
        lo, hi = cheeger_interval(phi)
        assert 0.0 <= lo <= hi <= 2.0
        assert lo == pytest.approx(phi * phi / 2)


class TestLinearTProbe:
    def test_small_T_limit(self):
        sys = HamiltonianSystem(Gaussian1D())
        rows = linear_T_probe(sys, B0, [0.05, 0.1, 0.2], n=400_000, seed=17)
        for row in rows:
            assert row["below_ceiling"]
        assert rows[0]["phi_over_T"] == pytest.approx(1 / np.pi, rel=0.05)
        assert rows[0]["flux_constant"] == pytest.approx(1 / np.pi, rel=1e-12)

    def test_long_T_loses_per_unit_conductance(self):
        sys = HamiltonianSystem(Gaussian1D())
        rows = linear_T_probe(sys, B0, [0.1, 2 * np.pi], n=100_000, seed=18)
        assert rows[1]["phi_over_T"] < rows[0]["phi_over_T"]

    def test_sorted_positive_required(self):
        sys = HamiltonianSystem(Gaussian1D())
        with pytest.raises(ValueError):
            linear_T_probe(sys, B0, [0.2, 0.1], n=100, seed=0)


class TestSetMass:
    def test_point_boundary(self):
        assert set_mass(GaussianMixture1D(0.5), B0) == pytest.approx(0.5)

    def test_hyperplane_orientation(self):
        t = IsotropicMixtureD(sigma=0.5, dim=2)
        left = set_mass(t, Hyperplane(normal=np.array([1.0, 0.0]), offset=0.0))
        right = set_mass(t, Hyperplane(normal=np.array([-1.0, 0.0]), offset=0.0))
        assert left == pytest.approx(0.5) and right == pytest.approx(0.5)
        shifted = set_mass(t, Hyperplane(normal=np.array([0.0, 1.0]), offset=0.25))
        from scipy.special import ndtr

        assert shifted == pytest.approx(float(ndtr(0.5)), abs=1e-12)

    def test_reflection_symmetry_of_estimates(self):
        # symmetric target: estimates invariant under reflecting S
        target = GaussianMixture1D(0.5)
        sys = HamiltonianSystem(target)
        left = parity_conductance(sys, B0, 0.5, 50_000, seed=19)
        right = direct_conductance(HmcKernel(target, 0.5), PointSet1D((0.0,)), 50_000, seed=20)
        # the complement of S has the same conductance by symmetry
        assert left.phi == pytest.approx(right.phi, abs=3 * math.hypot(left.std_error, right.std_error))
