"""Three routes to the conductance of S = (-inf, 0), side by side.

1. direct Monte Carlo:   stationary starts in S, one HMC step, count escapes
2. parity decomposition: Phi = P(N odd) / (2 pi(S)), with the flux
   component Phi+ = E[N]/2 and the tilted expectation P(N odd)/E[N]
3. boundary quadrature:  Phi+ = T * (boundary integral of pi) * c*

Both flux constants c* are carried: 1/2 and the inner momentum integral
E[max(p_q, 0)] = 1/sqrt(2 pi).  The crossing-count Monte Carlo agrees
with the latter; the two differ by sqrt(2 pi)/2 ~ 1.2533.
"""

from hmcgap import (
    Gaussian1D,
    GaussianMixture1D,
    HamiltonianSystem,
    HmcKernel,
    PointSet1D,
    cheeger_interval,
    conductance_upper_bound,
    direct_conductance,
    flux_quadrature,
    linear_T_probe,
    parity_conductance,
)

origin = PointSet1D((0.0,))

print("=== unit Gaussian, T = 0.5: exact answer is T/pi = 0.159155 ===")
target = Gaussian1D()
system = HamiltonianSystem(target)
direct = direct_conductance(HmcKernel(target, 0.5), origin, 100_000, seed=1)
parity = parity_conductance(system, origin, 0.5, 100_000, seed=2)
print(f"direct:  phi = {direct.phi:.5f} +- {direct.std_error:.5f}")
print(f"parity:  phi = {parity.phi:.5f} +- {parity.std_error:.5f}")
c = parity.components
print(
    f"decomposition: phi+ = E[N]/2 = {c['phi_plus_mc']:.5f}, "
    f"tilted E[1/N; N odd] = {c['tilted_expectation']:.4f}, pi(S) = {c['pi_S']}"
)
print(f"identity check: phi+ * tilted / pi(S) = {c['phi_plus_mc'] * c['tilted_expectation'] / c['pi_S']:.5f}")

print("\n=== the two flux constants ===")
for conv in ("normal_mean_positive", "half"):
    fq = flux_quadrature(target, origin, 0.5, conv)
    print(f"{conv:>21}: phi+ = {fq.phi_plus:.5f}")
print(f"MC half-count:         phi+ = {c['phi_plus_mc']:.5f}  (matches the corrected constant)")

print("\n=== mixture sigma = 0.5, T = sigma ===")
mix = GaussianMixture1D(0.5)
est = parity_conductance(HamiltonianSystem(mix), origin, 0.5, 200_000, seed=3)
bound = conductance_upper_bound(mix, origin, 0.5)
print(f"parity estimate: {est.phi:.5f} +- {est.std_error:.5f}")
print(f"linear ceiling (half / corrected): {bound['half']:.5f} / {bound['normal_mean_positive']:.5f}")
lo, hi = cheeger_interval(est.phi)
print(f"Cheeger interval for the spectral gap: [{lo:.2e}, {hi:.2e}]")

print("\n=== conductance grows at most linearly in T ===")
rows = linear_T_probe(HamiltonianSystem(target), origin, [0.05, 0.5, 2.0], n=100_000, seed=4)
for r in rows:
    print(
        f"T={r['T']:4.2f}: phi/T = {r['phi_over_T']:.4f} "
        f"(flux constant {r['flux_constant']:.4f}), below ceiling: {r['below_ceiling']}"
    )
