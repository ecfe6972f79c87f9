"""Targets and Hamiltonian flows: densities, masses, exactness, energy.

Walks through the built-in target densities, their closed-form masses,
and the two flow paths (closed-form rotation vs adaptive ODE), ending
with the conservation laws every downstream estimator leans on.
"""

import numpy as np

from hmcgap import (
    FlowConfig,
    Gaussian1D,
    GaussianMixture1D,
    HamiltonianSystem,
    MaxGaussian1D,
    PhasePoint,
    check_linearization,
    density,
    exact_flow_gaussian,
    flow,
    halfline_mass,
)

print("=== built-in densities ===")
mixture = GaussianMixture1D(sigma=0.5)
print(f"mixture density at the saddle q=0:   {float(density(mixture, 0.0)):.6f}")
print(f"mixture mass of (-inf, 0]:           {halfline_mass(mixture, 0.0):.6f}")
print(f"mixture mass of (-inf, -1]:          {halfline_mass(mixture, -1.0):.8f}")
maxg = MaxGaussian1D(a=2.0)
print(f"max-of-Gaussians (a=2) at the modes: {float(density(maxg, 2.0)):.6f}")

print("\n=== exact harmonic flow (unit Gaussian target) ===")
q0, p0, T = 0.3, -0.2, 0.7
q1, p1 = exact_flow_gaussian(q0, p0, T)
print(f"rotation by T={T}: ({q0}, {p0}) -> ({q1:.6f}, {p1:.6f})")

system = HamiltonianSystem(Gaussian1D())
numeric = flow(system, PhasePoint([q0], [p0]), T, FlowConfig(method="numeric"))
print(f"DOP853 endpoint error vs closed form: {abs(numeric.q(T) - q1):.2e}")

print("\n=== numeric flow on the mixture ===")
sys_mix = HamiltonianSystem(mixture)
traj = flow(sys_mix, PhasePoint([-1.0], [0.1]), 0.5)
print(f"low-energy orbit from the left mode ends at q = {traj.q(0.5):.4f} (stays left)")
print(f"energy drift along the path:          {traj.energy_drift:.2e}")

fast = flow(sys_mix, PhasePoint([-1.0], [2.5]), 0.5)
print(f"high-energy orbit ends at q = {fast.q(0.5):.4f} (crossed the saddle)")

print("\n=== conservation checks ===")
rng = np.random.default_rng(0)
worst = 0.0
for _ in range(20):
    start = PhasePoint(mixture.sample(rng, 1), rng.standard_normal(1))
    t = flow(sys_mix, start, 1.5)
    back = flow(sys_mix, PhasePoint([t.q(1.5)], [-t.p(1.5)]), 1.5)
    worst = max(worst, abs(back.q(1.5) - start.q[0]))
print(f"worst round-trip (time reversal) error over 20 paths: {worst:.2e}")

rep = check_linearization(flow(system, PhasePoint([1.0], [0.0]), 0.5), 0.0, 0.1)
print(
    f"tangent-line deviation over [0, 0.1]: {rep.deviation:.6f} "
    f"(ratio {rep.ratio:.4f} <= bound {rep.bound:.4f})"
)
