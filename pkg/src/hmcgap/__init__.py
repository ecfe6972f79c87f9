"""Conductance and spectral-gap toolkit for idealized HMC chains.

The package splits into small layers:

* ``targets``     built-in densities, metrics, half-space masses
* ``dynamics``    Hamiltonian systems and dense trajectory flows
* ``ensemble``    vectorized flows and crossing counters for replicas
* ``geometry``    boundaries, crossing records, normal momenta
* ``samplers``    seeded RWM / HMC / RHMC kernels, hitting times, drift
* ``conductance`` direct, parity, and quadrature conductance estimates
* ``spectral``    discretized transition operators and spectral gaps
* ``experiments`` the named studies behind the ``hmcgap`` command line
"""

from .targets import (
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
from .dynamics import (
    FlowConfig,
    HamiltonianSystem,
    IntegratorFailure,
    PhasePoint,
    Trajectory,
    check_linearization,
    exact_flow_gaussian,
    flow,
    hamiltonian_rhs,
)
from .geometry import (
    Boundary,
    CrossingRecord,
    Hyperplane,
    LevelSet,
    PointSet1D,
    boundary_from_config,
    circle_boundary,
    count_crossings,
    normal_momentum,
    unit_normal,
)
from .samplers import (
    ChainState,
    HmcConfig,
    HmcKernel,
    RhmcKernel,
    RwmConfig,
    RwmKernel,
    hitting_time,
    hitting_times,
    hmc_step,
    lyapunov_drift,
    rhmc_step,
    run_chain,
    rwm_step,
    trace_chain,
)
from .conductance import (
    ConductanceEstimate,
    FluxEstimate,
    cheeger_interval,
    conductance_upper_bound,
    direct_conductance,
    flux_quadrature,
    linear_T_probe,
    parity_conductance,
)
from .spectral import (
    Grid1D,
    SpectralResult,
    TransitionMatrix,
    degenerate_kernel_density,
    gap_surface,
    hmc_kernel_matrix,
    make_grid,
    rayleigh_bound,
    rwm_kernel_matrix,
    spectral_gap,
)

__version__ = "0.1.0"
