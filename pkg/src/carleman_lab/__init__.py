"""Classical laboratory for Carleman-linearised discretised fluid equations.

Modules
-------
grid_ops     grids, one-axis derivative operators, analytic spectra
field_ops    Kronecker assembly of dU/dt = F2 U⊗U + F1 U + F0(t)
carleman     truncated Carleman embedding, integration and error sweeps
reference    nonlinear reference solutions (DNS, steady shock, scalar toy)
regimes      Kolmogorov scales, R estimates, N-Re region atlas
spectral     DFT energy spectra and cascade comparison
experiments  config-driven experiment drivers used by the CLI
"""
from .carleman import (
    BudgetError,
    CarlemanSystem,
    SolverError,
    Trajectory,
    carleman_blocks,
    initial_carleman_state,
    integrate_linear,
    truncation_error_sweep,
)
from .field_ops import (
    QuadraticODE,
    assemble_F0,
    assemble_F1,
    assemble_F2,
    assemble_system,
    cyclic_perm,
    f1_dominant_eig,
    kron,
    projector,
)
from .grid_ops import (
    AffineOperator,
    BoundaryKind,
    GridSpec,
    analytic_spectrum,
    derivative_dirichlet,
    derivative_obc,
    derivative_pbc,
    dirichlet_grid,
    make_grid,
    spectral_norm,
)
from .reference import (
    burgers_steady_shock,
    integrate_nonlinear,
    integrate_to_steady,
    radius_of_convergence,
    shock_width,
    toy_solution,
)
from .regimes import (
    FlowParams,
    Flavor,
    RegionLabel,
    classify_region,
    compute_R,
    crossing_N_star,
    efficiency_frontier_Re,
    estimate_R_of_N,
    kolmogorov_scale,
    r_ks,
    region_map,
)
from .spectral import SpectrumSeries, cascade_compare, dft_field, energy_spectrum, kappa_bounds

__version__ = "0.1.0"
