"""Quantized tensor-train Schroedinger solver with Hermite DAF operators."""

from .evolution import (
    Hamiltonian,
    RunRecord,
    StepperConfig,
    build_hamiltonian,
    build_split_propagators,
    evolve,
    step_arnoldi,
    step_crank_nicolson,
    step_euler,
    step_heun,
    step_rk4,
    step_split,
)
from .hdaf import HdafSpec, KernelTable, calibrate_sigma, filter_spectrum, hdaf_coefficients, solve_width
from .loading import QuenchParams, analytic_quench, diagonal_mpo, load_function, quench_grid
from .mps import (
    Grid,
    Mpo,
    MpsState,
    Tolerances,
    add,
    apply_mpo,
    canonicalize,
    inner,
    mpo_add,
    mpo_compose,
    truncate,
)
from .operators import (
    displacement_mpo,
    extend_to_finer_grid,
    fd_mpo,
    hdaf_derivative_mpo,
    hdaf_propagator_mpo,
)

__all__ = [name for name in dir() if not name.startswith("_")]
