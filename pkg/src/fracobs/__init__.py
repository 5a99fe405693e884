"""Finite-element solvers for nonlocal obstacle problems.

The package discretizes quadratic forms driven by two-point kernels
comparable to the fractional-Laplacian kernel, solves the associated
constrained problems (one obstacle, two obstacles, ordered membrane
stacks), and ships the studies that check the classical structure
results numerically: residual sandwiches, penalization error budgets,
the classical s -> 1 limit, and capacitary bounds.

The flat namespace re-exports the everyday surface; the modules keep
the rest:

    meshes       uniform interval meshes and piecewise-linear fields
    fractional   gamma/Riesz constants and the pointwise s-derivative
    kernels      kernel constructors and the field-weighted evaluator
    quadrature   Gauss rules shared by the assemblers
    assembly     stiffness/load assembly and the assembled system
    penalties    smoothed step profiles for penalization
    solvers      projected relaxation, penalized Newton, membranes
    capacity     capacitary potentials and comparison bounds
    analysis     theorem-checking studies
    expressions  the config expression grammar
    config       strict JSON experiment configs
    cli          the fracobs command-line front end
"""

__version__ = "0.1.0"

from .analysis import (LSReport, SweepRecord, check_ls_membranes,
                       check_ls_one, check_ls_two, classical_obstacle_solve,
                       penalization_error_study, s_to_one_study)
from .assembly import (DiscreteSystem, LoadData, add_mass, assemble_ds_load,
                       assemble_load, assemble_stiffness,
                       assemble_stiffness_symmetric, build_system, ds_norm_sq,
                       gagliardo_seminorm_sq, lumped_mass)
from .capacity import (CapacityResult, CompactSet1D, capacitary_potential,
                       capacity_bounds_check, capacity_refinement,
                       obstacle_capacity_estimate)
from .errors import (ConvergenceError, FracobsError, NumericalError,
                     ValidationError)
from .fractional import (ds_gradient_at, fractional_laplacian_constant,
                         gamma_fn, normalization_ratio, riesz_constant)
from .kernels import (CoefficientField, Kernel, constant_field,
                      fractional_laplacian_kernel, ka_band_scan, ka_evaluate,
                      ka_kernel, kappa_integrand, kernel_band, perturbed_kernel,
                      plateau_field, scaled_fractional_kernel)
from .meshes import IntervalMesh, Mesh, PiecewiseLinearFn
from .penalties import PenaltyFunction, get_penalty
from .solvers import (ObstacleSet, PenalizationConfig, SolveResult,
                      lcp_oracle, membrane_shifts, minimal_shift_density,
                      solve_n_membranes, solve_penalized,
                      solve_penalized_lower, solve_psor, solve_two_obstacles,
                      solve_unconstrained)

__all__ = [
    "__version__",
    # errors
    "FracobsError", "ValidationError", "NumericalError", "ConvergenceError",
    # meshes
    "IntervalMesh", "Mesh", "PiecewiseLinearFn",
    # constants and pointwise operator
    "gamma_fn", "riesz_constant", "fractional_laplacian_constant",
    "normalization_ratio", "ds_gradient_at",
    # kernels
    "Kernel", "CoefficientField", "constant_field", "plateau_field",
    "kappa_integrand", "ka_evaluate", "ka_band_scan", "ka_kernel",
    "fractional_laplacian_kernel", "scaled_fractional_kernel",
    "perturbed_kernel", "kernel_band",
    # assembly
    "DiscreteSystem", "LoadData", "assemble_stiffness",
    "assemble_stiffness_symmetric", "assemble_load", "assemble_ds_load",
    "lumped_mass", "add_mass", "build_system", "gagliardo_seminorm_sq",
    "ds_norm_sq",
    # penalties
    "PenaltyFunction", "get_penalty",
    # solvers
    "ObstacleSet", "SolveResult", "PenalizationConfig", "solve_psor",
    "solve_unconstrained", "solve_two_obstacles", "solve_penalized",
    "solve_penalized_lower", "solve_n_membranes", "minimal_shift_density",
    "membrane_shifts", "lcp_oracle",
    # capacity
    "CompactSet1D", "CapacityResult", "capacitary_potential",
    "capacity_bounds_check", "obstacle_capacity_estimate",
    "capacity_refinement",
    # analysis
    "LSReport", "SweepRecord", "check_ls_one", "check_ls_two",
    "check_ls_membranes", "penalization_error_study",
    "classical_obstacle_solve", "s_to_one_study",
]
