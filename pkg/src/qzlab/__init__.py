"""Collapse arrest in the quantum Zakharov equations: profiles, coefficients, dynamics."""

from .coefficients import CoefficientSet, coeffs_2d, coeffs_3d, coeffs_electrostatic, compare_with_paper
from .correction_profiles import CorrectionSet, solve_corrections_2d, solve_corrections_3d
from .functionals import FieldState, gradient_bound, hamiltonian_scalar, plasmon_number
from .ground_states import (
    GroundStateBundle,
    selfsimilar_2d_family,
    solve_ground_state_2d,
    solve_selfsimilar_2d,
    solve_selfsimilar_3d,
    solve_vortex_ground_state,
)
from .lambda_dynamics import (
    LambdaTrajectory,
    ReducedParams2D,
    ReducedParams3D,
    integrate_lambda_2d,
    integrate_lambda_3d,
    oscillation_period,
    threshold_gamma,
    turning_points,
)
from .qz_simulator import SimConfig, SimDiagnostics, run
from .radial_core import Profile, RadialGrid, make_grid

__version__ = "0.1.0"

__all__ = [
    "CoefficientSet", "CorrectionSet", "FieldState", "GroundStateBundle", "LambdaTrajectory", "Profile",
    "RadialGrid", "ReducedParams2D", "ReducedParams3D", "SimConfig", "SimDiagnostics", "coeffs_2d",
    "coeffs_3d", "coeffs_electrostatic", "compare_with_paper", "gradient_bound", "hamiltonian_scalar",
    "integrate_lambda_2d", "integrate_lambda_3d", "make_grid", "oscillation_period", "plasmon_number", "run",
    "selfsimilar_2d_family", "solve_corrections_2d", "solve_corrections_3d", "solve_ground_state_2d",
    "solve_selfsimilar_2d", "solve_selfsimilar_3d", "solve_vortex_ground_state", "threshold_gamma",
    "turning_points",
]
