"""Numerical laboratory for tug-of-war dynamic programming principles with variable exponent p(x)."""

__version__ = "0.1.0"

from .coefficients import (  # noqa: E402
    FULLBALL,
    INF,
    ORTHOGONAL,
    ExponentField,
    affine_field,
    coeffs_fullball_variant,
    coeffs_orthogonal_variant,
    constant_field,
    estimate_holder,
    radial_holder_field,
)
from .comparison import (  # noqa: E402
    ComparisonParams,
    F_eval,
    annular_verify,
    case1_verify,
    case2_verify,
    constants_recipe,
    f_eval,
    omega_eval,
    taylor_bound_check,
)
from .dpp import Domain, GridField, Problem, avg_operator, dpp_apply, midrange, solve_fixed_point  # noqa: E402
from .game import GameConfig, Strategy, estimate_value, play_episode, step_coupled, step_single, threshold_response  # noqa: E402
from .geometry import ball_quadrature, coupled_rotation, frame_for, project, rotate_in_plane  # noqa: E402
from .regularity import gap_K, lipschitz_modulus, scale_sweep  # noqa: E402
