from .analysis import (QSMError, SingularSystemError, compute_parameters, equilibrium_residual,
                       estimate_sigma, reference_equilibrium, solve_equilibrium_linear, spectral_norm)
from .io import load_problem, problem_hash, save_problem
from .quadratic import (LinearGame, NPlayerQuadraticGame, QuadraticMinimaxGame, RobotControlGame,
                        generate_nplayer_quadratic, generate_quadratic_minimax, random_orthogonal,
                        random_symmetric, scalar_game, scalar_minimax)
from .sine import SineNonCocoerciveGame

__all__ = [
    "LinearGame", "NPlayerQuadraticGame", "QSMError", "QuadraticMinimaxGame", "RobotControlGame",
    "SineNonCocoerciveGame", "SingularSystemError", "compute_parameters", "equilibrium_residual",
    "estimate_sigma", "generate_nplayer_quadratic", "generate_quadratic_minimax", "load_problem",
    "problem_hash", "random_orthogonal", "random_symmetric", "reference_equilibrium", "save_problem",
    "scalar_game", "scalar_minimax", "solve_equilibrium_linear", "spectral_norm",
]
