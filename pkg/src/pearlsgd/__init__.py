"""Per-player local SGD (PEARL-SGD) for n-player games."""
from .core import (BlockLayout, GameProblem, GradientSample, JointAction, LayoutError, ProblemParameters,
                   block_view, complement_view, joint_gradient, reassemble)
from .engine import (RunConfig, Trajectory, heatmap_argmin, heatmap_grid, run_pearl_sgd, sgda_reference,
                     sweep_tau, tune_gamma)
from .rng import RngStream
from .schedules import StepSizeSchedule, corollary_eta_solve, theoretical_gamma

__version__ = "0.1.0"
