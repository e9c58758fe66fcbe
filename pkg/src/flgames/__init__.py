"""Iterative LQ solvers for N-player general-sum games, in feedback-linearized and original coordinates."""

from .dynamics import BICYCLE6, UNICYCLE4, MultiPlayerDynamics, PlayerDynamics
from .feedback_linearization import FeedbackLinearization, JointLinearization
from .ilq_solver import BASELINE, FL, SolveResult, SolverConfig, solve
from .scenarios import Scenario, build_intersection, build_overtaking, build_roundabout
from .trajectory import Trajectory

__all__ = [
    "BICYCLE6", "UNICYCLE4", "MultiPlayerDynamics", "PlayerDynamics",
    "FeedbackLinearization", "JointLinearization",
    "BASELINE", "FL", "SolveResult", "SolverConfig", "solve",
    "Scenario", "build_intersection", "build_overtaking", "build_roundabout",
    "Trajectory",
]
