"""Path planners and baselines over map snapshots."""

from .baselines import plan_coverage, plan_random_global, plan_random_local
from .core import (
    KinematicModel,
    MapView,
    Path,
    PlannerConfig,
    flight_time,
    max_distance,
    path_cost,
)
from .frontier import plan_frontier
from .local import plan_local
from .mcts import action_set, plan_mcts
from .optimisation import path_value, plan_greedy_lattice, plan_optimisation, refine_path

PLANNERS = ("local", "frontier", "optimisation", "sampling", "coverage", "random_local", "random_global")

__all__ = [
    "PLANNERS",
    "KinematicModel",
    "MapView",
    "Path",
    "PlannerConfig",
    "action_set",
    "flight_time",
    "max_distance",
    "path_cost",
    "path_value",
    "plan_coverage",
    "plan_frontier",
    "plan_greedy_lattice",
    "plan_local",
    "plan_mcts",
    "plan_optimisation",
    "plan_random_global",
    "plan_random_local",
    "refine_path",
]
