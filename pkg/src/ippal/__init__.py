"""Informative path planning for active learning of a semantic segmentation model.

Desk-scale simulator (synthetic terrains, a small probabilistic pixel
classifier), acquisition scores, a multi-layer map, budgeted planners and a
campaign/benchmark harness. Submodules: ``terrain``, ``model``, ``acquire``,
``mapping``, ``plan``, ``mission``, ``metrics``, ``export``, ``cli``.
"""

from .config import ExperimentConfig, load_config, parse_config
from .kernels import BACKEND
from .mission import CampaignResult, MetricRow, run_campaign

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CampaignResult",
    "ExperimentConfig",
    "MetricRow",
    "load_config",
    "parse_config",
    "run_campaign",
    "__version__",
]
