"""Grouped-fixed-effects estimation for unbalanced rotating panels.

Units share one of G latent time paths of period effects; estimation
minimizes a masked least-squares objective jointly over the slope
coefficients, the group-time effects, time-invariant location effects,
and the partition of units into groups.  On top of the estimator sit
model-selection tools (holdout RMSE, BIC), poverty-dynamics analytics
(transition tables, completed paths, durations), a synthetic data
generator, and a CLI.
"""

__version__ = "0.1.0"

from .errors import GfePanelError
from .estimator import GroupedFixedEffects
from .ols import DesignSpec, ols_update
from .panel import (
    FitConfig,
    GroupAssignment,
    ModelParams,
    PanelDataset,
    objective,
    validate_dataset,
)
from .search import FitResult, multi_start_fit, vns_fit
from .selection import last_year_holdout, select_g

__all__ = [
    "GfePanelError",
    "GroupedFixedEffects",
    "DesignSpec",
    "ols_update",
    "FitConfig",
    "GroupAssignment",
    "ModelParams",
    "PanelDataset",
    "objective",
    "validate_dataset",
    "FitResult",
    "multi_start_fit",
    "vns_fit",
    "last_year_holdout",
    "select_g",
    "__version__",
]
