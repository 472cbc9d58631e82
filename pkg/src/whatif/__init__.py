"""What-if analysis engine for tabular KPIs.

Learn a driver-to-KPI model from a table, rank driver importance with
independent verification, perturb drivers to see predicted KPI movement,
and invert the model under per-driver constraints to hit KPI goals.
"""

from .dataset import (
    AnalysisFrame,
    ColumnSchema,
    ColumnStats,
    Dataset,
    make_frame,
    parse_csv,
    serialize_csv,
)
from .errors import (
    ComputeError,
    DataFormatError,
    SingleClassError,
    ValidationError,
    WhatIfError,
)
from .goalseek import Constraint, GoalResult, GoalSpec, optimize_goal
from .importance import ImportanceReport, driver_importance, pearson, spearman
from .model import (
    Hyperparameters,
    TrainedModel,
    kpi_value,
    model_from_json,
    model_to_json,
    predict,
    train,
)
from .sensitivity import (
    ComparisonCurve,
    PerturbationItem,
    PerturbationSpec,
    SensitivityResult,
    apply_perturbation,
    comparison_sweep,
    row_sensitivity,
    run_sensitivity,
)
from .synthetic import USE_CASES, generate_synthetic

__all__ = [
    "AnalysisFrame",
    "ColumnSchema",
    "ColumnStats",
    "ComparisonCurve",
    "ComputeError",
    "Constraint",
    "DataFormatError",
    "Dataset",
    "GoalResult",
    "GoalSpec",
    "Hyperparameters",
    "ImportanceReport",
    "PerturbationItem",
    "PerturbationSpec",
    "SensitivityResult",
    "SingleClassError",
    "TrainedModel",
    "USE_CASES",
    "ValidationError",
    "WhatIfError",
    "apply_perturbation",
    "comparison_sweep",
    "driver_importance",
    "generate_synthetic",
    "kpi_value",
    "make_frame",
    "model_from_json",
    "model_to_json",
    "optimize_goal",
    "parse_csv",
    "pearson",
    "predict",
    "row_sensitivity",
    "run_sensitivity",
    "serialize_csv",
    "spearman",
    "train",
]

__version__ = "0.1.0"
