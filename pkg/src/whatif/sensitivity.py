"""What-if perturbations: shift driver values, re-predict, report uplift.

Perturbations apply uniformly to every row (absolute shift or percentage
scale); the model is never retrained. Binary drivers only accept whole
absolute steps and stay clamped to {0, 1}; other values are not clamped
unless the frame sets explicit per-column bounds, so model extrapolation
stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import AnalysisFrame
from .errors import ValidationError
from .model import TrainedModel, kpi_value, predict, predicted_classes

MODE_ABSOLUTE = "absolute"
MODE_PERCENTAGE = "percentage"
MODES = (MODE_ABSOLUTE, MODE_PERCENTAGE)


@dataclass(frozen=True)
class PerturbationItem:
    driver: str
    mode: str
    amount: float

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown perturbation mode {self.mode!r}")


@dataclass(frozen=True)
class PerturbationSpec:
    items: tuple[PerturbationItem, ...]

    def __post_init__(self) -> None:
        names = [item.driver for item in self.items]
        if len(set(names)) != len(names):
            raise ValidationError("perturbation lists a driver more than once")

    @staticmethod
    def single(driver: str, mode: str, amount: float) -> "PerturbationSpec":
        return PerturbationSpec(items=(PerturbationItem(driver, mode, amount),))


@dataclass(frozen=True)
class SensitivityResult:
    baseline_kpi: float
    perturbed_kpi: float
    uplift: float

    def __post_init__(self) -> None:
        if self.uplift != self.perturbed_kpi - self.baseline_kpi:
            raise ValidationError("uplift must equal perturbed_kpi - baseline_kpi")


@dataclass(frozen=True)
class SweepPoint:
    amount: float
    kpi: float


@dataclass(frozen=True)
class ComparisonCurve:
    driver: str
    points: tuple[SweepPoint, ...]


@dataclass(frozen=True)
class RowSensitivity:
    baseline_prediction: float
    perturbed_prediction: float
    baseline_class: int | None = None
    perturbed_class: int | None = None


def validate_spec(frame: AnalysisFrame, spec: PerturbationSpec) -> None:
    for item in spec.items:
        if item.driver not in frame.drivers:
            raise ValidationError(f"unknown driver {item.driver!r}")
        if frame.is_binary_driver(item.driver):
            if item.mode == MODE_PERCENTAGE:
                raise ValidationError(
                    f"percentage perturbation of binary driver {item.driver!r} "
                    "is undefined; use absolute"
                )
            if item.amount != int(item.amount):
                raise ValidationError(
                    f"binary driver {item.driver!r} takes whole absolute steps"
                )


def apply_perturbation(
    rows: np.ndarray, frame: AnalysisFrame, spec: PerturbationSpec
) -> np.ndarray:
    """New matrix with the spec applied to every row; input is untouched."""
    validate_spec(frame, spec)
    rows = np.asarray(rows, dtype=float)
    out = rows.copy()
    for item in spec.items:
        j = frame.drivers.index(item.driver)
        if item.mode == MODE_PERCENTAGE:
            out[:, j] = out[:, j] * (1.0 + item.amount / 100.0)
        else:
            out[:, j] = out[:, j] + item.amount
        if frame.is_binary_driver(item.driver):
            out[:, j] = np.clip(out[:, j], 0.0, 1.0)
        elif item.driver in frame.column_bounds:
            lo, hi = frame.column_bounds[item.driver]
            out[:, j] = np.clip(out[:, j], lo, hi)
    return out


def run_sensitivity(
    model: TrainedModel,
    rows: np.ndarray,
    frame: AnalysisFrame,
    spec: PerturbationSpec,
) -> SensitivityResult:
    """Baseline vs. perturbed KPI under one spec; never retrains."""
    if not model.frame.matches(frame):
        raise ValidationError("model was not trained on this frame")
    baseline = kpi_value(model, rows)
    perturbed = kpi_value(model, apply_perturbation(rows, frame, spec))
    return SensitivityResult(
        baseline_kpi=baseline, perturbed_kpi=perturbed, uplift=perturbed - baseline
    )


def comparison_sweep(
    model: TrainedModel,
    rows: np.ndarray,
    frame: AnalysisFrame,
    drivers: list[str] | tuple[str, ...],
    mode: str,
    lo: float,
    hi: float,
    steps: int,
) -> list[ComparisonCurve]:
    """KPI of each driver individually across an evenly spaced amount grid."""
    if steps < 2:
        raise ValidationError("steps must be >= 2")
    if not lo < hi:
        raise ValidationError("lo must be < hi")
    amounts = np.linspace(lo, hi, steps)
    curves = []
    for driver in drivers:
        points = []
        for amount in amounts:
            result = run_sensitivity(
                model, rows, frame, PerturbationSpec.single(driver, mode, float(amount))
            )
            points.append(SweepPoint(amount=float(amount), kpi=result.perturbed_kpi))
        curves.append(ComparisonCurve(driver=driver, points=tuple(points)))
    return curves


def row_sensitivity(
    model: TrainedModel,
    rows: np.ndarray,
    frame: AnalysisFrame,
    row_index: int,
    spec: PerturbationSpec,
) -> RowSensitivity:
    """Perturb one data point only and report its prediction before/after."""
    rows = np.asarray(rows, dtype=float)
    if not 0 <= row_index < rows.shape[0]:
        raise ValidationError(
            f"row index {row_index} out of range [0, {rows.shape[0]})"
        )
    row = rows[row_index : row_index + 1]
    base = float(predict(model, row)[0])
    pert = float(predict(model, apply_perturbation(row, frame, spec))[0])
    if model.kind == "forest":
        return RowSensitivity(
            baseline_prediction=base,
            perturbed_prediction=pert,
            baseline_class=int(predicted_classes(np.array([base]))[0]),
            perturbed_class=int(predicted_classes(np.array([pert]))[0]),
        )
    return RowSensitivity(baseline_prediction=base, perturbed_prediction=pert)
