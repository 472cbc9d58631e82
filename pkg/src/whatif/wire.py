"""Shared JSON wire shapes for the CLI and the HTTP API.

Both front ends serialize through these builders so identical inputs and
seeds produce identical JSON. Numeric fields are checked finite before
leaving the process; KPI-like fields additionally carry a 2-decimal
display rendering next to the full-precision raw value.
"""

from __future__ import annotations

import math
from typing import Any

from .dataset import Dataset
from .errors import ValidationError
from .goalseek import Constraint, GoalResult, GoalSpec
from .importance import ImportanceReport
from .sensitivity import (
    ComparisonCurve,
    PerturbationItem,
    PerturbationSpec,
    RowSensitivity,
    SensitivityResult,
)


def ensure_finite(obj: Any, path: str = "$") -> Any:
    """Reject NaN/Infinity anywhere in a JSON-ready structure."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite value at {path}: {obj!r}")
        return obj
    if isinstance(obj, dict):
        for key, value in obj.items():
            ensure_finite(value, f"{path}.{key}")
        return obj
    if isinstance(obj, (list, tuple)):
        for i, value in enumerate(obj):
            ensure_finite(value, f"{path}[{i}]")
        return obj
    return obj


def display(value: float) -> str:
    return f"{value:.2f}"


def signed_display(value: float) -> str:
    return "0.00" if value == 0.0 else f"{value:+.2f}"


def dataset_wire(dataset: Dataset) -> dict:
    columns = []
    for col in dataset.columns:
        stats = None
        if col.stats is not None:
            stats = {
                "min": col.stats.min,
                "max": col.stats.max,
                "mean": col.stats.mean,
                "std": col.stats.std,
                "distinct_count": col.stats.distinct_count,
            }
        columns.append({"name": col.name, "kind": col.kind, "stats": stats})
    return {
        "dataset_id": dataset.id,
        "columns": columns,
        "row_count": dataset.row_count,
        "dropped_rows": dataset.dropped_rows,
    }


def importance_wire(report: ImportanceReport) -> dict:
    return {
        "entries": [
            {"driver": e.driver, "importance": e.importance} for e in report.entries
        ],
        "verification": {
            driver: {"pearson": m.pearson, "spearman": m.spearman, "shapley": m.shapley}
            for driver, m in report.verification.items()
        },
        "agreement": {
            "spearman_rank_agreement": report.agreement.spearman_rank_agreement,
            "flagged": report.agreement.flagged,
        },
    }


def sensitivity_wire(result: SensitivityResult) -> dict:
    return {
        "baseline_kpi": result.baseline_kpi,
        "perturbed_kpi": result.perturbed_kpi,
        "uplift": result.uplift,
        "baseline_display": display(result.baseline_kpi),
        "perturbed_display": display(result.perturbed_kpi),
        "uplift_display": signed_display(result.uplift),
    }


def curves_wire(curves: list[ComparisonCurve]) -> dict:
    return {
        "curves": [
            {
                "driver": c.driver,
                "points": [{"amount": p.amount, "kpi": p.kpi} for p in c.points],
            }
            for c in curves
        ]
    }


def row_sensitivity_wire(result: RowSensitivity) -> dict:
    return {
        "baseline_prediction": result.baseline_prediction,
        "perturbed_prediction": result.perturbed_prediction,
        "baseline_class": result.baseline_class,
        "perturbed_class": result.perturbed_class,
    }


def goal_wire(result: GoalResult) -> dict:
    return {
        "best_perturbation": result.best_perturbation,
        "best_kpi": result.best_kpi,
        "baseline_kpi": result.baseline_kpi,
        "uplift": result.uplift,
        "confidence": result.confidence,
        "timed_out": result.timed_out,
        "best_kpi_display": display(result.best_kpi),
        "uplift_display": signed_display(result.uplift),
        "trace": [
            {"perturbation": p.perturbation, "kpi": p.kpi} for p in result.trace
        ],
    }


def perturbation_spec_from_wire(payload: dict) -> PerturbationSpec:
    if not isinstance(payload, dict) or "items" not in payload:
        raise ValidationError('perturbation spec must be {"items": [...]}')
    items = []
    for raw in payload["items"]:
        try:
            items.append(
                PerturbationItem(
                    driver=str(raw["driver"]),
                    mode=str(raw["mode"]),
                    amount=float(raw["amount"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed perturbation item: {raw!r}") from exc
    return PerturbationSpec(items=tuple(items))


def perturbation_spec_wire(spec: PerturbationSpec) -> dict:
    return {
        "items": [
            {"driver": i.driver, "mode": i.mode, "amount": i.amount}
            for i in spec.items
        ]
    }


def goal_spec_from_wire(payload: dict) -> GoalSpec:
    if not isinstance(payload, dict):
        raise ValidationError("goal spec must be a JSON object")
    constraints = {}
    for name, raw in (payload.get("constraints") or {}).items():
        try:
            constraints[str(name)] = Constraint(
                mode=str(raw["mode"]), lo=float(raw["lo"]), hi=float(raw["hi"])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed constraint for {name!r}") from exc
    try:
        target = payload.get("target_value")
        return GoalSpec(
            objective=str(payload.get("objective", "")),
            target_value=None if target is None else float(target),
            constraints=constraints,
            budget=int(payload.get("budget", GoalSpec.budget)),
            n_init=int(payload.get("n_init", GoalSpec.n_init)),
            seed=int(payload.get("seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed goal spec: {exc}") from exc
