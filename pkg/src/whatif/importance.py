"""Signed, normalized driver importances with independent verification.

The model's own importance (standardized coefficients for linear models,
mean Gini decrease signed by driver-KPI correlation for forests) is
normalized to [-1, 1] and cross-checked against Pearson, Spearman, and a
Monte-Carlo Shapley attribution of cross-validated performance. Rank
disagreement below 0.5 flags the report; it is never silently replaced.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .dataset import KPI_DISCRETE, AnalysisFrame, make_frame
from .errors import ValidationError
from .model import Hyperparameters, TrainedModel, predict, predicted_classes, train
from .rng import STREAM_SHAPLEY, derive_rng

DEFAULT_SHAPLEY_PERMUTATIONS = 8
AGREEMENT_FLAG_THRESHOLD = 0.5
RETRAIN_MAX_DRIVERS = 8  # above this, Shapley neutralizes by mean imputation


class ConstantInputWarning(UserWarning):
    """Correlation of a constant vector is undefined; reported as 0."""


@dataclass(frozen=True)
class ImportanceEntry:
    driver: str
    importance: float


@dataclass(frozen=True)
class VerificationMeasures:
    pearson: float
    spearman: float
    shapley: float


@dataclass(frozen=True)
class Agreement:
    spearman_rank_agreement: float
    flagged: bool


@dataclass(frozen=True)
class ImportanceReport:
    entries: tuple[ImportanceEntry, ...]
    verification: dict[str, VerificationMeasures]
    agreement: Agreement


def pearson(x, y) -> float:
    """Sample Pearson correlation; constant input warns and yields 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("pearson needs two equal-length vectors")
    if x.size < 2:
        raise ValidationError("pearson needs at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc * xc).sum()))
    sy = float(np.sqrt((yc * yc).sum()))
    if sx == 0.0 or sy == 0.0:
        warnings.warn(
            "correlation of a constant vector is undefined; reporting 0",
            ConstantInputWarning,
            stacklevel=2,
        )
        return 0.0
    return float((xc * yc).sum() / (sx * sy))


def spearman(x, y) -> float:
    """Pearson correlation of average ranks (ties get their mean rank)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("spearman needs two equal-length vectors")
    if x.size < 2:
        raise ValidationError("spearman needs at least 2 points")
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def _empty_coalition_score(frame: AnalysisFrame) -> float:
    """Driverless baseline: majority-class accuracy or R^2 = 0."""
    if frame.kpi_kind == KPI_DISCRETE:
        y = frame.kpi_values()
        return float(max((y == 1.0).mean(), (y == 0.0).mean()))
    return 0.0


def _impute_score(
    model: TrainedModel, frame: AnalysisFrame, coalition: frozenset[int]
) -> float:
    X = frame.driver_matrix()
    y = frame.kpi_values()
    Xn = X.copy()
    for j in range(X.shape[1]):
        if j not in coalition:
            Xn[:, j] = X[:, j].mean()
    preds = predict(model, Xn)
    if frame.kpi_kind == KPI_DISCRETE:
        return float((predicted_classes(preds) == (y == 1.0)).mean())
    ss_res = float(((y - preds) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def shapley_performance(
    frame: AnalysisFrame,
    hyper: Hyperparameters | None = None,
    permutations: int = DEFAULT_SHAPLEY_PERMUTATIONS,
    seed: int = 0,
    neutralization: str = "auto",
    exact: bool = False,
) -> np.ndarray:
    """Monte-Carlo Shapley attribution of CV performance to each driver.

    Drivers are added one at a time along random permutations; a driver's
    value is its mean marginal gain in score. With ``exact=True`` all d!
    permutations are enumerated instead of sampled. ``neutralization``
    picks how excluded drivers disappear: retrain on the coalition
    ("retrain"), mean-impute them under the full model ("impute"), or
    choose by driver count ("auto").
    """
    if permutations < 1:
        raise ValidationError("permutation count must be >= 1")
    if neutralization not in ("auto", "retrain", "impute"):
        raise ValidationError(f"unknown neutralization {neutralization!r}")
    hyper = hyper or Hyperparameters()
    d = len(frame.drivers)
    retrain = neutralization == "retrain" or (
        neutralization == "auto" and d <= RETRAIN_MAX_DRIVERS
    )
    full_model = None if retrain else train(frame, hyper, seed)
    base = _empty_coalition_score(frame)

    cache: dict[frozenset[int], float] = {frozenset(): base}

    def score(coalition: frozenset[int]) -> float:
        if coalition not in cache:
            if retrain:
                sub = make_frame(
                    frame.dataset,
                    frame.kpi,
                    [frame.drivers[j] for j in sorted(coalition)],
                )
                cache[coalition] = train(sub, hyper, seed).confidence
            else:
                cache[coalition] = _impute_score(full_model, frame, coalition)
        return cache[coalition]

    if exact:
        perms = itertools.permutations(range(d))
        n_perms = math.factorial(d)
    else:
        rng = derive_rng(seed, STREAM_SHAPLEY)
        perms = (rng.permutation(d) for _ in range(permutations))
        n_perms = permutations

    values = np.zeros(d)
    for perm in perms:
        coalition: frozenset[int] = frozenset()
        prev = score(coalition)
        for j in perm:
            coalition = coalition | {int(j)}
            cur = score(coalition)
            values[int(j)] += cur - prev
            prev = cur
    return values / n_perms


def _raw_importances(model: TrainedModel, frame: AnalysisFrame) -> np.ndarray:
    X = frame.driver_matrix()
    if model.kind == "linear":
        return model.coefficients * X.std(axis=0)
    magnitudes = model.forest.feature_importances()
    y = frame.kpi_values()
    signs = np.empty(len(frame.drivers))
    for j in range(len(frame.drivers)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantInputWarning)
            r = pearson(X[:, j], y)
        signs[j] = -1.0 if r < 0 else 1.0
    return signs * magnitudes


def verify_importances(report: ImportanceReport) -> Agreement:
    """Rank agreement between |importance| and |Shapley|; < 0.5 flags."""
    drivers = [e.driver for e in report.entries]
    if len(drivers) == 1:
        return Agreement(spearman_rank_agreement=1.0, flagged=False)
    imp = np.array([abs(e.importance) for e in report.entries])
    shap = np.array([abs(report.verification[d].shapley) for d in drivers])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConstantInputWarning)
        agreement = spearman(imp, shap)
    return Agreement(
        spearman_rank_agreement=agreement,
        flagged=agreement < AGREEMENT_FLAG_THRESHOLD,
    )


def driver_importance(
    model: TrainedModel,
    frame: AnalysisFrame,
    hyper: Hyperparameters | None = None,
    shapley_permutations: int = DEFAULT_SHAPLEY_PERMUTATIONS,
    seed: int | None = None,
) -> ImportanceReport:
    """Signed importances in [-1, 1], sorted descending, with verification."""
    if not model.frame.matches(frame):
        raise ValidationError("model was not trained on this frame")
    raw = _raw_importances(model, frame)
    peak = float(np.max(np.abs(raw))) if raw.size else 0.0
    normalized = raw / peak if peak > 0 else raw

    shap = shapley_performance(
        frame,
        hyper or model.hyper,
        permutations=shapley_permutations,
        seed=model.seed if seed is None else seed,
    )
    X = frame.driver_matrix()
    y = frame.kpi_values()
    verification = {}
    for j, driver in enumerate(frame.drivers):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConstantInputWarning)
            verification[driver] = VerificationMeasures(
                pearson=pearson(X[:, j], y),
                spearman=spearman(X[:, j], y),
                shapley=float(shap[j]),
            )

    order = sorted(
        range(len(frame.drivers)), key=lambda j: -normalized[j]
    )
    entries = tuple(
        ImportanceEntry(driver=frame.drivers[j], importance=float(normalized[j]))
        for j in order
    )
    partial = ImportanceReport(
        entries=entries,
        verification=verification,
        agreement=Agreement(0.0, False),
    )
    return ImportanceReport(
        entries=entries,
        verification=verification,
        agreement=verify_importances(partial),
    )
