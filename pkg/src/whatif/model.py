"""Driver-to-KPI predictors: ridge-regularized least squares for continuous
KPIs, a random-forest classifier for discrete ones.

Confidence is the mean k-fold cross-validation score (R^2 or accuracy); the
fold shuffle and all forest randomness derive from the training seed, so a
given (frame, hyperparameters, seed) always yields the same model.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import KPI_DISCRETE, AnalysisFrame, Dataset, make_frame
from .errors import ComputeError, SingleClassError, ValidationError
from .forest import DecisionTree, RandomForest, gini  # noqa: F401  (gini re-export)
from .rng import STREAM_CV, derive_rng

MODEL_LINEAR = "linear"
MODEL_FOREST = "forest"


@dataclass(frozen=True)
class Hyperparameters:
    n_trees: int = 100
    max_depth: int = 10
    min_leaf: int = 2
    max_features: int | None = None  # None -> ceil(sqrt(n_drivers))
    bootstrap: bool = True
    ridge_lambda: float = 1e-8
    cv_folds: int = 5

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValidationError("n_trees must be >= 1")
        if self.cv_folds < 2:
            raise ValidationError("cv_folds must be >= 2")
        if self.ridge_lambda < 0:
            raise ValidationError("ridge_lambda must be >= 0")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValidationError("min_leaf must be >= 1")


@dataclass
class TrainedModel:
    kind: str
    frame: AnalysisFrame
    seed: int
    confidence: float
    hyper: Hyperparameters
    intercept: float | None = None
    coefficients: np.ndarray | None = None
    forest: RandomForest | None = None


def _fit_linear(X: np.ndarray, y: np.ndarray, ridge_lambda: float):
    """Ridge solution of the normal equations on centered columns.

    Centering keeps the intercept out of the penalty and makes a constant
    driver's coefficient exactly zero under any positive ridge term.
    """
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc + ridge_lambda * np.eye(X.shape[1])
    try:
        coefs = np.linalg.solve(gram, Xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise ComputeError(
            "singular design matrix; set ridge_lambda > 0 or drop collinear drivers"
        ) from exc
    if ridge_lambda == 0.0 and np.linalg.cond(gram) > 1e14:
        raise ComputeError(
            "singular design matrix; set ridge_lambda > 0 or drop collinear drivers"
        )
    intercept = float(y_mean - x_mean @ coefs)
    return intercept, coefs


def _r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    ss_res = float(((y_true - y_pred) ** 2).sum())
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else 0.0
    return 1.0 - ss_res / ss_tot


def _cv_folds(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = derive_rng(seed, STREAM_CV).permutation(n)
    return [fold for fold in np.array_split(perm, k) if fold.size]


def _cross_validate(
    X: np.ndarray, y: np.ndarray, discrete: bool, hyper: Hyperparameters, seed: int
) -> float:
    folds = _cv_folds(X.shape[0], hyper.cv_folds, seed)
    scores = []
    for i, test_idx in enumerate(folds):
        train_mask = np.ones(X.shape[0], dtype=bool)
        train_mask[test_idx] = False
        X_tr, y_tr = X[train_mask], y[train_mask]
        X_te, y_te = X[test_idx], y[test_idx]
        if discrete:
            forest = RandomForest.fit(
                X_tr,
                y_tr,
                seed=seed,
                n_trees=hyper.n_trees,
                max_depth=hyper.max_depth,
                min_leaf=hyper.min_leaf,
                max_features=hyper.max_features,
                bootstrap=hyper.bootstrap,
            )
            pred = forest.predict_proba(X_te) >= 0.5
            scores.append(float((pred == (y_te == 1.0)).mean()))
        else:
            intercept, coefs = _fit_linear(X_tr, y_tr, hyper.ridge_lambda)
            scores.append(_r2(y_te, intercept + X_te @ coefs))
    return float(np.mean(scores))


def train(
    frame: AnalysisFrame, hyper: Hyperparameters | None = None, seed: int = 0
) -> TrainedModel:
    """Fit the KPI predictor for the frame; deterministic given the seed."""
    hyper = hyper or Hyperparameters()
    X = frame.driver_matrix()
    y = frame.kpi_values()
    if X.shape[0] < 2 * hyper.cv_folds:
        raise ValidationError(
            f"need at least {2 * hyper.cv_folds} rows, got {X.shape[0]}"
        )

    if frame.kpi_kind == KPI_DISCRETE:
        classes = np.unique(y)
        if classes.size < 2:
            raise SingleClassError(
                f"KPI {frame.kpi!r} has a single class; cannot train a classifier"
            )
        confidence = _cross_validate(X, y, True, hyper, seed)
        forest = RandomForest.fit(
            X,
            y,
            seed=seed,
            n_trees=hyper.n_trees,
            max_depth=hyper.max_depth,
            min_leaf=hyper.min_leaf,
            max_features=hyper.max_features,
            bootstrap=hyper.bootstrap,
        )
        return TrainedModel(
            kind=MODEL_FOREST,
            frame=frame,
            seed=seed,
            confidence=confidence,
            hyper=hyper,
            forest=forest,
        )

    confidence = _cross_validate(X, y, False, hyper, seed)
    intercept, coefs = _fit_linear(X, y, hyper.ridge_lambda)
    return TrainedModel(
        kind=MODEL_LINEAR,
        frame=frame,
        seed=seed,
        confidence=confidence,
        hyper=hyper,
        intercept=intercept,
        coefficients=coefs,
    )


def predict(model: TrainedModel, rows: np.ndarray) -> np.ndarray:
    """Per-row prediction: KPI value (linear) or class-1 probability (forest)."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValidationError("rows must be a 2-D matrix of driver values")
    if rows.shape[1] != len(model.frame.drivers):
        raise ValidationError(
            f"row width {rows.shape[1]} != driver count {len(model.frame.drivers)}"
        )
    if rows.shape[0] == 0:
        return np.empty(0)
    if model.kind == MODEL_LINEAR:
        return model.intercept + rows @ model.coefficients
    return model.forest.predict_proba(rows)


def predicted_classes(probabilities: np.ndarray) -> np.ndarray:
    """Probability >= 0.5 classifies as 1 (fixed tie-break)."""
    return (np.asarray(probabilities) >= 0.5).astype(int)


def kpi_value(model: TrainedModel, rows: np.ndarray) -> float:
    """Aggregate KPI: mean prediction, or percent predicted class 1."""
    preds = predict(model, rows)
    if preds.size == 0:
        raise ValidationError("kpi_value of zero rows")
    if model.kind == MODEL_FOREST:
        return float(100.0 * predicted_classes(preds).mean())
    return float(preds.mean())


def model_to_json(model: TrainedModel) -> dict:
    """JSON-ready dict; together with the dataset it round-trips the model."""
    out = {
        "kind": model.kind,
        "seed": model.seed,
        "confidence": model.confidence,
        "hyper": asdict(model.hyper),
        "kpi": model.frame.kpi,
        "kpi_kind": model.frame.kpi_kind,
        "drivers": list(model.frame.drivers),
        "dataset_ref": model.frame.dataset_ref,
    }
    if model.kind == MODEL_LINEAR:
        out["intercept"] = model.intercept
        out["coefficients"] = [float(c) for c in model.coefficients]
    else:
        out["trees"] = [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "n_samples": tree.n_samples.tolist(),
                "impurity": tree.impurity.tolist(),
                "prob1": tree.prob1.tolist(),
            }
            for tree in model.forest.trees
        ]
    return out


def model_from_json(payload: dict, dataset: Dataset) -> TrainedModel:
    """Rebuild a TrainedModel against the dataset it was trained on."""
    try:
        kind = payload["kind"]
        frame = make_frame(dataset, payload["kpi"], payload["drivers"])
        hyper = Hyperparameters(**payload["hyper"])
        seed = int(payload["seed"])
        confidence = float(payload["confidence"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model JSON: {exc}") from exc
    if frame.kpi_kind != payload.get("kpi_kind", frame.kpi_kind):
        raise ValidationError(
            "dataset KPI kind does not match the model; wrong dataset?"
        )
    if kind == MODEL_LINEAR:
        return TrainedModel(
            kind=kind,
            frame=frame,
            seed=seed,
            confidence=confidence,
            hyper=hyper,
            intercept=float(payload["intercept"]),
            coefficients=np.asarray(payload["coefficients"], dtype=float),
        )
    if kind == MODEL_FOREST:
        trees = [
            DecisionTree(
                feature=np.asarray(t["feature"], dtype=np.int64),
                threshold=np.asarray(t["threshold"], dtype=float),
                left=np.asarray(t["left"], dtype=np.int64),
                right=np.asarray(t["right"], dtype=np.int64),
                n_samples=np.asarray(t["n_samples"], dtype=np.int64),
                impurity=np.asarray(t["impurity"], dtype=float),
                prob1=np.asarray(t["prob1"], dtype=float),
            )
            for t in payload["trees"]
        ]
        return TrainedModel(
            kind=kind,
            frame=frame,
            seed=seed,
            confidence=confidence,
            hyper=hyper,
            forest=RandomForest(trees=trees, n_features=len(frame.drivers)),
        )
    raise ValidationError(f"unknown model kind {kind!r}")


def default_max_features(n_drivers: int) -> int:
    return math.ceil(math.sqrt(n_drivers))
