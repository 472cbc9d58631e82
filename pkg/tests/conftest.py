import numpy as np
import pytest

import whatif
from whatif import make_frame, train


@pytest.fixture(scope="session")
def marketing():
    """200-row marketing-mix dataset with its trained linear model."""
    dataset, truth = whatif.generate_synthetic("marketing_mix", 200, 11)
    frame = make_frame(dataset, "sales")
    model = train(frame, seed=11)
    return dataset, truth, frame, model


@pytest.fixture(scope="session")
def deal500():
    """Full-size deal-closing dataset with its trained forest (slow; share it)."""
    dataset, truth = whatif.generate_synthetic("deal_closing", 500, 1)
    frame = make_frame(dataset, "Deal Closed?")
    model = train(frame, seed=1)
    return dataset, truth, frame, model


@pytest.fixture(scope="session")
def retention():
    """Retention dataset; includes one binary driver."""
    dataset, truth = whatif.generate_synthetic("retention", 200, 4)
    frame = make_frame(dataset, "Retained6mo?")
    return dataset, truth, frame


def csv_from_matrix(X: np.ndarray, y: np.ndarray, names: list[str], kpi: str) -> str:
    """CSV whose parsed floats are bit-identical to X and y (repr round-trip)."""
    lines = [",".join(names + [kpi])]
    for i in range(X.shape[0]):
        lines.append(",".join(repr(float(v)) for v in X[i]) + "," + repr(float(y[i])))
    return "\n".join(lines) + "\n"


def linear_frame(
    coefs: list[float],
    intercept: float,
    n_rows: int = 200,
    seed: int = 0,
    noise_std: float = 0.0,
    scale: float = 10.0,
):
    """Frame whose KPI is an exact (or noisy) linear function of its drivers."""
    rng = np.random.default_rng(seed)
    d = len(coefs)
    X = rng.uniform(0.0, scale, size=(n_rows, d))
    y = intercept + X @ np.asarray(coefs, dtype=float)
    if noise_std > 0.0:
        y = y + rng.normal(0.0, noise_std, size=n_rows)
    names = [f"x{j + 1}" for j in range(d)]
    dataset = whatif.parse_csv(csv_from_matrix(X, y, names, "y"))
    return make_frame(dataset, "y")


def stump_model(threshold: float = 5.0, left_prob: float = 0.0, right_prob: float = 1.0):
    """Forest of one stump on a single driver: x0 < threshold goes left."""
    from whatif.dataset import parse_csv
    from whatif.forest import DecisionTree, RandomForest
    from whatif.model import Hyperparameters, TrainedModel

    dataset = parse_csv("x0,label\n1,0\n7,1\n2,0\n8,1\n3,0\n9,1\n")
    frame = make_frame(dataset, "label")
    tree = DecisionTree(
        feature=np.array([0, -1, -1], dtype=np.int64),
        threshold=np.array([threshold, 0.0, 0.0]),
        left=np.array([1, -1, -1], dtype=np.int64),
        right=np.array([2, -1, -1], dtype=np.int64),
        n_samples=np.array([6, 3, 3], dtype=np.int64),
        impurity=np.array([0.5, 0.0, 0.0]),
        prob1=np.array([0.5, left_prob, right_prob]),
    )
    return TrainedModel(
        kind="forest",
        frame=frame,
        seed=0,
        confidence=1.0,
        hyper=Hyperparameters(n_trees=1),
        forest=RandomForest(trees=[tree], n_features=1),
    )


def handbuilt_linear_model(coefs: list[float], intercept: float):
    """TrainedModel with pinned linear parameters over a matching tiny frame."""
    from whatif.model import Hyperparameters, TrainedModel

    d = len(coefs)
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 5, size=(12, d))
    y = intercept + X @ np.asarray(coefs)
    names = [f"x{j}" for j in range(d)]
    dataset = whatif.parse_csv(csv_from_matrix(X, y, names, "y"))
    frame = make_frame(dataset, "y")
    return TrainedModel(
        kind="linear",
        frame=frame,
        seed=0,
        confidence=1.0,
        hyper=Hyperparameters(),
        intercept=float(intercept),
        coefficients=np.asarray(coefs, dtype=float),
    )
