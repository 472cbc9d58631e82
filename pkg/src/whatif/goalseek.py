"""Goal inversion: search driver perturbations that maximize, minimize, or
hit a target KPI inside per-driver bounds.

A fixed-hyperparameter Gaussian process (Matern 5/2, length scale 0.3 on
the unit cube, noise pinned at 1e-6 of signal) surrogates the KPI over the
constraint box; each round scores 1000 uniform candidates by expected
improvement and evaluates the best. No gradients, no hyperparameter
tuning: every run is reproducible from its seed.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import erf

from .dataset import AnalysisFrame
from .errors import ComputeError, ValidationError
from .model import TrainedModel, kpi_value
from .rng import STREAM_GOAL, derive_rng
from .sensitivity import (
    MODE_ABSOLUTE,
    MODE_PERCENTAGE,
    MODES,
    PerturbationItem,
    PerturbationSpec,
    apply_perturbation,
)

OBJECTIVE_MAXIMIZE = "maximize"
OBJECTIVE_MINIMIZE = "minimize"
OBJECTIVE_TARGET = "target"
OBJECTIVES = (OBJECTIVE_MAXIMIZE, OBJECTIVE_MINIMIZE, OBJECTIVE_TARGET)

DEFAULT_BUDGET = 60
DEFAULT_N_INIT = 10
N_CANDIDATES = 1000
GP_LENGTH_SCALE = 0.3
GP_NOISE_FACTOR = 1e-6


@dataclass(frozen=True)
class Constraint:
    mode: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown constraint mode {self.mode!r}")
        if self.lo > self.hi:
            raise ValidationError(f"infeasible constraint: lo {self.lo} > hi {self.hi}")


DEFAULT_NUMERIC_CONSTRAINT = Constraint(MODE_PERCENTAGE, -100.0, 100.0)
DEFAULT_BINARY_CONSTRAINT = Constraint(MODE_ABSOLUTE, -1.0, 1.0)


@dataclass(frozen=True)
class GoalSpec:
    objective: str
    target_value: float | None = None
    constraints: dict[str, Constraint] = field(default_factory=dict)
    budget: int = DEFAULT_BUDGET
    n_init: int = DEFAULT_N_INIT
    seed: int = 0

    def __post_init__(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"unknown objective {self.objective!r}")
        if (self.objective == OBJECTIVE_TARGET) != (self.target_value is not None):
            raise ValidationError(
                "target_value is required for objective=target and only then"
            )
        if self.n_init < 1:
            raise ValidationError("n_init must be >= 1")
        if self.budget < self.n_init + 1:
            raise ValidationError("budget must exceed n_init")


@dataclass(frozen=True)
class TracePoint:
    perturbation: dict[str, float]
    kpi: float


@dataclass(frozen=True)
class GoalResult:
    best_perturbation: dict[str, float]
    best_kpi: float
    baseline_kpi: float
    uplift: float
    confidence: float
    trace: tuple[TracePoint, ...]
    timed_out: bool = False


def resolve_constraints(frame: AnalysisFrame, spec: GoalSpec) -> list[Constraint]:
    """Per-driver constraints aligned with frame.drivers, defaults filled in."""
    for name in spec.constraints:
        if name not in frame.drivers:
            raise ValidationError(f"constraint on unknown driver {name!r}")
    resolved = []
    for name in frame.drivers:
        binary = frame.is_binary_driver(name)
        c = spec.constraints.get(
            name, DEFAULT_BINARY_CONSTRAINT if binary else DEFAULT_NUMERIC_CONSTRAINT
        )
        if binary:
            if c.mode == MODE_PERCENTAGE:
                raise ValidationError(
                    f"percentage constraint on binary driver {name!r} is undefined"
                )
            if c.lo != int(c.lo) or c.hi != int(c.hi):
                raise ValidationError(
                    f"binary driver {name!r} needs integer constraint bounds"
                )
        resolved.append(c)
    return resolved


def internal_score(kpi: float, spec: GoalSpec) -> float:
    """Raw KPI mapped so that bigger is always better."""
    if spec.objective == OBJECTIVE_MINIMIZE:
        return -kpi
    if spec.objective == OBJECTIVE_TARGET:
        return -abs(kpi - spec.target_value)
    return kpi


def snap_to_constraints(
    p: np.ndarray, frame: AnalysisFrame, constraints: list[Constraint]
) -> np.ndarray:
    """Round binary-driver amounts to whole steps; stays inside the box."""
    out = np.array(p, dtype=float)
    for j, name in enumerate(frame.drivers):
        if frame.is_binary_driver(name):
            out[j] = float(np.rint(out[j]))
    return out


def objective_eval(
    model: TrainedModel,
    rows: np.ndarray,
    frame: AnalysisFrame,
    p: np.ndarray,
    spec: GoalSpec,
    constraints: list[Constraint] | None = None,
) -> float:
    """KPI after applying perturbation vector p (one amount per driver)."""
    constraints = constraints or resolve_constraints(frame, spec)
    p = np.asarray(p, dtype=float)
    if p.shape != (len(frame.drivers),):
        raise ValidationError("perturbation vector length != driver count")
    for j, c in enumerate(constraints):
        if not (c.lo <= p[j] <= c.hi):
            raise ValidationError(
                f"perturbation {p[j]} for {frame.drivers[j]!r} violates "
                f"[{c.lo}, {c.hi}]"
            )
    items = tuple(
        PerturbationItem(driver=name, mode=constraints[j].mode, amount=float(p[j]))
        for j, name in enumerate(frame.drivers)
    )
    perturbed = apply_perturbation(rows, frame, PerturbationSpec(items=items))
    return kpi_value(model, perturbed)


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n stratified samples in the unit cube, one stratum per row per dim."""
    samples = np.empty((n, d))
    for j in range(d):
        samples[:, j] = (rng.permutation(n) + rng.uniform(size=n)) / n
    return samples


def _norm_cdf(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0)))


def _norm_pdf(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _matern52(a: np.ndarray, b: np.ndarray, length_scale: float, signal_var: float):
    r = cdist(a, b) if a.size and b.size else np.zeros((a.shape[0], b.shape[0]))
    s = math.sqrt(5.0) * r / length_scale
    return signal_var * (1.0 + s + s * s / 3.0) * np.exp(-s)


@dataclass
class Surrogate:
    """Exact GP on standardized objectives over unit-cube inputs."""

    X: np.ndarray
    y_mean: float
    y_std: float
    signal_var: float
    noise_var: float
    length_scale: float
    chol: np.ndarray | None
    alpha: np.ndarray | None
    jitter_escalated: bool = False


def gp_fit(X: np.ndarray, y: np.ndarray, length_scale: float = GP_LENGTH_SCALE) -> Surrogate:
    """Fit with fixed hyperparameters; escalates jitter if K is degenerate."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n == 0:
        return Surrogate(
            X=X.reshape(0, X.shape[1] if X.ndim == 2 else 0),
            y_mean=0.0,
            y_std=1.0,
            signal_var=1.0,
            noise_var=GP_NOISE_FACTOR,
            length_scale=length_scale,
            chol=None,
            alpha=None,
        )
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    ys = (y - y_mean) / y_std
    signal_var = float(ys.var()) if n > 1 else 1.0
    if signal_var == 0.0:
        signal_var = 1.0
    noise = GP_NOISE_FACTOR * signal_var

    K = _matern52(X, X, length_scale, signal_var)
    jitter = noise
    escalated = False
    if n > 1 and bool(np.all(X == X[0])):
        # all-identical inputs: K is a rank-one ones matrix; regularize
        # harder and flag the surrogate as degenerate
        jitter = noise * 10.0
        escalated = True
    chol = None
    while jitter <= 1e3 * signal_var:
        try:
            chol = np.linalg.cholesky(K + jitter * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
            escalated = True
    if chol is None:
        raise ComputeError("surrogate covariance not positive definite")
    alpha = np.linalg.solve(chol.T, np.linalg.solve(chol, ys))
    return Surrogate(
        X=X,
        y_mean=y_mean,
        y_std=y_std,
        signal_var=signal_var,
        noise_var=jitter,
        length_scale=length_scale,
        chol=chol,
        alpha=alpha,
        jitter_escalated=escalated,
    )


def gp_predict(s: Surrogate, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and std on the standardized objective scale."""
    Xq = np.asarray(Xq, dtype=float)
    if s.alpha is None:
        prior_std = math.sqrt(s.signal_var)
        return np.zeros(Xq.shape[0]), np.full(Xq.shape[0], prior_std)
    Kq = _matern52(Xq, s.X, s.length_scale, s.signal_var)
    mean = Kq @ s.alpha
    v = np.linalg.solve(s.chol, Kq.T)
    var = s.signal_var - (v * v).sum(axis=0)
    return mean, np.sqrt(np.maximum(var, 0.0))


def expected_improvement(mean, std, best_so_far: float):
    """EI for maximization; nonnegative, zero when no upside remains."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gain = mean - best_so_far
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        z = np.where(std > 0.0, gain / np.where(std > 0.0, std, 1.0), 0.0)
        ei = np.where(
            std > 0.0,
            gain * _norm_cdf(z) + std * _norm_pdf(z),
            np.maximum(gain, 0.0),
        )
    return np.maximum(ei, 0.0)


def _unit_coords(P: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = hi - lo
    safe = np.where(span > 0.0, span, 1.0)
    return np.where(span > 0.0, (P - lo) / safe, 0.0)


def optimize_goal(
    model: TrainedModel,
    rows: np.ndarray,
    frame: AnalysisFrame,
    spec: GoalSpec,
    time_limit: float | None = None,
) -> GoalResult:
    """Seeded Bayesian optimization over the constraint box.

    Latin-hypercube start, then GP + expected improvement over 1000 fresh
    uniform candidates per round until the evaluation budget (or the
    optional wall-clock limit, reported via ``timed_out``) is exhausted.
    """
    if not model.frame.matches(frame):
        raise ValidationError("model was not trained on this frame")
    constraints = resolve_constraints(frame, spec)
    lo = np.array([c.lo for c in constraints])
    hi = np.array([c.hi for c in constraints])
    d = len(constraints)
    baseline = kpi_value(model, rows)
    rng = derive_rng(spec.seed, STREAM_GOAL)
    started = time.monotonic()

    def out_of_time() -> bool:
        return time_limit is not None and time.monotonic() - started >= time_limit

    evaluated: list[np.ndarray] = []
    kpis: list[float] = []
    scores: list[float] = []
    timed_out = False

    def run_point(p: np.ndarray) -> None:
        p = snap_to_constraints(p, frame, constraints)
        kpi = objective_eval(model, rows, frame, p, spec, constraints)
        evaluated.append(p)
        kpis.append(kpi)
        scores.append(internal_score(kpi, spec))

    init = lo + latin_hypercube(spec.n_init, d, rng) * (hi - lo)
    for p in init:
        if out_of_time():
            timed_out = True
            break
        run_point(p)

    while not timed_out and len(evaluated) < spec.budget:
        if out_of_time():
            timed_out = True
            break
        X_unit = _unit_coords(np.vstack(evaluated), lo, hi)
        y = np.asarray(scores)
        surrogate = gp_fit(X_unit, y)
        candidates = rng.uniform(lo, hi, size=(N_CANDIDATES, d))
        mean, std = gp_predict(surrogate, _unit_coords(candidates, lo, hi))
        best_standardized = (y.max() - surrogate.y_mean) / surrogate.y_std
        ei = expected_improvement(mean, std, best_standardized)
        run_point(candidates[int(np.argmax(ei))])

    if not evaluated:
        return GoalResult(
            best_perturbation={name: 0.0 for name in frame.drivers},
            best_kpi=baseline,
            baseline_kpi=baseline,
            uplift=0.0,
            confidence=model.confidence,
            trace=(),
            timed_out=timed_out,
        )

    best = int(np.argmax(scores))
    best_kpi = kpis[best]
    trace = tuple(
        TracePoint(
            perturbation={n: float(v) for n, v in zip(frame.drivers, p)},
            kpi=float(k),
        )
        for p, k in zip(evaluated, kpis)
    )
    return GoalResult(
        best_perturbation={n: float(v) for n, v in zip(frame.drivers, evaluated[best])},
        best_kpi=float(best_kpi),
        baseline_kpi=float(baseline),
        uplift=float(best_kpi - baseline),
        confidence=model.confidence,
        trace=trace,
        timed_out=timed_out,
    )
