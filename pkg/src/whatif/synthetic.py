"""Synthetic use-case datasets with emitted ground truth for test oracles.

Three desk-scale generators mirror common business analyses: media spend
vs. sales (continuous KPI, linear response plus Gaussian noise at 10% of
the response spread) and two activity-count funnels with a binary outcome
produced by a hard thresholded linear score. The generating parameters
are returned alongside the data so tests can check recovery against them.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .dataset import Dataset, parse_csv
from .errors import ValidationError
from .rng import STREAM_SYNTH, derive_rng

USE_CASES = ("marketing_mix", "retention", "deal_closing")

NOISE_FRACTION = 0.1  # continuous-KPI noise std as a fraction of response std

_MARKETING_CHANNELS = {
    # channel -> (daily spend scale in $K, sales coefficient)
    "Internet": (50.0, 4.0),
    "Facebook": (40.0, 3.0),
    "YouTube": (30.0, 2.2),
    "TV": (20.0, 1.5),
    "Radio": (10.0, 0.9),
}
_MARKETING_INTERCEPT = 12.0

_DEAL_ACTIVITIES = {
    # activity -> (Poisson rate, score weight)
    "Chat": (3.0, 0.15),
    "Meeting": (2.0, 0.05),
    "Open Marketing Email": (8.0, 1.0),
    "Renewal": (1.5, 2.0),
    "Call": (4.0, 0.8),
    "LinkedIn Contact": (2.5, 0.04),
    "Initiate New Contact": (2.0, 0.08),
}
_DEAL_BIAS = -15.8

_RETENTION_ACTIVITIES = {
    "Help Chat": (2.0, 0.3),
    "New Document": (5.0, 0.5),
    "Visualization Added": (3.0, 0.9),
    "Pivot": (1.5, 0.6),
    "Join": (1.0, 0.4),
}
_RETENTION_FORMULA = "Used 3+ Formulas In 2wk"  # binary hypothesis driver
_RETENTION_FORMULA_RATE = 0.35
_RETENTION_FORMULA_WEIGHT = 2.0
_RETENTION_BIAS = -7.6

_USE_CASE_INDEX = {name: i for i, name in enumerate(USE_CASES)}


def _csv_text(header: list[str], rows: list[list[str]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return out.getvalue()


def _marketing_mix(n_rows: int, rng: np.random.Generator) -> tuple[str, dict]:
    channels = list(_MARKETING_CHANNELS)
    spends = np.column_stack(
        [
            np.round(rng.uniform(0.0, _MARKETING_CHANNELS[c][0], size=n_rows), 2)
            for c in channels
        ]
    )
    coefs = np.array([_MARKETING_CHANNELS[c][1] for c in channels])
    response = _MARKETING_INTERCEPT + spends @ coefs
    noise_std = NOISE_FRACTION * float(response.std())
    sales = response + rng.normal(0.0, noise_std, size=n_rows)

    rows = [
        [repr(float(x)) for x in spends[i]] + [repr(float(sales[i]))]
        for i in range(n_rows)
    ]
    truth = {
        "use_case": "marketing_mix",
        "kpi": "sales",
        "kpi_kind": "continuous",
        "rule": "linear",
        "intercept": _MARKETING_INTERCEPT,
        "coefficients": {c: _MARKETING_CHANNELS[c][1] for c in channels},
        "noise_std": noise_std,
    }
    return _csv_text(channels + ["sales"], rows), truth


def _threshold_counts(
    n_rows: int,
    rng: np.random.Generator,
    activities: dict[str, tuple[float, float]],
    bias: float,
    kpi_name: str,
    use_case: str,
    account_col: bool = False,
    extra_binary: tuple[str, float, float] | None = None,
) -> tuple[str, dict]:
    names = list(activities)
    counts = np.column_stack(
        [rng.poisson(activities[a][0], size=n_rows) for a in names]
    ).astype(float)
    weights = np.array([activities[a][1] for a in names])
    score = counts @ weights + bias

    header = list(names)
    columns = [counts[:, j] for j in range(len(names))]
    coefficients = {a: activities[a][1] for a in names}

    if extra_binary is not None:
        extra_name, rate, weight = extra_binary
        flag = (rng.uniform(size=n_rows) < rate).astype(float)
        score = score + weight * flag
        header.append(extra_name)
        columns.append(flag)
        coefficients[extra_name] = weight

    labels = (score > 0.0).astype(int)
    rows = []
    for i in range(n_rows):
        cells = [str(int(col[i])) if col[i] == int(col[i]) else repr(float(col[i]))
                 for col in columns]
        cells.append(str(labels[i]))
        if account_col:
            cells.append(f"ACCT-{i + 1:05d}")
        rows.append(cells)

    full_header = header + [kpi_name] + (["Account"] if account_col else [])
    truth = {
        "use_case": use_case,
        "kpi": kpi_name,
        "kpi_kind": "discrete",
        "rule": "threshold",
        "bias": bias,
        "coefficients": coefficients,
    }
    return _csv_text(full_header, rows), truth


def generate_synthetic(
    use_case: str, n_rows: int, seed: int
) -> tuple[Dataset, dict]:
    """Deterministic dataset plus its ground-truth generating parameters."""
    if use_case not in USE_CASES:
        raise ValidationError(
            f"unknown use_case {use_case!r}; expected one of {', '.join(USE_CASES)}"
        )
    if n_rows < 10:
        raise ValidationError("n_rows must be at least 10")
    rng = derive_rng(seed, STREAM_SYNTH, _USE_CASE_INDEX[use_case])

    if use_case == "marketing_mix":
        text, truth = _marketing_mix(n_rows, rng)
    elif use_case == "deal_closing":
        text, truth = _threshold_counts(
            n_rows,
            rng,
            _DEAL_ACTIVITIES,
            _DEAL_BIAS,
            "Deal Closed?",
            use_case,
            account_col=True,
        )
    else:
        text, truth = _threshold_counts(
            n_rows,
            rng,
            _RETENTION_ACTIVITIES,
            _RETENTION_BIAS,
            "Retained6mo?",
            use_case,
            extra_binary=(
                _RETENTION_FORMULA,
                _RETENTION_FORMULA_RATE,
                _RETENTION_FORMULA_WEIGHT,
            ),
        )
    return parse_csv(text), truth
