"""Tabular ingestion: CSV parsing, schema inference, and KPI/driver selection.

Column kinds are inferred from the data: a column whose non-missing cells
are all drawn from the binary token set and cover both classes is
``binary`` (coerced to 0/1), a column whose cells all parse as numbers is
``numeric``, anything else is ``categorical-text``. Rows with a missing
cell in a numeric or binary column are dropped and counted; text columns
keep their blanks for display.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, ValidationError

KIND_NUMERIC = "numeric"
KIND_BINARY = "binary"
KIND_TEXT = "categorical-text"

KPI_CONTINUOUS = "continuous"
KPI_DISCRETE = "discrete"

# Tokens coerced to 0/1 (lowercased). Nothing else is treated as binary.
_BINARY_TOKENS = {"0": 0.0, "false": 0.0, "no": 0.0, "1": 1.0, "true": 1.0, "yes": 1.0}
# Tokens treated as a missing value in any column.
_MISSING_TOKENS = {"", "na", "n/a", "nan", "null", "none"}


@dataclass(frozen=True)
class ColumnStats:
    min: float
    max: float
    mean: float
    std: float
    distinct_count: int


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    stats: ColumnStats | None = None


@dataclass(frozen=True)
class Dataset:
    """Immutable parsed table; numeric/binary cells are floats, text cells str."""

    id: str
    columns: tuple[ColumnSchema, ...]
    rows: tuple[tuple[object, ...], ...]
    row_count: int
    dropped_rows: int

    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def schema(self, name: str) -> ColumnSchema:
        for col in self.columns:
            if col.name == name:
                return col
        raise ValidationError(f"unknown column {name!r}")

    def column_index(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise ValidationError(f"unknown column {name!r}")

    def column_values(self, name: str) -> np.ndarray:
        """Float vector of a numeric/binary column over retained rows."""
        col = self.schema(name)
        if col.kind == KIND_TEXT:
            raise ValidationError(f"column {name!r} is categorical-text, not numeric")
        j = self.column_index(name)
        return np.array([row[j] for row in self.rows], dtype=float)

    def matrix(self, names: tuple[str, ...] | list[str]) -> np.ndarray:
        """Row-major float matrix of the given numeric/binary columns."""
        cols = [self.column_values(n) for n in names]
        if not cols:
            return np.empty((self.row_count, 0), dtype=float)
        return np.column_stack(cols)


@dataclass(frozen=True)
class AnalysisFrame:
    """A dataset with a designated KPI column and ordered driver columns."""

    dataset: Dataset
    kpi: str
    kpi_kind: str
    drivers: tuple[str, ...]
    # Optional per-driver (floor, ceiling) applied after perturbation.
    column_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def dataset_ref(self) -> str:
        return self.dataset.id

    @property
    def row_count(self) -> int:
        return self.dataset.row_count

    def driver_matrix(self) -> np.ndarray:
        return self.dataset.matrix(self.drivers)

    def kpi_values(self) -> np.ndarray:
        return self.dataset.column_values(self.kpi)

    def driver_kind(self, name: str) -> str:
        return self.dataset.schema(name).kind

    def is_binary_driver(self, name: str) -> bool:
        return self.driver_kind(name) == KIND_BINARY

    def matches(self, other: "AnalysisFrame") -> bool:
        return (
            self.dataset.id == other.dataset.id
            and self.kpi == other.kpi
            and self.drivers == other.drivers
        )


def _classify_column(tokens: list[str]) -> str:
    """Infer the kind of one column from its non-missing cell tokens."""
    present = [t for t in tokens if t.lower() not in _MISSING_TOKENS]
    if not present:
        return KIND_TEXT
    lowered = [t.lower() for t in present]
    if all(t in _BINARY_TOKENS for t in lowered):
        coerced = {_BINARY_TOKENS[t] for t in lowered}
        if coerced == {0.0, 1.0}:
            return KIND_BINARY
    try:
        for t in present:
            float(t)
    except ValueError:
        return KIND_TEXT
    return KIND_NUMERIC


def _coerce(token: str, kind: str) -> object | None:
    """Typed cell value, or None when the cell counts as missing."""
    if kind == KIND_TEXT:
        return token
    if token.lower() in _MISSING_TOKENS:
        return None
    if kind == KIND_BINARY:
        return _BINARY_TOKENS[token.lower()]
    return float(token)


def _column_stats(values: list[float]) -> ColumnStats | None:
    if not values:
        return None
    arr = np.asarray(values, dtype=float)
    return ColumnStats(
        min=float(arr.min()),
        max=float(arr.max()),
        mean=float(arr.mean()),
        std=float(arr.std()),
        distinct_count=int(np.unique(arr).size),
    )


def _content_id(csv_text: str) -> str:
    return hashlib.sha256(csv_text.encode("utf-8")).hexdigest()[:12]


def parse_csv(content: bytes | str) -> Dataset:
    """Parse UTF-8 CSV (header row mandatory) into a typed Dataset.

    Blank lines are skipped, not treated as rows of missing values.
    """
    if isinstance(content, bytes):
        try:
            text = content.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataFormatError(f"input is not UTF-8: {exc}") from exc
    else:
        text = content
    if not text.strip():
        raise DataFormatError("empty input")

    reader = csv.reader(io.StringIO(text))
    records = [row for row in reader if row]
    if not records:
        raise DataFormatError("empty input")

    header = [name.strip() for name in records[0]]
    seen: dict[str, int] = {}
    for name in header:
        seen[name] = seen.get(name, 0) + 1
    dupes = sorted(n for n, c in seen.items() if c > 1)
    if dupes:
        raise DataFormatError(f"duplicate header names: {', '.join(dupes)}")

    raw_rows = records[1:]
    if not raw_rows:
        raise DataFormatError("no data rows")
    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise DataFormatError(
                f"ragged row {i + 2}: expected {len(header)} cells, got {len(row)}"
            )

    cells = [[cell.strip() for cell in row] for row in raw_rows]
    kinds = [_classify_column([row[j] for row in cells]) for j in range(len(header))]

    retained: list[tuple[object, ...]] = []
    dropped = 0
    for row in cells:
        typed = [_coerce(row[j], kinds[j]) for j in range(len(header))]
        if any(v is None for v in typed):
            dropped += 1
            continue
        retained.append(tuple(typed))

    columns = []
    for j, (name, kind) in enumerate(zip(header, kinds)):
        stats = None
        if kind != KIND_TEXT:
            stats = _column_stats([row[j] for row in retained])  # type: ignore[misc]
        columns.append(ColumnSchema(name=name, kind=kind, stats=stats))

    dataset = Dataset(
        id="",
        columns=tuple(columns),
        rows=tuple(retained),
        row_count=len(retained),
        dropped_rows=dropped,
    )
    return Dataset(
        id=_content_id(serialize_csv(dataset)),
        columns=dataset.columns,
        rows=dataset.rows,
        row_count=dataset.row_count,
        dropped_rows=dataset.dropped_rows,
    )


def _format_cell(value: object, kind: str) -> str:
    if kind == KIND_TEXT:
        return str(value)
    if kind == KIND_BINARY:
        return str(int(value))  # type: ignore[arg-type]
    # repr round-trips floats exactly and keeps a decimal point or exponent,
    # so numeric columns never collapse into binary on re-parse.
    return repr(float(value))  # type: ignore[arg-type]


def serialize_csv(dataset: Dataset) -> str:
    """Canonical CSV for retained rows; parse_csv(serialize_csv(d)) == d."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(dataset.column_names())
    kinds = [c.kind for c in dataset.columns]
    for row in dataset.rows:
        writer.writerow([_format_cell(v, k) for v, k in zip(row, kinds)])
    return out.getvalue()


def eligible_driver_names(dataset: Dataset, kpi: str) -> tuple[str, ...]:
    """All numeric/binary columns except the KPI, in dataset order."""
    return tuple(
        c.name for c in dataset.columns if c.kind != KIND_TEXT and c.name != kpi
    )


def make_frame(
    dataset: Dataset,
    kpi: str,
    drivers: list[str] | tuple[str, ...] | None = None,
) -> AnalysisFrame:
    """Select the KPI and driver columns, validating modeling eligibility."""
    kpi_schema = dataset.schema(kpi)
    if kpi_schema.kind == KIND_TEXT:
        raise ValidationError(f"KPI column {kpi!r} is categorical-text")
    kpi_kind = KPI_DISCRETE if kpi_schema.kind == KIND_BINARY else KPI_CONTINUOUS

    if drivers is None:
        selected = eligible_driver_names(dataset, kpi)
    else:
        if len(set(drivers)) != len(drivers):
            raise ValidationError("duplicate driver names")
        for name in drivers:
            schema = dataset.schema(name)
            if name == kpi:
                raise ValidationError(f"KPI {kpi!r} cannot be its own driver")
            if schema.kind == KIND_TEXT:
                raise ValidationError(f"categorical-text driver {name!r}")
        selected = tuple(drivers)
    if not selected:
        raise ValidationError("zero eligible drivers")
    return AnalysisFrame(dataset=dataset, kpi=kpi, kpi_kind=kpi_kind, drivers=selected)
