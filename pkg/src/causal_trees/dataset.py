"""Schema-typed survey extracts: loading, validation, and design encoding.

A dataset is a rectangular CSV plus a schema that assigns each analysis
column a role (``response``, ``treatment``, ``confounder``, ``group``,
``weight``, ``ignore``) and a kind (``numeric`` with optional inclusive
bounds, ``binary``, or ``categorical`` with declared levels).  Loading
validates every cell against its declared kind, optionally drops rows with
missing values, and produces typed column storage.  Encoding turns the
covariate columns into a float design matrix with one-hot or
reference-coded categorical expansion.

Cells equal to one of ``""``, ``"NA"``, ``"NaN"``, ``"nan"`` are treated
as missing.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    CellError,
    IncompleteData,
    SchemaMismatch,
    UsageError,
    WeightError,
)

ROLES = ("response", "treatment", "confounder", "group", "weight", "ignore")
KINDS = ("numeric", "binary", "categorical")
MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan"})

__all__ = [
    "ColumnSpec",
    "Dataset",
    "DesignMatrix",
    "load_dataset",
    "load_schema",
    "encode_design_matrix",
    "rescale_weights",
    "delta_outcome",
    "binarize_outcome",
]


@dataclass(frozen=True)
class ColumnSpec:
    """Declared role and kind of a single CSV column.

    Args:
        name: column header in the CSV.
        role: one of ``ROLES``.
        kind: one of ``KINDS``.
        bounds: optional inclusive (low, high) range for numeric columns.
        levels: declared category labels for categorical columns; the
            first level is the reference level under reference coding.
    """

    name: str
    role: str
    kind: str
    bounds: tuple[float, float] | None = None
    levels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise SchemaMismatch(f"column {self.name!r}: unknown role {self.role!r}")
        if self.kind not in KINDS:
            raise SchemaMismatch(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.levels) < 2:
            raise SchemaMismatch(
                f"column {self.name!r}: categorical needs at least two levels"
            )
        if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
            raise SchemaMismatch(f"column {self.name!r}: bounds must satisfy low < high")


@dataclass(frozen=True)
class Dataset:
    """Typed column store produced by :func:`load_dataset`.

    Numeric and binary columns are stored as float arrays; categorical
    columns as integer codes into their declared levels.  ``row_index``
    holds the surviving 0-based data-row numbers of the source CSV and
    ``drop_report`` counts dropped rows per column that caused the drop.
    """

    schema: tuple[ColumnSpec, ...]
    columns: dict[str, np.ndarray]
    n_rows: int
    row_index: np.ndarray
    drop_report: dict[str, int] = field(default_factory=dict)

    def spec(self, name: str) -> ColumnSpec:
        for c in self.schema:
            if c.name == name:
                return c
        raise SchemaMismatch(f"no column named {name!r} in schema")

    def _single(self, role: str) -> ColumnSpec | None:
        hits = [c for c in self.schema if c.role == role]
        return hits[0] if hits else None

    @property
    def response_spec(self) -> ColumnSpec:
        spec = self._single("response")
        assert spec is not None  # guaranteed by load-time validation
        return spec

    @property
    def treatment_spec(self) -> ColumnSpec:
        spec = self._single("treatment")
        assert spec is not None
        return spec

    @property
    def group_spec(self) -> ColumnSpec | None:
        return self._single("group")

    @property
    def weight_spec(self) -> ColumnSpec | None:
        return self._single("weight")

    def response(self) -> np.ndarray:
        return self.columns[self.response_spec.name]

    def treatment(self) -> np.ndarray:
        return self.columns[self.treatment_spec.name]

    def weights(self) -> np.ndarray:
        spec = self.weight_spec
        if spec is None:
            return np.ones(self.n_rows)
        return self.columns[spec.name]

    def group_labels(self) -> np.ndarray:
        """Group label string per row; a single 'all' group when undeclared."""
        spec = self.group_spec
        if spec is None:
            return np.array(["all"] * self.n_rows, dtype=object)
        col = self.columns[spec.name]
        if spec.kind == "categorical":
            return np.array([spec.levels[int(v)] for v in col], dtype=object)
        return np.array([str(int(v)) for v in col], dtype=object)


@dataclass(frozen=True)
class DesignMatrix:
    """Float covariate matrix with named columns and source row index."""

    values: np.ndarray
    columns: tuple[str, ...]
    row_index: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column_position(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise UsageError(f"design matrix has no column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_position(name)]

    def with_column(self, name: str, values: np.ndarray) -> "DesignMatrix":
        """Copy of the matrix with one appended column."""
        if name in self.columns:
            raise UsageError(f"column {name!r} already present")
        vals = np.asarray(values, dtype=float).reshape(-1)
        if vals.shape[0] != self.n_rows:
            raise UsageError("appended column length does not match row count")
        return DesignMatrix(
            values=np.column_stack([self.values, vals]),
            columns=self.columns + (name,),
            row_index=self.row_index,
        )

    def with_values(self, values: np.ndarray) -> "DesignMatrix":
        return DesignMatrix(values=values, columns=self.columns, row_index=self.row_index)


def load_schema(source: str | Path) -> tuple[ColumnSpec, ...]:
    """Parse a JSON schema file mapping column name -> {role, kind, ...}."""
    try:
        text = Path(source).read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaMismatch(f"cannot read schema file {source!r}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"schema file {source!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not raw:
        raise SchemaMismatch("schema must be a non-empty JSON object")
    specs = []
    for name, entry in raw.items():
        if not isinstance(entry, dict) or "role" not in entry or "kind" not in entry:
            raise SchemaMismatch(f"column {name!r}: entry needs 'role' and 'kind'")
        bounds = entry.get("bounds")
        specs.append(
            ColumnSpec(
                name=name,
                role=entry["role"],
                kind=entry["kind"],
                bounds=tuple(bounds) if bounds is not None else None,
                levels=tuple(entry.get("levels", ())),
            )
        )
    return tuple(specs)


def _open_rows(csv_source) -> Iterable[list[str]]:
    if hasattr(csv_source, "read"):
        return csv.reader(csv_source)
    text = Path(csv_source).read_text(encoding="utf-8")
    return csv.reader(io.StringIO(text))


def _parse_cell(spec: ColumnSpec, token: str, row: int) -> float:
    where = f"row {row}, column {spec.name!r}"
    if spec.kind == "categorical":
        if token not in spec.levels:
            raise CellError(f"{where}: {token!r} is not a declared level")
        return float(spec.levels.index(token))
    try:
        value = float(token)
    except ValueError:
        raise CellError(f"{where}: {token!r} is not numeric") from None
    if not np.isfinite(value):
        raise CellError(f"{where}: non-finite value {token!r}")
    if spec.kind == "binary":
        if value not in (0.0, 1.0):
            raise CellError(f"{where}: binary cell must be 0 or 1, got {token!r}")
        return value
    if spec.bounds is not None and not (spec.bounds[0] <= value <= spec.bounds[1]):
        raise CellError(
            f"{where}: {value!r} outside declared bounds {list(spec.bounds)}"
        )
    return value


def _validate_roles(schema: Sequence[ColumnSpec]) -> None:
    counts = {role: sum(1 for c in schema if c.role == role) for role in ROLES}
    if counts["response"] != 1:
        raise SchemaMismatch("schema must declare exactly one response column")
    if counts["treatment"] != 1:
        raise SchemaMismatch("schema must declare exactly one treatment column")
    if counts["group"] > 1:
        raise SchemaMismatch("schema may declare at most one group column")
    if counts["weight"] > 1:
        raise SchemaMismatch("schema may declare at most one weight column")
    treatment = next(c for c in schema if c.role == "treatment")
    if treatment.kind != "binary":
        raise SchemaMismatch("treatment column must be binary")
    weight = next((c for c in schema if c.role == "weight"), None)
    if weight is not None and weight.kind != "numeric":
        raise SchemaMismatch("weight column must be numeric")


def load_dataset(
    csv_source,
    schema: Sequence[ColumnSpec],
    *,
    drop_incomplete: bool = True,
) -> Dataset:
    """Read and validate a CSV against its schema.

    Args:
        csv_source: path or open text file containing a header row.
        schema: column declarations; columns of role ``ignore`` are read
            past without validation, and header columns absent from the
            schema are ignored entirely.
        drop_incomplete: drop rows with missing cells in non-ignored
            columns (counted per column in ``drop_report``); when False a
            missing cell raises :class:`IncompleteData`.

    Raises:
        SchemaMismatch: header/schema inconsistencies or role violations.
        CellError: a cell fails to parse or violates kind/bounds.
        IncompleteData: missing values present with dropping disabled.
    """
    schema = tuple(schema)
    _validate_roles(schema)
    rows = iter(_open_rows(csv_source))
    try:
        header = next(rows)
    except StopIteration:
        raise SchemaMismatch("CSV is empty (no header row)") from None
    position: dict[str, int] = {}
    for spec in schema:
        if spec.name not in header:
            raise SchemaMismatch(f"schema column {spec.name!r} missing from CSV header")
        position[spec.name] = header.index(spec.name)

    active = [c for c in schema if c.role != "ignore"]
    parsed: dict[str, list[float]] = {c.name: [] for c in active}
    kept_rows: list[int] = []
    drop_report: dict[str, int] = {}
    n_seen = 0
    for irow, row in enumerate(rows):
        if not row:
            continue
        n_seen += 1
        missing = [c.name for c in active if row[position[c.name]].strip() in MISSING_TOKENS]
        if missing:
            if not drop_incomplete:
                raise IncompleteData(
                    f"row {irow}: missing value in column(s) {', '.join(missing)}"
                )
            for name in missing:
                drop_report[name] = drop_report.get(name, 0) + 1
            continue
        for spec_ in active:
            parsed[spec_.name].append(
                _parse_cell(spec_, row[position[spec_.name]].strip(), irow)
            )
        kept_rows.append(irow)

    columns = {name: np.asarray(vals, dtype=float) for name, vals in parsed.items()}
    data = Dataset(
        schema=schema,
        columns=columns,
        n_rows=len(kept_rows),
        row_index=np.asarray(kept_rows, dtype=np.int64),
        drop_report=drop_report,
    )
    w = data.weights()
    if data.weight_spec is not None and (not np.all(np.isfinite(w)) or np.any(w <= 0)):
        raise WeightError("weights must be finite and strictly positive")
    return data


def encode_design_matrix(
    data: Dataset,
    scheme: str = "full_one_hot",
    *,
    roles: tuple[str, ...] = ("treatment", "confounder", "group"),
) -> DesignMatrix:
    """Encode covariate columns as a float matrix.

    Categorical columns expand to indicator columns named
    ``"<col>=<level>"``; ``full_one_hot`` keeps every level while
    ``reference_coded`` drops the first declared level.  Numeric and
    binary columns pass through unchanged.  Column blocks follow schema
    declaration order.
    """
    if scheme not in ("full_one_hot", "reference_coded"):
        raise UsageError(f"unknown encoding scheme {scheme!r}")
    blocks: list[np.ndarray] = []
    names: list[str] = []
    for spec in data.schema:
        if spec.role not in roles:
            continue
        col = data.columns[spec.name]
        if spec.kind == "categorical":
            levels = spec.levels[1:] if scheme == "reference_coded" else spec.levels
            for level in levels:
                code = spec.levels.index(level)
                blocks.append((col == code).astype(float))
                names.append(f"{spec.name}={level}")
        else:
            blocks.append(col.astype(float))
            names.append(spec.name)
    if not blocks:
        raise UsageError("no covariate columns selected for encoding")
    return DesignMatrix(
        values=np.column_stack(blocks),
        columns=tuple(names),
        row_index=data.row_index.copy(),
    )


def rescale_weights(data: Dataset) -> Dataset:
    """Rescale survey weights to sum to the number of rows.

    Idempotent: applying twice equals applying once to 1e-12.  A dataset
    without a weight column is returned unchanged (unit weights already
    have mean one).
    """
    spec = data.weight_spec
    if spec is None:
        return data
    w = data.columns[spec.name]
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise WeightError("weights must be finite and strictly positive")
    total = float(np.sum(w))
    if total <= 0:
        raise WeightError("weights sum to zero")
    columns = dict(data.columns)
    columns[spec.name] = w * (data.n_rows / total)
    return replace(data, columns=columns)


def _check_days(values: np.ndarray, what: str, bounds: tuple[float, float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size and (not np.all(np.isfinite(arr)) or np.any((arr < bounds[0]) | (arr > bounds[1]))):
        raise CellError(f"{what} must lie within [{bounds[0]:g}, {bounds[1]:g}]")
    return arr


def delta_outcome(
    baseline_days: np.ndarray,
    followup_days: np.ndarray,
    *,
    bounds: tuple[float, float] = (0.0, 30.0),
) -> np.ndarray:
    """Elementwise change in days of use: followup minus baseline."""
    base = _check_days(baseline_days, "baseline days", bounds)
    follow = _check_days(followup_days, "follow-up days", bounds)
    if base.shape != follow.shape:
        raise UsageError("baseline and follow-up arrays must have equal shape")
    return follow - base


def binarize_outcome(
    days: np.ndarray,
    *,
    bounds: tuple[float, float] = (0.0, 30.0),
) -> np.ndarray:
    """Map days of use to a 0/1 indicator of any use (days > 0)."""
    arr = _check_days(days, "days", bounds)
    return (arr > 0).astype(float)
