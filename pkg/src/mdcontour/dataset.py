"""Tabular data loading and per-column z-score normalization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class DatasetError(Exception):
    pass


class MissingHeader(DatasetError):
    pass


class NonNumericCell(DatasetError):
    def __init__(self, row: int, col: str):
        self.row = row
        self.col = col
        super().__init__(f"non-numeric value at row {row}, column {col!r}")


class TooFewRows(DatasetError):
    pass


@dataclass(frozen=True)
class ColumnStats:
    """Pre-normalization statistics, kept for round-tripping values."""

    mean: float
    stdev: float
    min: float
    max: float


@dataclass(frozen=True)
class Dataset:
    """Named numeric columns of equal length.

    ``data`` is row-major (row_count x len(names)).  After ``normalize`` each
    non-constant column is z-scored and ``stats`` holds the original moments;
    constant columns are zeroed and flagged so column indices stay stable.
    """

    names: list[str]
    data: np.ndarray
    stats: list[ColumnStats] = field(default_factory=list)
    constant: list[bool] = field(default_factory=list)
    normalized: bool = False

    @property
    def row_count(self) -> int:
        return self.data.shape[0]

    @property
    def dim_count(self) -> int:
        return self.data.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.column_index(name)]

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}; have {self.names}") from None

    def raw_column(self, name: str) -> np.ndarray:
        """Column values on the original (pre-normalization) scale."""
        i = self.column_index(name)
        col = self.data[:, i]
        if not self.normalized:
            return col.copy()
        s = self.stats[i]
        return col * s.stdev + s.mean


def load_csv(path, delimiter: str = ",", skip_non_numeric: bool = False) -> Dataset:
    """Parse a headered CSV into a Dataset of numeric columns.

    Columns with non-numeric cells are dropped when ``skip_non_numeric`` is
    set, otherwise the first offending cell raises ``NonNumericCell``.  Rows
    whose arity differs from the header are a hard error.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingHeader(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or all(h == "" for h in header):
            raise MissingHeader(f"{path}: no header row")

        rows: list[list[str]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}"
                )
            rows.append(row)

    if len(rows) < 3:
        raise TooFewRows(f"{path}: need at least 3 data rows, got {len(rows)}")

    names: list[str] = []
    cols: list[np.ndarray] = []
    for j, name in enumerate(header):
        values = np.empty(len(rows))
        ok = True
        for i, row in enumerate(rows):
            try:
                values[i] = float(row[j])
            except ValueError:
                if skip_non_numeric:
                    ok = False
                    break
                raise NonNumericCell(i + 1, name) from None
        if ok:
            if not np.all(np.isfinite(values)):
                if skip_non_numeric:
                    continue
                bad = int(np.flatnonzero(~np.isfinite(values))[0])
                raise NonNumericCell(bad + 1, name)
            names.append(name)
            cols.append(values)

    if not names:
        raise DatasetError(f"{path}: no numeric columns")
    return Dataset(names=names, data=np.column_stack(cols))


def normalize(ds: Dataset) -> Dataset:
    """Z-score every column; constant columns become all-zero and are flagged."""
    means = ds.data.mean(axis=0)
    stds = ds.data.std(axis=0)
    mins = ds.data.min(axis=0)
    maxs = ds.data.max(axis=0)

    if ds.normalized:
        # Idempotent: re-normalizing keeps the original round-trip stats.
        out = np.where(stds > 0.0, (ds.data - means) / np.where(stds > 0, stds, 1.0), 0.0)
        return Dataset(ds.names, out, ds.stats, ds.constant, normalized=True)

    constant = [s == 0.0 for s in stds]
    stats = [
        ColumnStats(float(m), float(s), float(lo), float(hi))
        for m, s, lo, hi in zip(means, stds, mins, maxs)
    ]
    safe = np.where(stds > 0, stds, 1.0)
    out = np.where(stds > 0.0, (ds.data - means) / safe, 0.0)
    return Dataset(ds.names, out, stats, constant, normalized=True)


def denormalize(ds: Dataset) -> Dataset:
    """Invert ``normalize`` using the recorded per-column stats."""
    if not ds.normalized:
        return ds
    out = ds.data.copy()
    for j, s in enumerate(ds.stats):
        if ds.constant[j]:
            out[:, j] = s.mean
        else:
            out[:, j] = out[:, j] * s.stdev + s.mean
    return Dataset(ds.names, out, ds.stats, ds.constant, normalized=False)
