"""Observed series container and CSV ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["Dataset", "read_csv"]


@dataclass(frozen=True)
class Dataset:
    """A stationary sample stored as an ``n x d`` array with rows in time order.

    The array is copied on construction and marked read-only.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DataError(f"dataset must be 1-D or 2-D, got ndim={arr.ndim}")
        if arr.shape[0] < 2:
            raise DataError(f"need at least 2 observations, got n={arr.shape[0]}")
        if arr.shape[1] < 1:
            raise DataError("dataset has no columns")
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0]
            raise DataError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path, delimiter: str = ",") -> Dataset:
    """Read a CSV file with one row per time point and one column per series.

    A header row is detected when its cells are not all numeric. Any
    non-numeric cell after the header raises :class:`DataError` naming the
    line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, raw in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            cells = [c.strip() for c in raw]
            if not cells or all(c == "" for c in cells):
                continue
            if lineno == 1 and not all(_is_number(c) for c in cells):
                continue
            try:
                row = [float(c) for c in cells]
            except ValueError:
                bad = next(c for c in cells if not _is_number(c))
                raise DataError(f"{path}:{lineno}: non-numeric cell {bad!r}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.asarray(rows))
