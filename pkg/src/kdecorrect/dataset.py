"""Sample data: loading, validation, splitting and covariance eigendecomposition."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DataError, DegenerateSampleError

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12


def _readonly(a: NDArray) -> NDArray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """An M x d sample matrix with named columns.

    The output variable sits at ``output_index`` (last column by default);
    every other column is an input.
    """

    columns: tuple[str, ...]
    values: NDArray[np.float64]
    output_index: int = -1
    dropped: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DataError("sample matrix must be two-dimensional")
        m, d = values.shape
        if len(self.columns) != d:
            raise DataError(f"{len(self.columns)} column names for {d} columns")
        if d < 2:
            raise DataError("need at least two columns (inputs and an output)")
        if m < 2:
            raise DataError(f"need at least 2 complete rows, got {m}")
        if not np.all(np.isfinite(values)):
            raise DataError("sample contains NaN or infinite entries")
        var = values.var(axis=0, ddof=1)
        flat = [c for c, v in zip(self.columns, var) if not v > 0.0]
        if flat:
            raise DataError(f"zero-variance column: {', '.join(flat)}")
        idx = self.output_index
        if not -d <= idx < d:
            raise DataError(f"output index {idx} out of range for {d} columns")
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))
        object.__setattr__(self, "output_index", idx % d)
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def from_array(cls, values, columns: Sequence[str] | None = None, output_index: int = -1) -> "Dataset":
        values = np.asarray(values, dtype=float)
        if columns is None:
            columns = [f"x{i}" for i in range(values.shape[1])]
        return cls(tuple(columns), values, output_index)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def output_column(self) -> str:
        return self.columns[self.output_index]

    @property
    def input_indices(self) -> list[int]:
        return [i for i in range(self.d) if i != self.output_index]

    @property
    def input_columns(self) -> list[str]:
        return [self.columns[i] for i in self.input_indices]

    @property
    def inputs(self) -> NDArray[np.float64]:
        return self.values[:, self.input_indices]

    @property
    def output(self) -> NDArray[np.float64]:
        return self.values[:, self.output_index]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.columns, self.values[np.asarray(rows)], self.output_index)


@dataclass(frozen=True)
class CovarianceDecomposition:
    """Sample covariance ``cov = eigvecs @ diag(eigvals) @ eigvecs.T``.

    Eigenvalues are sorted in ascending order and each eigenvector is
    signed so that its largest-magnitude component is non-negative.
    """

    cov: NDArray[np.float64]
    eigvecs: NDArray[np.float64]
    eigvals: NDArray[np.float64]
    mean: NDArray[np.float64] = field(default=None, repr=False)

    @property
    def d(self) -> int:
        return self.cov.shape[0]


def _cell(token: str) -> float:
    token = token.strip()
    if not token:
        return math.nan
    try:
        v = float(token)
    except ValueError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def load_csv(path, output_column: str | None = None) -> Dataset:
    """Read a comma-separated file with one header row.

    Rows holding a blank or non-numeric cell are dropped; the count is kept
    in ``Dataset.dropped``.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows, dropped = [], 0
        for raw in reader:
            if not raw or all(not t.strip() for t in raw):
                continue
            vals = [_cell(t) for t in raw]
            if len(vals) != len(header) or any(math.isnan(v) for v in vals):
                dropped += 1
                continue
            rows.append(vals)
    if output_column is None:
        out = len(header) - 1
    elif output_column in header:
        out = header.index(output_column)
    else:
        raise DataError(f"output column {output_column!r} not found in {path}")
    if len(rows) < 2:
        raise DataError(f"{path}: fewer than 2 complete rows")
    data = Dataset(tuple(header), np.array(rows, dtype=float), out, dropped)
    log.info("loaded %s: %d rows retained, %d dropped", path, data.M, dropped)
    return data


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` so that :func:`load_csv` reproduces it bit for bit."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(data.columns)
        for row in data.values:
            w.writerow([repr(float(v)) for v in row])
    os.replace(tmp, path)


def split_train_validation(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Random train/validation partition.

    The validation part holds ``floor((1 - fraction) * M)`` rows, drawn
    uniformly without replacement; the rest is training data. Both parts keep the original
    row order.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must lie in (0, 1), got {fraction}")
    # ceil(f*M) == M - floor((1-f)*M); the nudge absorbs rounding in f*M
    n_train = math.ceil(fraction * data.M - 1e-9)
    n_val = data.M - n_train
    if n_train < 2 or n_val < 1:
        raise DataError(f"split of {data.M} rows at {fraction} leaves too few rows")
    rng = np.random.default_rng(seed)
    val = np.sort(rng.choice(data.M, size=n_val, replace=False))
    mask = np.ones(data.M, dtype=bool)
    mask[val] = False
    return data.subset(np.flatnonzero(mask)), data.subset(val)


def decompose(cov: NDArray) -> tuple[NDArray, NDArray]:
    """Ascending, sign-fixed eigendecomposition of a symmetric matrix."""
    w, q = np.linalg.eigh(cov)
    order = np.argsort(w, kind="stable")
    w, q = w[order], q[:, order]
    lead = q[np.argmax(np.abs(q), axis=0), np.arange(q.shape[1])]
    q = q * np.where(lead < 0, -1.0, 1.0)
    return w, q


def covariance_decomposition(data: Dataset) -> CovarianceDecomposition:
    x = data.values
    cov = np.cov(x, rowvar=False, ddof=1)
    cov = 0.5 * (cov + cov.T)
    w, q = decompose(cov)
    if w[0] <= 0 or w[-1] / w[0] > MAX_CONDITION:
        raise DegenerateSampleError("degenerate sample: covariance is numerically singular")
    return CovarianceDecomposition(_readonly(cov), _readonly(q), _readonly(w), _readonly(x.mean(axis=0)))
