"""Joint Gaussian KDE: evaluation, leave-one-out evaluation, squared integral.

All kernel sums run in log space with a max shift per row, in a fixed
summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from ._parallel import for_each_chunk
from .bandwidth import (
    BandwidthMatrix,
    BandwidthSpec,
    LocalFactors,
    bandwidth_matrix,
    local_factors,
)
from .dataset import Dataset, covariance_decomposition
from .errors import DataError


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Sample points together with the kernel covariance used to smooth them.

    Adaptive models carry ``local`` factors; kernel ``i`` then has covariance
    ``local.lambdas[i]**2 * bandwidth.H``.
    """

    points: NDArray[np.float64]
    bandwidth: BandwidthMatrix
    output_index: int = -1
    spec: BandwidthSpec | None = None
    local: LocalFactors | None = None
    data: Dataset | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float)).copy()
        if pts.shape[1] != self.bandwidth.d:
            raise DataError(f"points have {pts.shape[1]} columns, bandwidth is {self.bandwidth.d}-D")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "output_index", self.output_index % pts.shape[1])
        if self.spec is not None and self.spec.adaptive != (self.local is not None):
            raise DataError("local factors must be present exactly for adaptive methods")

    @classmethod
    def from_bandwidth(cls, points, H, output_index: int = -1, lambdas=None) -> "FittedModel":
        """Model with an explicit kernel covariance (no bandwidth selection)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        local = None
        if lambdas is not None:
            lam = np.asarray(lambdas, dtype=float)
            if lam.shape != (pts.shape[0],) or not np.all(lam > 0):
                raise DataError("need one positive local factor per sample")
            nan = np.full(lam.shape, np.nan)
            local = LocalFactors(lam, math.nan, nan, nan)
        return cls(pts, BandwidthMatrix(H), output_index, None, local)

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def adaptive(self) -> bool:
        return self.local is not None

    @property
    def lambdas(self) -> NDArray[np.float64]:
        return self.local.lambdas if self.local is not None else np.ones(self.M)

    @property
    def columns(self) -> tuple[str, ...] | None:
        return self.data.columns if self.data is not None else None

    @cached_property
    def whitened(self) -> NDArray[np.float64]:
        return _kernels.whiten(self.points, self.bandwidth.chol)

    @cached_property
    def _log_kernel_terms(self) -> tuple[NDArray, NDArray]:
        # per-kernel (1/lambda^2, -d*log(lambda)) for the adaptive rescaling
        lam = self.lambdas
        return 1.0 / (lam * lam), -self.d * np.log(lam)

    @property
    def _log_norm(self) -> float:
        return -0.5 * (self.d * _kernels.LOG_2PI + self.bandwidth.log_det)


def fit(data: Dataset, spec: BandwidthSpec) -> FittedModel:
    """Build the KDE of ``data`` under ``spec`` (local factors included)."""
    decomp = covariance_decomposition(data)
    bw = bandwidth_matrix(decomp, spec)
    local = local_factors(data, bw, spec.alpha) if spec.adaptive else None
    return FittedModel(data.values, bw, data.output_index, spec, local, data)


def kernel_log_eval(delta, H: BandwidthMatrix) -> float:
    delta = np.asarray(delta, dtype=float).reshape(1, -1)
    if delta.shape[1] != H.d:
        raise DataError(f"offset has {delta.shape[1]} components, kernel is {H.d}-D")
    z = _kernels.whiten(delta, H.chol)[0]
    return float(-0.5 * (z @ z) - 0.5 * (H.d * _kernels.LOG_2PI + H.log_det))


def kernel_eval(delta, H: BandwidthMatrix) -> float:
    """Gaussian density N(delta; 0, H)."""
    return math.exp(kernel_log_eval(delta, H))


def _query(model: FittedModel, points) -> NDArray[np.float64]:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1) if x.size == model.d else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise DataError(f"query points must have {model.d} columns")
    return x


def kde_log_evaluate(model: FittedModel, points) -> NDArray[np.float64]:
    x = _query(model, points)
    zq = _kernels.whiten(x, model.bandwidth.chol) if len(x) else np.empty((0, model.d))
    z = model.whitened
    inv_lam2, log_c = model._log_kernel_terms
    out = np.empty(len(x))

    def work(s, e):
        a = -0.5 * _kernels.sqdist(zq[s:e], z) * inv_lam2 + log_c
        out[s:e] = _kernels.row_logsumexp(a)

    for_each_chunk(len(x), work)
    return out - math.log(model.M) + model._log_norm


def kde_evaluate(model: FittedModel, points) -> NDArray[np.float64]:
    """Density estimate at each query point (shape ``(n, d)``)."""
    return np.exp(kde_log_evaluate(model, points))


def kde_loo_log_all(model: FittedModel) -> NDArray[np.float64]:
    """Log leave-one-out density at every sample point.

    Adaptive models keep the local factors of the full sample.
    """
    m = model.M
    if m < 2:
        raise DataError("leave-one-out needs at least 2 samples")
    z = model.whitened
    inv_lam2, log_c = model._log_kernel_terms
    out = np.empty(m)

    def work(s, e):
        a = -0.5 * _kernels.sqdist(z[s:e], z) * inv_lam2 + log_c
        a[np.arange(e - s), np.arange(s, e)] = -np.inf
        out[s:e] = _kernels.row_logsumexp(a)

    for_each_chunk(m, work)
    return out - math.log(m - 1) + model._log_norm


def kde_loo_evaluate(model: FittedModel, index: int) -> float:
    m = model.M
    if m < 2:
        raise DataError("leave-one-out needs at least 2 samples")
    if not 0 <= index < m:
        raise IndexError(f"row {index} out of range for {m} samples")
    z = model.whitened
    inv_lam2, log_c = model._log_kernel_terms
    a = -0.5 * _kernels.sqdist(z[index:index + 1], z) * inv_lam2 + log_c
    a[0, index] = -np.inf
    return math.exp(float(_kernels.row_logsumexp(a)[0]) - math.log(m - 1) + model._log_norm)


def squared_integral(model: FittedModel) -> float:
    """Integral of the squared density estimate over all of R^d.

    Uses the Gaussian convolution identity: kernels ``i`` and ``j`` combine
    into one kernel with covariance ``(lambda_i**2 + lambda_j**2) * H``.
    """
    m, d = model.M, model.d
    z = model.whitened
    lam2 = model.lambdas ** 2
    rows = np.empty(m)

    def work(s, e):
        q = _kernels.sqdist(z[s:e], z)
        if model.adaptive:
            sc = lam2[s:e, None] + lam2[None, :]
            a = -0.5 * q / sc - 0.5 * d * np.log(sc)
        else:
            a = -0.25 * q - 0.5 * d * math.log(2.0)
        rows[s:e] = _kernels.row_logsumexp(a)

    for_each_chunk(m, work)
    total = float(_kernels.row_logsumexp(rows[None, :])[0])
    return math.exp(total - 2.0 * math.log(m) + model._log_norm)
