"""Kernel covariance (bandwidth) matrices for the four bandwidth regimes.

========  =============================  ======================
Method    Kernel covariance              Parameters
========  =============================  ======================
FW        ``h**2 * K``                   ``h``
AW        ``lambda_i**2 * h**2 * K``     ``h, alpha``
SW        ``Q diag(h_k**2 L_k) Q.T``     ``h_1 .. h_d``
SAW       ``lambda_i**2 * (SW matrix)``  ``h_1 .. h_d, alpha``
========  =============================  ======================

``K = Q diag(L) Q.T`` is the sample covariance with eigenvalues sorted in
ascending order, so ``h_1`` scales the direction of smallest spread and
``h_d`` the direction of largest spread.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from ._parallel import for_each_chunk
from .dataset import CovarianceDecomposition, Dataset
from .errors import DataError, NumericalError, PilotUnderflowError

METHODS = ("FW", "AW", "SW", "SAW")
DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class BandwidthSpec:
    """Bandwidth method plus its factor(s).

    Exactly one of ``scalar_factor`` (FW, AW) or ``selective_factor``
    (SW, SAW) is set. ``alpha`` only matters for the adaptive methods.
    """

    method: str
    scalar_factor: float | None = None
    selective_factor: tuple[float, ...] | None = None
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        method = str(self.method).upper()
        if method not in METHODS:
            raise DataError(f"unknown bandwidth method {self.method!r}")
        object.__setattr__(self, "method", method)
        if method in ("FW", "AW"):
            if self.scalar_factor is None or self.selective_factor is not None:
                raise DataError(f"{method} takes a scalar factor only")
            h = float(self.scalar_factor)
            if not (np.isfinite(h) and h > 0):
                raise DataError(f"bandwidth factor must be positive, got {h}")
            object.__setattr__(self, "scalar_factor", h)
        else:
            if self.selective_factor is None or self.scalar_factor is not None:
                raise DataError(f"{method} takes a selective factor vector only")
            h = tuple(float(v) for v in np.atleast_1d(self.selective_factor))
            if not all(np.isfinite(v) and v > 0 for v in h):
                raise DataError(f"selective factors must be positive, got {h}")
            object.__setattr__(self, "selective_factor", h)
        if not 0.0 <= float(self.alpha) <= 1.0:
            raise DataError(f"alpha must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))

    @classmethod
    def create(cls, method: str, factor, alpha: float = DEFAULT_ALPHA) -> "BandwidthSpec":
        """Build a spec, routing ``factor`` to the field the method expects."""
        if str(method).upper() in ("FW", "AW"):
            return cls(method, scalar_factor=float(np.asarray(factor).item()), alpha=alpha)
        return cls(method, selective_factor=tuple(np.atleast_1d(factor)), alpha=alpha)

    @property
    def adaptive(self) -> bool:
        return self.method in ("AW", "SAW")

    @property
    def selective(self) -> bool:
        return self.method in ("SW", "SAW")

    @property
    def factor(self):
        return self.selective_factor if self.selective else self.scalar_factor

    def factor_vector(self, d: int) -> NDArray[np.float64]:
        if self.selective:
            if len(self.selective_factor) != d:
                raise DataError(f"selective factor has {len(self.selective_factor)} components, data has {d}")
            return np.array(self.selective_factor)
        return np.full(d, self.scalar_factor)


@dataclass(frozen=True)
class Partition:
    """Input/output blocks of a bandwidth matrix and the Gaussian conditioning terms."""

    inputs: tuple[int, ...]
    output: int
    H_xx: NDArray[np.float64]
    H_xy: NDArray[np.float64]
    H_yy: float
    chol_xx: NDArray[np.float64]
    log_det_xx: float
    gain: NDArray[np.float64]  # H_yx H_xx^-1
    cond_var: float  # H_yy - H_yx H_xx^-1 H_xy


class BandwidthMatrix:
    """Symmetric positive-definite kernel covariance with cached factorisation."""

    def __init__(self, H):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DataError("bandwidth matrix must be square")
        if not np.all(np.isfinite(H)):
            raise NumericalError("bandwidth matrix has non-finite entries")
        H = 0.5 * (H + H.T)
        try:
            chol = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            raise NumericalError("bandwidth matrix is not positive definite") from None
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        if not np.isfinite(log_det):
            raise NumericalError("bandwidth matrix is numerically singular")
        H.setflags(write=False)
        chol.setflags(write=False)
        self.H = H
        self.chol = chol
        self.log_det = log_det
        self._partitions: dict[int, Partition] = {}

    @property
    def d(self) -> int:
        return self.H.shape[0]

    def partition(self, output_index: int = -1) -> Partition:
        out = output_index % self.d
        if out not in self._partitions:
            self._partitions[out] = self._partition(out)
        return self._partitions[out]

    def _partition(self, out: int) -> Partition:
        if self.d < 2:
            raise DataError("conditioning needs at least one input dimension")
        inputs = tuple(i for i in range(self.d) if i != out)
        H_xx = self.H[np.ix_(inputs, inputs)]
        H_xy = self.H[list(inputs), out]
        H_yy = float(self.H[out, out])
        chol_xx = np.linalg.cholesky(H_xx)
        gain = np.linalg.solve(H_xx, H_xy)
        cond_var = H_yy - float(H_xy @ gain)
        if not cond_var > 0.0:
            raise NumericalError("conditional kernel variance is not positive")
        return Partition(
            inputs, out, H_xx, H_xy, H_yy, chol_xx,
            2.0 * float(np.sum(np.log(np.diag(chol_xx)))), gain, cond_var,
        )

    def __repr__(self) -> str:
        return f"BandwidthMatrix(d={self.d}, log_det={self.log_det:.6g})"


@dataclass(frozen=True)
class LocalFactors:
    """Per-sample bandwidth multipliers ``lambda_i`` of the adaptive regimes."""

    lambdas: NDArray[np.float64]
    alpha: float
    pilot_density: NDArray[np.float64]
    log_pilot: NDArray[np.float64]


def plugin_factor(M: int, d: int, rule: str = "scott") -> float:
    """Scalar bandwidth factor from Scott's or Silverman's rule.

    >>> round(plugin_factor(100, 2), 4)
    0.4642
    """
    if M < 2 or d < 1:
        raise DataError(f"plug-in rule needs M >= 2 and d >= 1, got M={M}, d={d}")
    rule = rule.lower()
    if rule == "scott":
        return float(M ** (-1.0 / (d + 4)))
    if rule == "silverman":
        return float((M * (d + 2) / 4.0) ** (-1.0 / (d + 4)))
    raise DataError(f"unknown plug-in rule {rule!r}")


def fixed_bandwidth(decomp: CovarianceDecomposition, h: float) -> BandwidthMatrix:
    if not h > 0:
        raise DataError(f"bandwidth factor must be positive, got {h}")
    return BandwidthMatrix(h * h * decomp.cov)


def selective_bandwidth(decomp: CovarianceDecomposition, h: Sequence[float]) -> BandwidthMatrix:
    """Scale each eigenvalue of the sample covariance by ``h_k**2``."""
    h = np.asarray(h, dtype=float)
    if h.shape != (decomp.d,):
        raise DataError(f"selective factor needs {decomp.d} components, got {h.size}")
    if not np.all(h > 0):
        raise DataError("selective factors must be positive")
    q = decomp.eigvecs
    return BandwidthMatrix((q * (h * h * decomp.eigvals)) @ q.T)


def bandwidth_matrix(decomp: CovarianceDecomposition, spec: BandwidthSpec) -> BandwidthMatrix:
    if spec.selective:
        return selective_bandwidth(decomp, spec.factor_vector(decomp.d))
    return fixed_bandwidth(decomp, spec.scalar_factor)


def _points(data) -> NDArray[np.float64]:
    if isinstance(data, Dataset):
        return data.values
    return np.atleast_2d(np.asarray(data, dtype=float))


def pilot_log_density(points, base: BandwidthMatrix) -> NDArray[np.float64]:
    """Log of the fixed-bandwidth KDE evaluated at its own sample points."""
    x = _points(points)
    m, d = x.shape
    z = _kernels.whiten(x, base.chol)
    out = np.empty(m)

    def work(s, e):
        out[s:e] = _kernels.row_logsumexp(-0.5 * _kernels.sqdist(z[s:e], z))

    for_each_chunk(m, work)
    return out - np.log(m) - 0.5 * (d * _kernels.LOG_2PI + base.log_det)


def local_factors(data, base: BandwidthMatrix, alpha: float = DEFAULT_ALPHA) -> LocalFactors:
    """Abramson-style local factors ``(pilot_i / g) ** -alpha``.

    ``g`` is the geometric mean of the pilot densities, so the factors have
    geometric mean one. The pilot is the fixed KDE with bandwidth ``base``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DataError(f"alpha must lie in [0, 1], got {alpha}")
    log_pilot = pilot_log_density(data, base)
    bad = np.flatnonzero(~np.isfinite(log_pilot))
    if bad.size:
        raise PilotUnderflowError(int(bad[0]))
    log_lam = -alpha * (log_pilot - log_pilot.mean())
    return LocalFactors(np.exp(log_lam), float(alpha), np.exp(log_pilot), log_pilot)
