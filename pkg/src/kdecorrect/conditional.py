"""Conditional density of the output given the inputs, and point corrections.

With Gaussian kernels the conditional density f(y | x) of a KDE is exactly a
mixture of M univariate Gaussians, so expectation and quantiles need no
quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import ndtr

from . import _kernels
from ._parallel import for_each_chunk
from .density import FittedModel
from .errors import DataError, NoEvidenceError

# below this every kernel weight underflows double precision (~log 1e-300)
LOG_EVIDENCE_FLOOR = -690.0
DEFAULT_LEVEL = 0.90


@dataclass(frozen=True)
class ConditionalMixture:
    weights: NDArray[np.float64]
    means: NDArray[np.float64]
    variances: NDArray[np.float64]
    evidence: float
    log_evidence: float
    scale: float  # output spread, sets the quantile tolerance

    @property
    def stds(self) -> NDArray[np.float64]:
        return np.sqrt(self.variances)

    def pdf(self, y) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float)
        s = self.stds
        z = (y[..., None] - self.means) / s
        return np.sum(self.weights * np.exp(-0.5 * z * z) / (s * math.sqrt(2 * math.pi)), axis=-1)

    def cdf(self, y) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float)
        return np.sum(self.weights * ndtr((y[..., None] - self.means) / self.stds), axis=-1)


@dataclass(frozen=True)
class ConditionalResult:
    expectation: float
    lower: float
    upper: float
    level: float
    evidence: float
    flag: str | None = None


def _output_scale(model: FittedModel, cond_var: float) -> float:
    y = model.points[:, model.output_index]
    s = float(np.std(y)) if model.M > 1 else 0.0
    return s if s > 0 else math.sqrt(cond_var)


def condition(model: FittedModel, x) -> ConditionalMixture:
    """Mixture representation of f(Y | inputs = x).

    Raises :class:`NoEvidenceError` when ``x`` is so far from every sample
    that no input kernel has a representable density.
    """
    part = model.bandwidth.partition(model.output_index)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != len(part.inputs):
        raise DataError(f"expected {len(part.inputs)} input values, got {x.size}")
    xs = model.points[:, list(part.inputs)]
    ys = model.points[:, part.output]
    lam = model.lambdas
    k = len(part.inputs)

    z = _kernels.whiten(x[None, :] - xs, part.chol_xx)
    logk = (
        -0.5 * np.sum(z * z, axis=1) / (lam * lam)
        - k * np.log(lam)
        - 0.5 * (k * _kernels.LOG_2PI + part.log_det_xx)
    )
    top = float(np.max(logk))
    if top < LOG_EVIDENCE_FLOOR:
        raise NoEvidenceError(f"no evidence: query {x.tolist()} is far outside the data")
    w = np.exp(logk - top)
    total = float(np.sum(w))
    log_evidence = top + math.log(total) - math.log(model.M)
    means = ys + (x[None, :] - xs) @ part.gain
    variances = part.cond_var * lam * lam
    return ConditionalMixture(
        w / total, means, variances, math.exp(log_evidence), log_evidence,
        _output_scale(model, part.cond_var),
    )


def conditional_expectation(mix: ConditionalMixture) -> float:
    return float(np.sum(mix.weights * mix.means))


def conditional_quantile(mix: ConditionalMixture, p: float) -> float:
    """Invert the mixture CDF by bisection.

    The bracket ``[min(m - 10 s), max(m + 10 s)]`` always contains the root.
    """
    if not 0.0 < p < 1.0:
        raise DataError(f"quantile level must lie in (0, 1), got {p}")
    # components below 1e-18 move the CDF by at most M * 1e-18
    live = mix.weights > 1e-18
    w, m, s = mix.weights[live], mix.means[live], mix.stds[live]
    lo = float(np.min(m - 10 * s))
    hi = float(np.max(m + 10 * s))
    xtol = 1e-9 * min(mix.scale, float(np.min(s)))
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= xtol:
            break
        if np.sum(w * ndtr((mid - m) / s)) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def credible_interval(mix: ConditionalMixture, level: float = DEFAULT_LEVEL) -> tuple[float, float]:
    """Equal-tailed interval; level 0.90 gives the 5th and 95th percentiles."""
    if not 0.0 < level < 1.0:
        raise DataError(f"credible level must lie in (0, 1), got {level}")
    tail = 0.5 * (1.0 - level)
    return conditional_quantile(mix, tail), conditional_quantile(mix, 1.0 - tail)


def correct(model: FittedModel, x, level: float = DEFAULT_LEVEL) -> ConditionalResult:
    mix = condition(model, x)
    lo, hi = credible_interval(mix, level)
    return ConditionalResult(conditional_expectation(mix), lo, hi, level, mix.evidence)


def correct_batch(model: FittedModel, inputs, level: float = DEFAULT_LEVEL) -> list[ConditionalResult]:
    """Correct every row of ``inputs``.

    Rows without evidence come back with NaN values and ``flag="no_evidence"``
    instead of aborting the batch.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.size == 0:
        return []
    inputs = inputs.reshape(len(inputs), -1)
    results = []
    for row in inputs:
        try:
            results.append(correct(model, row, level))
        except NoEvidenceError:
            results.append(ConditionalResult(math.nan, math.nan, math.nan, level, 0.0, "no_evidence"))
    return results


def predict_expectation(model: FittedModel, inputs) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Vectorised conditional expectations for many query rows.

    Returns the expectations and a mask of rows that had no evidence
    (their expectation is NaN).
    """
    part = model.bandwidth.partition(model.output_index)
    x = np.asarray(inputs, dtype=float).reshape(-1, len(part.inputs))
    xs = model.points[:, list(part.inputs)]
    ys = model.points[:, part.output]
    lam = model.lambdas
    k = len(part.inputs)
    zq = _kernels.whiten(x, part.chol_xx) if len(x) else np.empty((0, k))
    zs = _kernels.whiten(xs, part.chol_xx)
    inv_lam2 = 1.0 / (lam * lam)
    log_c = -k * np.log(lam) - 0.5 * (k * _kernels.LOG_2PI + part.log_det_xx)
    out = np.empty(len(x))
    none = np.zeros(len(x), dtype=bool)

    def work(s, e):
        a = -0.5 * _kernels.sqdist(zq[s:e], zs) * inv_lam2 + log_c
        top = a.max(axis=1)
        w = np.exp(a - top[:, None])
        w /= w.sum(axis=1, keepdims=True)
        xbar = w @ xs
        out[s:e] = w @ ys + (x[s:e] - xbar) @ part.gain
        bad = top < LOG_EVIDENCE_FLOOR
        out[s:e][bad] = np.nan
        none[s:e] = bad

    for_each_chunk(len(x), work)
    return out, none
