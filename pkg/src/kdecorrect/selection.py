"""Bandwidth selection by LSCV or MCSE minimisation.

Scalar factors (FW, AW) are found by golden-section search over a bracket
expressed in multiples of Scott's factor; selective factors (SW, SAW) by a
Nelder-Mead simplex in log-factor space, started from the scalar optimum
so the selective result can never be worse than the scalar one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from . import _kernels
from ._parallel import for_each_chunk
from .bandwidth import (
    DEFAULT_ALPHA,
    BandwidthMatrix,
    BandwidthSpec,
    plugin_factor,
    selective_bandwidth,
)
from .conditional import LOG_EVIDENCE_FLOOR
from .dataset import Dataset, covariance_decomposition
from .errors import DataError, NumericalError

CRITERIA = ("LSCV", "MCSE")
_SCALAR_OF = {"SW": "FW", "SAW": "AW"}
_DEFAULT_SIMPLEX_TOL = {"LSCV": 1e-6, "MCSE": 1e-4}
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimizerConfig:
    """Search settings.

    ``simplex_tol`` is the simplex objective spread, relative to the
    objective magnitude at the starting point. ``None`` picks 1e-6 for
    LSCV and 1e-4 for MCSE. ``max_evals=None`` means ``200 * d``.
    """

    scalar_bracket: tuple[float, float] = (0.05, 3.0)
    scalar_tol: float = 1e-3
    simplex_init_spread: float = 0.2
    simplex_tol: float | None = None
    max_evals: int | None = None

    def __post_init__(self):
        lo, hi = self.scalar_bracket
        if not 0 < lo < hi:
            raise DataError(f"invalid scalar bracket {self.scalar_bracket}")
        if self.scalar_tol <= 0 or self.simplex_init_spread <= 0:
            raise DataError("tolerances must be positive")
        if self.simplex_tol is not None and self.simplex_tol <= 0:
            raise DataError("simplex tolerance must be positive")


@dataclass(frozen=True)
class CriterionReport:
    method: str
    criterion: str
    factor: float | tuple[float, ...]
    lscv_value: float
    mcse_value: float
    evaluations: int
    converged: bool
    alpha: float = DEFAULT_ALPHA
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def criterion_value(self) -> float:
        return self.mcse_value if self.criterion == "MCSE" else self.lscv_value

    @property
    def spec(self) -> BandwidthSpec:
        return BandwidthSpec.create(self.method, self.factor, self.alpha)


def _criterion(name: str) -> str:
    name = str(name).upper()
    if name not in CRITERIA:
        raise DataError(f"unknown criterion {name!r}")
    return name


class CriterionEvaluator:
    """LSCV and MCSE for one dataset and many candidate bandwidths.

    Every candidate is built as ``Q diag(h**2 L) Q.T`` (a scalar factor is
    the vector ``(h, ..., h)``), so scalar and selective candidates share
    one code path. Kernel distances are taken in the principal frame, where
    the candidate matrix is diagonal.
    """

    def __init__(self, data: Dataset, alpha: float = DEFAULT_ALPHA):
        if data.M < 3:
            raise DataError("bandwidth selection needs at least 3 samples")
        self.data = data
        self.alpha = float(alpha)
        self.decomp = covariance_decomposition(data)
        self.principal = data.values @ self.decomp.eigvecs
        self.y = data.output
        self.x = data.inputs
        self.calls = 0
        self.last_no_evidence = 0

    @property
    def M(self) -> int:
        return self.data.M

    @property
    def d(self) -> int:
        return self.data.d

    def factor_vector(self, factor) -> NDArray[np.float64]:
        h = np.asarray(factor, dtype=float).ravel()
        if h.size == 1:
            h = np.full(self.d, h[0])
        if h.shape != (self.d,) or not np.all(np.isfinite(h)) or not np.all(h > 0):
            raise DataError(f"invalid bandwidth factor {factor!r}")
        return h

    def bandwidth(self, factor) -> BandwidthMatrix:
        return selective_bandwidth(self.decomp, self.factor_vector(factor))

    def _scaled(self, h):
        var = h * h * self.decomp.eigvals
        return self.principal / np.sqrt(var), float(np.sum(np.log(var)))

    def _lambdas(self, v=None, q=None) -> NDArray[np.float64]:
        """Local factors from the pilot KDE, given scaled points or their distances."""
        # pilot normalisation cancels against the geometric mean
        m = self.M
        pilot = np.empty(m)

        def work(s, e):
            qs = q[s:e] if q is not None else _kernels.sqdist(v[s:e], v)
            pilot[s:e] = np.exp(-0.5 * qs).sum(axis=1)

        for_each_chunk(m, work)
        lp = np.log(pilot)
        return np.exp(-self.alpha * (lp - lp.mean()))

    def lscv(self, factor, adaptive: bool = False) -> float:
        """Integrated squared density minus twice the mean leave-one-out density.

        Sums run in linear space: the diagonal term of each squared-integral
        row is 1, so nothing that matters can underflow.
        """
        self.calls += 1
        h = self.factor_vector(factor)
        m, d = self.M, self.d
        v, log_det = self._scaled(h)
        norm = math.exp(-0.5 * (d * _kernels.LOG_2PI + log_det))
        ise = np.empty(m)
        loo = np.empty(m)
        if adaptive:
            q_all = np.empty((m, m))

            def dist(s, e):
                q_all[s:e] = _kernels.sqdist(v[s:e], v)

            for_each_chunk(m, dist)
            lam = self._lambdas(q=q_all)
            lam2 = lam * lam
            inv_lam2 = 1.0 / lam2
            lam_d = lam ** (-d)

        def work(s, e):
            diag = (np.arange(e - s), np.arange(s, e))
            if adaptive:
                q = q_all[s:e]
                k = np.exp(-0.5 * q * inv_lam2)
                k *= lam_d
                k[diag] = 0.0
                loo[s:e] = k.sum(axis=1)
                inv_sc = 1.0 / (lam2[s:e, None] + lam2[None, :])
                c = np.exp(-0.5 * q * inv_sc)
                root = np.sqrt(inv_sc)
                for _ in range(d):
                    c *= root
                ise[s:e] = c.sum(axis=1)
            else:
                c = np.exp(-0.25 * _kernels.sqdist(v[s:e], v))
                ise[s:e] = c.sum(axis=1) * 2.0 ** (-0.5 * d)
                c *= c
                c[diag] = 0.0
                loo[s:e] = c.sum(axis=1)

        for_each_chunk(m, work)
        value = norm * (ise.sum() / (m * m) - 2.0 * loo.sum() / (m * (m - 1)))
        if not math.isfinite(value):
            raise NumericalError(f"LSCV is not finite at h={h.tolist()}")
        return value

    def loo_expectations(self, factor, adaptive: bool = False):
        """Leave-one-out conditional expectations at every training row.

        Returns ``(expectations, no_evidence_mask)``. Rows without evidence
        fall back to the mean output of the other rows.
        """
        h = self.factor_vector(factor)
        m = self.M
        part = self.bandwidth(h).partition(self.data.output_index)
        k = len(part.inputs)
        zx = _kernels.whiten(self.x, part.chol_xx)
        if adaptive:
            lam = self._lambdas(self._scaled(h)[0])
        else:
            lam = np.ones(m)
        inv_lam2 = 1.0 / (lam * lam)
        log_c = -k * np.log(lam) - 0.5 * (k * _kernels.LOG_2PI + part.log_det_xx)
        y, x = self.y, self.x
        out = np.empty(m)
        bad = np.zeros(m, dtype=bool)
        ysum = float(y.sum())

        def work(s, e):
            a = -0.5 * _kernels.sqdist(zx[s:e], zx) * inv_lam2 + log_c
            a[np.arange(e - s), np.arange(s, e)] = -np.inf
            top = a.max(axis=1)
            w = np.exp(a - top[:, None])
            w /= w.sum(axis=1, keepdims=True)
            est = w @ y + (x[s:e] - w @ x) @ part.gain
            none = top < LOG_EVIDENCE_FLOOR
            est[none] = (ysum - y[s:e][none]) / (m - 1)
            out[s:e] = est
            bad[s:e] = none

        for_each_chunk(m, work)
        return out, bad

    def mcse(self, factor, adaptive: bool = False) -> float:
        """Mean squared gap between leave-one-out conditional expectations and outputs."""
        self.calls += 1
        est, bad = self.loo_expectations(factor, adaptive)
        self.last_no_evidence = int(bad.sum())
        err = est - self.y
        value = float(np.mean(err * err))
        if not math.isfinite(value):
            raise NumericalError("MCSE is not finite")
        return value

    def evaluate(self, criterion: str, factor, adaptive: bool = False) -> float:
        if _criterion(criterion) == "LSCV":
            return self.lscv(factor, adaptive)
        return self.mcse(factor, adaptive)

    def report(self, method, criterion, factor, evaluations, converged) -> CriterionReport:
        adaptive = method in ("AW", "SAW")
        if method in ("FW", "AW"):
            factor = float(np.asarray(factor).ravel()[0])
        else:
            factor = tuple(float(v) for v in np.asarray(factor).ravel())
        lscv_value = self.lscv(factor, adaptive)
        mcse_value = self.mcse(factor, adaptive)
        return CriterionReport(
            method, criterion, factor, lscv_value, mcse_value, evaluations, converged,
            self.alpha, {"no_evidence_rows": self.last_no_evidence},
        )


def lscv(data: Dataset, spec: BandwidthSpec) -> float:
    """Least-squares cross-validation score of ``spec`` on ``data``."""
    ev = CriterionEvaluator(data, spec.alpha)
    return ev.lscv(spec.factor_vector(data.d), spec.adaptive)


def mcse(data: Dataset, spec: BandwidthSpec) -> float:
    """Mean conditional squared error of ``spec`` on ``data``."""
    ev = CriterionEvaluator(data, spec.alpha)
    return ev.mcse(spec.factor_vector(data.d), spec.adaptive)


def golden_section_minimize(
    objective: Callable[[float], float],
    bracket: tuple[float, float],
    tol: float = 1e-3,
    max_iter: int = 500,
) -> tuple[float, float]:
    """Golden-section search for a minimum inside ``bracket``.

    Stops once the interval width falls below ``tol`` times the magnitude
    of its midpoint and returns the midpoint with its objective value. On
    exact ties the lower sub-interval is kept.
    """
    a, b = map(float, bracket)
    if not a < b:
        raise DataError(f"invalid bracket {bracket}")

    def f(x):
        v = float(objective(x))
        if not math.isfinite(v):
            raise NumericalError(f"objective is not finite at {x}")
        return v

    c = b - _INV_PHI * (b - a)
    e = a + _INV_PHI * (b - a)
    fc, fe = f(c), f(e)
    floor = 1e-12 * (b - a)
    for _ in range(max_iter):
        if b - a <= tol * max(abs(0.5 * (a + b)), floor):
            break
        if fc <= fe:
            b, e, fe = e, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INV_PHI * (b - a)
            fe = f(e)
    x = 0.5 * (a + b)
    return x, f(x)


def nelder_mead_minimize(
    objective: Callable[[NDArray[np.float64]], float],
    x0: Sequence[float],
    config: OptimizerConfig | None = None,
    *,
    log_space: bool = False,
) -> tuple[NDArray[np.float64], float, bool]:
    """Downhill simplex with the classic coefficients (1, 2, 0.5, 0.5).

    With ``log_space=True`` the simplex lives in ``log(x)`` so every
    candidate stays positive. Converged means the objective spread over the
    simplex dropped below ``simplex_tol * |f(x0)|`` before ``max_evals``.
    """
    config = config or OptimizerConfig()
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    tol = config.simplex_tol if config.simplex_tol is not None else 1e-6
    max_evals = config.max_evals or 200 * n
    spread = config.simplex_init_spread
    evals = 0

    def f(u):
        nonlocal evals
        evals += 1
        v = float(objective(np.exp(u) if log_space else u))
        return v if math.isfinite(v) else math.inf

    if log_space:
        if not np.all(x0 > 0):
            raise DataError("log-space search needs a positive start")
        start = np.log(x0)
        steps = np.full(n, math.log1p(spread))
    else:
        start = x0
        steps = np.where(x0 != 0, spread * x0, spread)
    simplex = [start.copy()]
    for k in range(n):
        vertex = start.copy()
        vertex[k] += steps[k]
        simplex.append(vertex)
    sim = np.array(simplex)
    fs = np.array([f(u) for u in sim])
    if not math.isfinite(fs[0]):
        raise NumericalError("objective is not finite at the starting point")
    scale = max(abs(fs[0]), 1e-300)

    converged = False
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if fs[-1] - fs[0] <= tol * scale:
            converged = True
            break
        if evals >= max_evals:
            break
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = f(xr)
        if fs[0] <= fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[0]:
            xe = centroid + 2.0 * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        for i in range(1, n + 1):
            sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
            fs[i] = f(sim[i])

    best = sim[0]
    return (np.exp(best) if log_space else best.copy()), float(fs[0]), converged


def plugin_report(
    data: Dataset,
    method: str,
    rule: str = "scott",
    alpha: float = DEFAULT_ALPHA,
    evaluator: CriterionEvaluator | None = None,
) -> CriterionReport:
    """Criteria of a scalar method at the plug-in factor."""
    method = method.upper()
    if method not in ("FW", "AW"):
        raise DataError("plug-in rules give scalar factors (FW or AW) only")
    ev = evaluator or CriterionEvaluator(data, alpha)
    h = plugin_factor(data.M, data.d, rule)
    return ev.report(method, rule.upper(), h, 1, True)


def select_bandwidth(
    data: Dataset,
    method: str,
    criterion: str,
    config: OptimizerConfig | None = None,
    alpha: float = DEFAULT_ALPHA,
    warm_start: float | None = None,
    evaluator: CriterionEvaluator | None = None,
) -> CriterionReport:
    """Minimise ``criterion`` over the factor(s) of ``method``.

    Selective methods start from ``warm_start`` (the scalar optimum of the
    matching non-selective method); it is computed when not supplied.
    """
    method = method.upper()
    criterion = _criterion(criterion)
    config = config or OptimizerConfig()
    ev = evaluator or CriterionEvaluator(data, alpha)
    adaptive = method in ("AW", "SAW")
    scott = plugin_factor(data.M, data.d, "scott")
    calls0 = ev.calls

    if method in ("FW", "AW"):
        lo, hi = config.scalar_bracket
        h, _ = golden_section_minimize(
            lambda t: ev.evaluate(criterion, t, adaptive),
            (lo * scott, hi * scott),
            config.scalar_tol,
        )
        return ev.report(method, criterion, h, ev.calls - calls0, True)

    if method not in _SCALAR_OF:
        raise DataError(f"unknown bandwidth method {method!r}")
    if warm_start is None:
        warm_start = select_bandwidth(data, _SCALAR_OF[method], criterion, config, alpha, evaluator=ev).factor
        calls0 = ev.calls
    tol = config.simplex_tol if config.simplex_tol is not None else _DEFAULT_SIMPLEX_TOL[criterion]
    nm_config = OptimizerConfig(
        config.scalar_bracket, config.scalar_tol, config.simplex_init_spread,
        tol, config.max_evals or 200 * data.d,
    )
    h, _, converged = nelder_mead_minimize(
        lambda hv: ev.evaluate(criterion, hv, adaptive),
        np.full(data.d, float(warm_start)),
        nm_config,
        log_space=True,
    )
    return ev.report(method, criterion, h, ev.calls - calls0, converged)
