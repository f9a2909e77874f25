"""Synthetic datasets and the bandwidth benchmark harness.

``gen_example1`` draws noisy samples of ``y = x/4 + sin(x)``.
``gen_shading`` mimics a met-mast anemometer that reads low inside a
direction sector, next to an unshaded reference instrument.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from .bandwidth import DEFAULT_ALPHA
from .conditional import DEFAULT_LEVEL, correct_batch
from .dataset import Dataset, split_train_validation
from .density import fit
from .errors import DataError
from .selection import (
    CriterionEvaluator,
    CriterionReport,
    OptimizerConfig,
    plugin_report,
    select_bandwidth,
)

log = logging.getLogger(__name__)

SHADING_COLUMNS = ("mast_speed", "mast_direction", "reference_speed")


@dataclass(frozen=True)
class Example1Config:
    M: int = 100
    x_std: float = 5.0
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.M < 10 or self.x_std <= 0 or self.noise_std <= 0:
            raise DataError(f"invalid example-1 configuration {self}")


@dataclass(frozen=True)
class ShadingConfig:
    """Synthetic mast/reference wind data.

    Speeds follow a Weibull law; directions mix a uniform background with a
    normal lobe (``lobe_center``, ``lobe_std``, weight ``lobe_weight``).
    Inside ``sector`` the mast reads ``true / shading_gain``.
    """

    M: int = 3000
    sector: tuple[float, float] = (290.0, 330.0)
    shading_gain: float = 1.45
    speed_shape: float = 2.2
    speed_scale: float = 9.0
    lobe_center: float = 300.0
    lobe_std: float = 40.0
    lobe_weight: float = 0.3
    noise_std: float = 0.3
    direction_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.sector
        if not 0.0 <= lo < hi < 360.0:
            raise DataError(f"sector must lie within [0, 360), got {self.sector}")
        if not self.shading_gain >= 1.0:
            raise DataError("shading gain must be at least 1")
        if self.M < 10 or self.noise_std < 0 or self.direction_noise < 0:
            raise DataError(f"invalid shading configuration {self}")


def target_function(x):
    return np.asarray(x) / 4.0 + np.sin(x)


def gen_example1(config: Example1Config = Example1Config()) -> Dataset:
    rng = np.random.default_rng(config.seed)
    x = rng.normal(0.0, config.x_std, config.M)
    y = target_function(x) + rng.normal(0.0, config.noise_std, config.M)
    return Dataset(("x", "y"), np.column_stack([x, y]))


def in_sector(direction, sector) -> NDArray[np.bool_]:
    lo, hi = sector
    direction = np.asarray(direction)
    return (direction >= lo) & (direction <= hi)


def gen_shading(config: ShadingConfig = ShadingConfig()) -> Dataset:
    """Columns ``(mast_speed, mast_direction, reference_speed)``."""
    rng = np.random.default_rng(config.seed)
    m = config.M
    speed = config.speed_scale * rng.weibull(config.speed_shape, m)
    lobe = rng.random(m) < config.lobe_weight
    direction = np.where(
        lobe,
        rng.normal(config.lobe_center, config.lobe_std, m),
        rng.uniform(0.0, 360.0, m),
    ) % 360.0
    shaded = in_sector(direction, config.sector)
    mast = np.where(shaded, speed / config.shading_gain, speed)
    mast = mast + rng.normal(0.0, config.noise_std, m) if config.noise_std > 0 else mast
    ref = speed + rng.normal(0.0, config.noise_std, m) if config.noise_std > 0 else speed.copy()
    if config.direction_noise > 0:
        direction = (direction + rng.normal(0.0, config.direction_noise, m)) % 360.0
    return Dataset(SHADING_COLUMNS, np.column_stack([np.maximum(mast, 0.0), direction, np.maximum(ref, 0.0)]))


def rmse(predicted, truth) -> float:
    p = np.asarray(predicted, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.size != t.size:
        raise DataError(f"length mismatch: {p.size} predictions, {t.size} values")
    if p.size == 0:
        raise DataError("rmse of empty vectors")
    return float(np.sqrt(np.mean((p - t) ** 2)))


@dataclass
class BenchmarkRow:
    report: CriterionReport
    rmse: float
    coverage: float
    no_evidence: int = 0

    def as_dict(self) -> dict:
        r = self.report
        factor = list(r.factor) if isinstance(r.factor, tuple) else r.factor
        return {
            "method": r.method,
            "criterion": r.criterion.lower(),
            "factor": factor,
            "lscv": r.lscv_value,
            "mcse": r.mcse_value,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "evaluations": r.evaluations,
            "converged": r.converged,
        }


@dataclass
class BenchmarkTable:
    rows: list[BenchmarkRow]
    raw_rmse: float | None
    meta: dict = field(default_factory=dict)

    def find(self, method: str, criterion: str) -> BenchmarkRow:
        for row in self.rows:
            if row.report.method == method.upper() and row.report.criterion == criterion.upper():
                return row
        raise KeyError((method, criterion))


def _validate(model, validation: Dataset, level: float) -> tuple[float, float, int]:
    results = correct_batch(model, validation.inputs, level)
    expected = np.array([r.expectation for r in results])
    lower = np.array([r.lower for r in results])
    upper = np.array([r.upper for r in results])
    ok = np.isfinite(expected)
    truth = validation.output
    if not ok.any():
        return math.nan, math.nan, int((~ok).sum())
    inside = (truth[ok] >= lower[ok]) & (truth[ok] <= upper[ok])
    return rmse(expected[ok], truth[ok]), float(inside.mean()), int((~ok).sum())


def run_benchmark(
    data: Dataset,
    methods=("FW", "AW", "SW", "SAW"),
    criteria=("LSCV", "MCSE"),
    split: tuple[float, int] = (0.8, 0),
    level: float = DEFAULT_LEVEL,
    proxy_column: str | None = None,
    config: OptimizerConfig | None = None,
    alpha: float = DEFAULT_ALPHA,
) -> BenchmarkTable:
    """Select bandwidths on a training split and score corrections on the rest.

    The table always starts with the Scott plug-in rows for FW and AW.
    ``proxy_column`` names the input that serves as the uncorrected value of
    the output (the mast speed in the shading case); it yields ``raw_rmse``.
    """
    methods = [m.upper() for m in methods]
    criteria = [c.upper() for c in criteria]
    fraction, seed = split
    train, valid = split_train_validation(data, fraction, seed)
    ev = CriterionEvaluator(train, alpha)
    config = config or OptimizerConfig()

    raw = None
    if proxy_column is not None:
        if proxy_column not in data.columns:
            raise DataError(f"proxy column {proxy_column!r} not in data")
        raw = rmse(valid.values[:, data.columns.index(proxy_column)], valid.output)

    reports: list[CriterionReport] = [plugin_report(train, m, "scott", alpha, ev) for m in ("FW", "AW")]
    for crit in criteria:
        scalar: dict[str, CriterionReport] = {}
        for m in ("FW", "AW"):
            if m in methods or {"FW": "SW", "AW": "SAW"}[m] in methods:
                scalar[m] = select_bandwidth(train, m, crit, config, alpha, evaluator=ev)
                log.info("%s/%s: h=%s", m, crit, scalar[m].factor)
                if m in methods:
                    reports.append(scalar[m])
        for m, base in (("SW", "FW"), ("SAW", "AW")):
            if m in methods:
                rep = select_bandwidth(train, m, crit, config, alpha, scalar[base].factor, ev)
                log.info("%s/%s: h=%s", m, crit, rep.factor)
                reports.append(rep)

    rows = []
    for rep in reports:
        model = fit(train, rep.spec)
        err, cov, missing = _validate(model, valid, level)
        rows.append(BenchmarkRow(rep, err, cov, missing))
    meta = {
        "methods": methods,
        "criteria": criteria,
        "split": {"fraction": fraction, "seed": seed},
        "level": level,
        "alpha": alpha,
        "train_rows": train.M,
        "validation_rows": valid.M,
        "columns": list(data.columns),
        "output_column": data.output_column,
        "proxy_column": proxy_column,
        "optimizer": asdict(config),
    }
    return BenchmarkTable(rows, raw, meta)
