import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

import oracles
from kdecorrect import (
    BandwidthSpec,
    CriterionEvaluator,
    DataError,
    Dataset,
    OptimizerConfig,
    fit,
    golden_section_minimize,
    lscv,
    mcse,
    nelder_mead_minimize,
    plugin_factor,
    select_bandwidth,
)
from kdecorrect.experiments import Example1Config, gen_example1


@pytest.fixture(scope="module")
def example1():
    return gen_example1(Example1Config(seed=0))


@pytest.mark.parametrize(
    "f, bracket, xmin",
    [(lambda x: (x - 2) ** 2, (0, 5), 2.0), (lambda x: abs(x - 1), (0, 3), 1.0), (math.cos, (2, 4), math.pi)],
)
def test_golden_section(f, bracket, xmin):
    x, fx = golden_section_minimize(f, bracket, tol=1e-6)
    assert x == pytest.approx(xmin, abs=1e-5)
    assert fx == f(x)


def test_nelder_mead_quadratic():
    x, fx, ok = nelder_mead_minimize(lambda v: (v[0] - 1) ** 2 + (v[1] + 2) ** 2, [0.0, 0.0],
                                     OptimizerConfig(simplex_tol=1e-12))
    assert ok
    np.testing.assert_allclose(x, [1.0, -2.0], atol=1e-4)


def test_nelder_mead_rosenbrock():
    def rosen(v):
        return 100 * (v[1] - v[0] ** 2) ** 2 + (1 - v[0]) ** 2

    x, fx, ok = nelder_mead_minimize(rosen, [-1.2, 1.0], OptimizerConfig(simplex_tol=1e-14, max_evals=5000))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-3)


def test_nelder_mead_log_space_stays_positive():
    seen = []

    def f(v):
        seen.append(np.min(v))
        return np.sum((np.log(v) - 0.3) ** 2)

    x, _, _ = nelder_mead_minimize(f, [0.2, 3.0], OptimizerConfig(simplex_tol=1e-12), log_space=True)
    assert min(seen) > 0
    np.testing.assert_allclose(x, np.exp(0.3), rtol=1e-4)


def test_lscv_hand_transcription():
    pts = np.array([[0.1, 1.2], [-0.7, 0.4], [1.3, 2.0], [0.5, -0.2], [-1.1, 0.9]])
    data = Dataset.from_array(pts)
    for spec in (BandwidthSpec.create("FW", 0.7), BandwidthSpec.create("SAW", (0.9, 0.5))):
        model = fit(data, spec)
        covs = oracles.sample_covariances(model.bandwidth.H, model.lambdas, 5)
        # closed-form integral of the squared sum: pairs convolve to one Gaussian
        ise = sum(multivariate_normal(pts[j], covs[i] + covs[j]).pdf(pts[i]) for i in range(5) for j in range(5)) / 25
        expected = ise - 2 * oracles.loo_density(pts, model.bandwidth.H, model.lambdas).mean()
        assert lscv(data, spec) == pytest.approx(expected, abs=1e-12)


def test_lscv_flattens_for_large_bandwidth(example1):
    scott = plugin_factor(example1.M, example1.d)
    values = [lscv(example1, BandwidthSpec.create("FW", k * scott)) for k in (1, 2, 5, 10)]
    assert all(v < 0 for v in values)
    assert values == sorted(values)
    # both terms shrink like det(H)**-0.5, i.e. like h**-2 in two dimensions
    far = lscv(example1, BandwidthSpec.create("FW", 100 * scott))
    assert -1e-4 < far < 0


def test_mcse_hand_three_points():
    pts = np.array([[0.0, 1.0], [1.0, 0.2], [1.8, 2.1]])
    data = Dataset.from_array(pts)
    for spec in (BandwidthSpec.create("FW", 0.9), BandwidthSpec.create("SAW", (1.1, 0.6))):
        model = fit(data, spec)
        assert mcse(data, spec) == pytest.approx(oracles.mcse(pts, model.bandwidth.H, model.lambdas), abs=1e-8)


def test_mcse_nearly_constant_output():
    # an exactly constant output column is rejected as zero-variance; the
    # limit of a vanishing output spread drives every error to zero
    x = np.linspace(-2, 2, 20)
    for eps in (1e-3, 1e-5):
        data = Dataset.from_array(np.column_stack([x, 3.0 + eps * np.sin(7 * x)]))
        for method, h in (("FW", 0.3), ("SAW", (0.5, 0.5))):
            # expectations and outputs both stay within eps of 3
            assert mcse(data, BandwidthSpec.create(method, h)) <= 4 * eps**2
    with pytest.raises(DataError, match="zero-variance"):
        Dataset.from_array(np.column_stack([x, np.full(20, 3.0)]))


def test_evaluator_matches_model_path(example1):
    ev = CriterionEvaluator(example1)
    for spec in (BandwidthSpec.create("AW", 0.3), BandwidthSpec.create("SW", (0.5, 0.15))):
        f = spec.factor_vector(2)
        assert ev.lscv(f, spec.adaptive) == pytest.approx(oracles.lscv(example1.values, fit(example1, spec).bandwidth.H,
                                                                         fit(example1, spec).lambdas), abs=1e-4)


def test_fw_lscv_band(example1):
    rep = select_bandwidth(example1, "FW", "LSCV")
    assert 0.10 <= rep.factor <= 0.30
    assert rep.converged


def test_sw_lscv_shape(example1):
    rep = select_bandwidth(example1, "SW", "LSCV")
    h1, h2 = rep.factor
    assert h1 > h2 and 0.05 <= h2 <= 0.20


@pytest.mark.parametrize("criterion", ["LSCV", "MCSE"])
def test_warm_start_dominance(example1, criterion):
    ev = CriterionEvaluator(example1)
    for base, sel in (("FW", "SW"), ("AW", "SAW")):
        scalar = select_bandwidth(example1, base, criterion, evaluator=ev)
        selective = select_bandwidth(example1, sel, criterion, warm_start=scalar.factor, evaluator=ev)
        assert selective.criterion_value <= scalar.criterion_value + 1e-12


def test_select_rejects_unknown():
    data = gen_example1()
    with pytest.raises(DataError):
        select_bandwidth(data, "FW", "AIC")
    with pytest.raises(DataError):
        select_bandwidth(data, "QW", "LSCV")


def _seed_values(criterion, h):
    out = []
    for seed in range(10):
        data = gen_example1(Example1Config(seed=seed))
        out.append(criterion(data, BandwidthSpec.create("FW", h)))
    return np.array(out)


def test_example1_lscv_at_scott_factor_band():
    # the reference dataset's seed is unknown; compare the typical (median)
    # regenerated value against the published band
    values = _seed_values(lscv, 0.46) * 1e2
    assert abs(np.median(values) - (-1.62)) <= 0.3


@pytest.mark.xfail(strict=True, reason="regenerated data gives MCSE*10 near 3.05 at h=0.10, below the 3.84 +/- 0.5 band")
def test_example1_mcse_small_bandwidth_band():
    values = _seed_values(mcse, 0.10) * 10
    assert abs(np.median(values) - 3.84) <= 0.5
