import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from kdecorrect import (
    BandwidthSpec,
    Dataset,
    condition,
    conditional_quantile,
    correct_batch,
    fit,
    kde_evaluate,
    lscv,
    mcse,
    write_csv,
)
from kdecorrect.cli import main
from kdecorrect.experiments import ShadingConfig, gen_example1, gen_shading
from kdecorrect.modelfile import load_model, save_model


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def ex1_csv(tmp_path):
    path = tmp_path / "ex1.csv"
    write_csv(gen_example1(), path)
    return path


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "0.1.0" in capsys.readouterr().out


def test_usage_errors_exit_2(tmp_path, ex1_csv):
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--input", str(ex1_csv), "--method", "xw", "--criterion", "lscv", "--model", "m.json"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    assert main(["bench", "example1", "--out", str(tmp_path), "--methods", "qq"]) == 2


def test_fit_scott_summary(tmp_path, ex1_csv, capsys):
    assert main(["fit", "--input", str(ex1_csv), "--output-col", "y", "--method", "fw",
                 "--criterion", "scott", "--model", str(tmp_path / "m.json")]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    summary = dict(zip(header.split(","), row.split(",")))
    assert float(summary["factor"]) == pytest.approx(0.4642, abs=1e-4)
    assert summary["evaluations"] == "1"


def test_fit_selective_round_trip(tmp_path, ex1_csv, capsys):
    path = tmp_path / "sw.json"
    assert main(["fit", "--input", str(ex1_csv), "--output-col", "y", "--method", "sw",
                 "--criterion", "lscv", "--model", str(path)]) == 0
    header, row = capsys.readouterr().out.strip().splitlines()
    summary = dict(zip(header.split(","), row.split(",")))
    model = load_model(path)
    assert model.spec.method == "SW"
    assert [repr(v) for v in model.spec.factor] == summary["factor"].split()
    assert lscv(model.data, model.spec) == float(summary["lscv"])
    assert mcse(model.data, model.spec) == float(summary["mcse"])


def test_fit_constant_column_exit_3(tmp_path, capsys):
    path = tmp_path / "c.csv"
    path.write_text("a,b,c\n" + "".join(f"{i},{i * i},5\n" for i in range(10)))
    assert main(["fit", "--input", str(path), "--method", "fw", "--criterion", "scott",
                 "--model", str(tmp_path / "m.json")]) == 3
    assert "zero-variance column" in capsys.readouterr().err


def test_fit_missing_file_exit_3(tmp_path):
    assert main(["fit", "--input", str(tmp_path / "nope.csv"), "--method", "fw", "--criterion", "scott",
                 "--model", str(tmp_path / "m.json")]) == 3


def test_exit_code_from_subprocess(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    proc = subprocess.run(
        [sys.executable, "-m", "kdecorrect", "predict", "--model", str(bad), "--input", "x", "--out", "y"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 3
    assert "data error" in proc.stderr


@pytest.fixture
def tight_model(tmp_path):
    rng = np.random.default_rng(3)
    x = np.sort(rng.uniform(0, 10, 25))
    data = Dataset.from_array(np.column_stack([x, np.cos(x)]), ["x", "y"])
    path = tmp_path / "tight.json"
    save_model(fit(data, BandwidthSpec.create("FW", 1e-3)), path)
    return path, data


def test_predict_small_bandwidth(tmp_path, tight_model):
    path, data = tight_model
    write_csv(data, tmp_path / "in.csv")
    assert main(["predict", "--model", str(path), "--input", str(tmp_path / "in.csv"), "--out", str(tmp_path / "o.csv")]) == 0
    rows = _rows(tmp_path / "o.csv")
    assert rows[0] == ["x", "y", "expected", "lower", "upper", "evidence", "flag"]
    expected = np.array([float(r[2]) for r in rows[1:]])
    np.testing.assert_allclose(expected, data.output, atol=1e-6)
    assert np.array_equal([float(r[0]) for r in rows[1:]], data.values[:, 0])


def test_predict_interval_is_5th_95th_percentile(tmp_path, ex1_csv):
    model_path = tmp_path / "m.json"
    assert main(["fit", "--input", str(ex1_csv), "--method", "aw", "--criterion", "scott", "--model", str(model_path)]) == 0
    query = tmp_path / "q.csv"
    query.write_text("x\n-3.0\n0.5\n4.25\n")
    assert main(["predict", "--model", str(model_path), "--input", str(query), "--out", str(tmp_path / "o.csv"),
                 "--level", "0.90"]) == 0
    model = load_model(model_path)
    for r in _rows(tmp_path / "o.csv")[1:]:
        mix = condition(model, [float(r[0])])
        expected, lower, upper = map(float, r[1:4])
        assert expected == pytest.approx(float(np.sum(mix.weights * mix.means)), rel=1e-15)
        assert lower == conditional_quantile(mix, 0.05)
        assert upper == conditional_quantile(mix, 0.95)


def test_predict_header_only(tmp_path, tight_model):
    path, _ = tight_model
    (tmp_path / "e.csv").write_text("x\n")
    assert main(["predict", "--model", str(path), "--input", str(tmp_path / "e.csv"), "--out", str(tmp_path / "o.csv")]) == 0
    assert _rows(tmp_path / "o.csv") == [["x", "expected", "lower", "upper", "evidence", "flag"]]


def test_predict_column_mismatch_exit_3(tmp_path, tight_model):
    path, _ = tight_model
    (tmp_path / "e.csv").write_text("speed\n1.0\n")
    assert main(["predict", "--model", str(path), "--input", str(tmp_path / "e.csv"), "--out", str(tmp_path / "o.csv")]) == 3
    assert not (tmp_path / "o.csv").exists()


def test_predict_flags(tmp_path, tight_model):
    path, _ = tight_model
    (tmp_path / "q.csv").write_text("x\n1.0\nabc\n1e6\n")
    assert main(["predict", "--model", str(path), "--input", str(tmp_path / "q.csv"), "--out", str(tmp_path / "o.csv")]) == 0
    flags = [r[-1] for r in _rows(tmp_path / "o.csv")[1:]]
    assert flags == ["", "invalid_input", "no_evidence"]


def test_model_round_trip_bitwise(tmp_path):
    data = gen_shading(ShadingConfig(M=400, seed=1))
    model = fit(data, BandwidthSpec.create("SAW", (0.2, 0.3, 0.06)))
    save_model(model, tmp_path / "m.json")
    again = load_model(tmp_path / "m.json")
    q = data.inputs[:50] + 0.5
    a = correct_batch(model, q)
    b = correct_batch(again, q)
    assert a == b
    assert np.array_equal(model.lambdas, again.lambdas)


def _bench(tmp_path, *extra):
    out = tmp_path / "bench"
    assert main(["bench", *extra, "--out", str(out)]) == 0
    return out, _rows(out / "table.csv")


def test_bench_example1_full_grid(tmp_path):
    out, rows = _bench(tmp_path, "example1", "--seed", "0")
    assert rows[0] == ["method", "criterion", "factor", "lscv", "mcse", "rmse", "coverage", "evaluations", "converged"]
    assert len(rows) == 11
    assert {(r[0], r[1]) for r in rows[1:]} == {("FW", "scott"), ("AW", "scott")} | {
        (m, c) for m in ("FW", "AW", "SW", "SAW") for c in ("lscv", "mcse")}
    doc = json.loads((out / "table.json").read_text())
    assert len(doc["rows"]) == 10
    meta = json.loads((out / "meta.json").read_text())
    assert meta["source"]["config"]["seed"] == 0 and meta["split"]["fraction"] == 0.8


def test_bench_filtered(tmp_path):
    _, rows = _bench(tmp_path, "example1", "--methods", "fw", "--criteria", "lscv")
    assert [(r[0], r[1]) for r in rows[1:]] == [("FW", "scott"), ("AW", "scott"), ("FW", "lscv")]


def test_bench_shading_has_raw_row(tmp_path):
    _, rows = _bench(tmp_path, "shading", "--m", "300", "--methods", "fw", "--criteria", "lscv")
    assert rows[1][0] == "raw" and float(rows[1][5]) > 0


def test_bench_csv(tmp_path):
    write_csv(gen_shading(ShadingConfig(M=300, seed=2)), tmp_path / "s.csv")
    _, rows = _bench(tmp_path, "csv", "--input", str(tmp_path / "s.csv"), "--output-col", "reference_speed",
                     "--proxy-col", "mast_speed", "--methods", "fw", "--criteria", "lscv")
    assert [r[0] for r in rows[1:]] == ["raw", "FW", "AW", "FW"]


def test_bench_is_deterministic(tmp_path, monkeypatch):
    outs = []
    for i, threads in enumerate(("1", "1", "3")):
        monkeypatch.setenv("KDECORRECT_THREADS", threads)
        out = tmp_path / f"b{i}"
        assert main(["bench", "shading", "--m", "700", "--methods", "fw,sw", "--criteria", "lscv", "--out", str(out)]) == 0
        outs.append((out / "table.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]


@pytest.fixture
def shading_model(tmp_path):
    path = tmp_path / "shade.json"
    save_model(fit(gen_shading(ShadingConfig(M=800, seed=0)), BandwidthSpec.create("SW", (0.2, 0.27, 0.06))), path)
    return path


def test_density_conditional_normalised(tmp_path, shading_model):
    out = tmp_path / "c.csv"
    assert main(["density", "--model", str(shading_model), "--conditional", "--at", "10,315", "--out", str(out)]) == 0
    rows = np.array(_rows(out)[1:], dtype=float)
    assert np.trapezoid(rows[:, 1], rows[:, 0]) == pytest.approx(1.0, abs=5e-3)
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["lower"] < side["expectation"] < side["upper"] and side["level"] == 0.9


def test_density_at_dimension_mismatch(tmp_path, shading_model):
    assert main(["density", "--model", str(shading_model), "--conditional", "--at", "10",
                 "--out", str(tmp_path / "c.csv")]) == 2


def test_density_joint_peak(tmp_path):
    data = gen_example1()
    path = tmp_path / "m.json"
    model = fit(data, BandwidthSpec.create("FW", 0.3))
    save_model(model, path)
    out = tmp_path / "j.csv"
    assert main(["density", "--model", str(path), "--joint", "--dims", "x,y", "--points", "80", "--out", str(out)]) == 0
    grid = np.array(_rows(out)[1:], dtype=float)
    xs, ys = np.unique(grid[:, 0]), np.unique(grid[:, 1])
    peak = grid[np.argmax(grid[:, 2]), :2]
    densest = data.values[np.argmax(kde_evaluate(model, data.values))]
    assert abs(peak[0] - densest[0]) <= xs[1] - xs[0]
    assert abs(peak[1] - densest[1]) <= ys[1] - ys[0]


def test_density_two_points(tmp_path, shading_model):
    out = tmp_path / "j.csv"
    assert main(["density", "--model", str(shading_model), "--joint", "--dims", "0,2", "--points", "2",
                 "--range", "0:20,0:25", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["mast_speed", "reference_speed", "density"] and len(rows) == 5
    out = tmp_path / "c.csv"
    assert main(["density", "--model", str(shading_model), "--conditional", "--at", "10,315", "--points", "2",
                 "--out", str(out)]) == 0
    assert len(_rows(out)) == 3
