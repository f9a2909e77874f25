"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .bandwidth import plugin_factor
from .conditional import (
    DEFAULT_LEVEL,
    condition,
    conditional_expectation,
    correct_batch,
    credible_interval,
)
from .dataset import load_csv
from .density import FittedModel, fit, kde_evaluate
from .errors import DataError, NumericalError
from .experiments import (
    Example1Config,
    ShadingConfig,
    gen_example1,
    gen_shading,
    run_benchmark,
)
from .modelfile import atomic_write_text, load_model, save_model
from .selection import CriterionEvaluator, OptimizerConfig, select_bandwidth

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4
TABLE_COLUMNS = ("method", "criterion", "factor", "lscv", "mcse", "rmse", "coverage", "evaluations", "converged")


class UsageError(Exception):
    pass


def _num(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def _factor_text(factor) -> str:
    if isinstance(factor, (list, tuple)):
        return " ".join(repr(float(v)) for v in factor)
    return repr(float(factor))


# -- fit -------------------------------------------------------------------

def cmd_fit(args) -> int:
    data = load_csv(args.input, args.output_col)
    method = args.method.upper()
    crit = args.criterion.lower()
    ev = CriterionEvaluator(data, args.alpha)
    if crit in ("scott", "silverman"):
        h = plugin_factor(data.M, data.d, crit)
        factor = h if method in ("FW", "AW") else (h,) * data.d
        report = ev.report(method, crit.upper(), factor, 1, True)
    else:
        report = select_bandwidth(data, method, crit, OptimizerConfig(), args.alpha, evaluator=ev)
    model = fit(data, report.spec)
    save_model(model, args.model, {"criterion": report.criterion, "seed": args.seed,
                                   "lscv": report.lscv_value, "mcse": report.mcse_value})
    print("method,criterion,factor,lscv,mcse,evaluations,converged")
    print(",".join([report.method, report.criterion.lower(), _factor_text(report.factor),
                    _num(report.lscv_value), _num(report.mcse_value),
                    str(report.evaluations), str(report.converged)]))
    return 0


# -- predict ---------------------------------------------------------------

def _read_table(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: missing header row")
    return [h.strip() for h in rows[0]], [r for r in rows[1:] if any(t.strip() for t in r)]


def cmd_predict(args) -> int:
    model = load_model(args.model)
    part = model.bandwidth.partition(model.output_index)
    names = [model.columns[i] for i in part.inputs]
    header, rows = _read_table(args.input)
    missing = [n for n in names if n not in header]
    if missing:
        raise DataError(f"input is missing model column(s): {', '.join(missing)}")
    idx = [header.index(n) for n in names]

    values, valid = [], []
    for r in rows:
        try:
            v = [float(r[i]) for i in idx]
            ok = all(math.isfinite(t) for t in v)
        except (ValueError, IndexError):
            v, ok = [0.0] * len(idx), False
        values.append(v)
        valid.append(ok)
    values = np.array(values, dtype=float).reshape(len(rows), len(idx))
    valid = np.array(valid, dtype=bool)
    results = iter(correct_batch(model, values[valid], args.level))

    out = []
    for r, ok in zip(rows, valid):
        if not ok:
            out.append(r + ["", "", "", "", "invalid_input"])
            continue
        res = next(results)
        out.append(r + [_num(res.expectation), _num(res.lower), _num(res.upper),
                        _num(res.evidence), res.flag or ""])
    _write_csv(args.out, header + ["expected", "lower", "upper", "evidence", "flag"], out)
    return 0


# -- bench -----------------------------------------------------------------

def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_bench(args) -> int:
    methods = [m.upper() for m in _split_list(args.methods)]
    criteria = [c.upper() for c in _split_list(args.criteria)]
    for m in methods:
        if m not in ("FW", "AW", "SW", "SAW"):
            raise UsageError(f"unknown method {m!r}")
    for c in criteria:
        if c not in ("LSCV", "MCSE"):
            raise UsageError(f"unknown criterion {c!r}")

    proxy = None
    source: dict = {"kind": args.source}
    if args.source == "example1":
        cfg = Example1Config(M=args.m or 100, seed=args.seed)
        data = gen_example1(cfg)
        source["config"] = asdict(cfg)
    elif args.source == "shading":
        cfg = ShadingConfig(M=args.m or 3000, seed=args.seed)
        data = gen_shading(cfg)
        source["config"] = asdict(cfg)
        proxy = "mast_speed"
    else:
        data = load_csv(args.input, args.output_col)
        proxy = args.proxy_col
        source.update(input=str(args.input), dropped=data.dropped)

    table = run_benchmark(data, methods, criteria, (args.split, args.split_seed), args.level, proxy)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    if table.raw_rmse is not None:
        records.append({"method": "raw", "criterion": "", "factor": None, "lscv": None, "mcse": None,
                        "rmse": table.raw_rmse, "coverage": None, "evaluations": 0, "converged": None})
    records.extend(row.as_dict() for row in table.rows)

    csv_rows = []
    for rec in records:
        csv_rows.append([
            rec["method"], rec["criterion"],
            "" if rec["factor"] is None else _factor_text(rec["factor"]),
            _num(rec["lscv"]), _num(rec["mcse"]), _num(rec["rmse"]), _num(rec["coverage"]),
            str(rec["evaluations"]), "" if rec["converged"] is None else str(rec["converged"]),
        ])
    _write_csv(out / "table.csv", TABLE_COLUMNS, csv_rows)
    atomic_write_text(out / "table.json", json.dumps({"raw_rmse": table.raw_rmse, "rows": records}, indent=1) + "\n")
    meta = dict(table.meta, source=source, version=__version__)
    atomic_write_text(out / "meta.json", json.dumps(meta, indent=1, default=str) + "\n")
    for rec in records:
        print(f"{rec['method']:>4} {rec['criterion']:>6}  rmse={_num(rec['rmse'])}")
    return 0


# -- density ---------------------------------------------------------------

def _parse_ranges(spec: str, n: int) -> list[tuple[float, float]]:
    try:
        parts = [tuple(float(t) for t in p.split(":")) for p in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad --range {spec!r}; expected lo:hi[,lo:hi]") from None
    if len(parts) != n or any(len(p) != 2 or not p[0] < p[1] for p in parts):
        raise UsageError(f"--range needs {n} interval(s) lo:hi with lo < hi")
    return parts


def _column_index(model: FittedModel, token: str) -> int:
    token = token.strip()
    if model.columns and token in model.columns:
        return model.columns.index(token)
    try:
        i = int(token)
    except ValueError:
        raise UsageError(f"unknown column {token!r}") from None
    if not 0 <= i < model.d:
        raise UsageError(f"column index {i} out of range")
    return i


def _density_joint(model: FittedModel, args) -> None:
    dims = [_column_index(model, t) for t in (args.dims or "0,1").split(",")]
    if len(dims) != 2 or dims[0] == dims[1]:
        raise UsageError("--dims needs two distinct columns")
    # the marginal of a Gaussian KDE keeps the matching block of every kernel
    sub = FittedModel.from_bandwidth(
        model.points[:, dims], model.bandwidth.H[np.ix_(dims, dims)],
        lambdas=model.lambdas if model.adaptive else None,
    )
    if args.range:
        ranges = _parse_ranges(args.range, 2)
    else:
        pad = 3.0 * np.sqrt(np.diag(sub.bandwidth.H)) * float(np.max(sub.lambdas))
        lo, hi = sub.points.min(axis=0) - pad, sub.points.max(axis=0) + pad
        ranges = list(zip(lo.tolist(), hi.tolist()))
    ga = np.linspace(*ranges[0], args.points)
    gb = np.linspace(*ranges[1], args.points)
    a, b = np.meshgrid(ga, gb, indexing="ij")
    dens = kde_evaluate(sub, np.column_stack([a.ravel(), b.ravel()]))
    names = [model.columns[i] if model.columns else f"x{i}" for i in dims]
    _write_csv(args.out, names + ["density"],
               [[_num(x), _num(y), _num(f)] for x, y, f in zip(a.ravel(), b.ravel(), dens)])


def _density_conditional(model: FittedModel, args) -> None:
    try:
        at = [float(t) for t in args.at.split(",")]
    except ValueError:
        raise UsageError(f"bad --at {args.at!r}") from None
    if len(at) != model.d - 1:
        raise UsageError(f"--at needs {model.d - 1} input values, got {len(at)}")
    mix = condition(model, at)
    if args.range:
        (lo, hi), = _parse_ranges(args.range, 1)
    else:
        live = mix.weights > 1e-12
        lo = float(np.min(mix.means[live] - 8 * mix.stds[live]))
        hi = float(np.max(mix.means[live] + 8 * mix.stds[live]))
    grid = np.linspace(lo, hi, args.points)
    dens = mix.pdf(grid)
    name = model.columns[model.output_index] if model.columns else "y"
    _write_csv(args.out, [name, "density"], [[_num(y), _num(f)] for y, f in zip(grid, dens)])
    lower, upper = credible_interval(mix, args.level)
    side = {
        "at": at,
        "expectation": conditional_expectation(mix),
        "lower": lower,
        "upper": upper,
        "level": args.level,
        "evidence": mix.evidence,
    }
    atomic_write_text(Path(args.out).with_suffix(".json"), json.dumps(side, indent=1) + "\n")


def cmd_density(args) -> int:
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    model = load_model(args.model)
    if args.conditional:
        _density_conditional(model, args)
    else:
        _density_joint(model, args)
    return 0


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdecorrect", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="select a bandwidth and write a model file")
    f.add_argument("--input", required=True)
    f.add_argument("--output-col")
    f.add_argument("--method", required=True, choices=["fw", "aw", "sw", "saw"], type=str.lower)
    f.add_argument("--criterion", required=True, choices=["lscv", "mcse", "scott", "silverman"], type=str.lower)
    f.add_argument("--alpha", type=float, default=0.5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--model", required=True)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="correct the output column of a CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--input", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--level", type=float, default=DEFAULT_LEVEL)
    pr.set_defaults(func=cmd_predict)

    b = sub.add_parser("bench", help="bandwidth benchmark tables")
    bsub = b.add_subparsers(dest="source", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True)
    common.add_argument("--methods", default="fw,aw,sw,saw")
    common.add_argument("--criteria", default="lscv,mcse")
    common.add_argument("--split", type=float, default=0.8)
    common.add_argument("--split-seed", type=int, default=0)
    common.add_argument("--level", type=float, default=DEFAULT_LEVEL)
    for name in ("example1", "shading"):
        s = bsub.add_parser(name, parents=[common])
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--m", type=int)
        s.set_defaults(func=cmd_bench)
    c = bsub.add_parser("csv", parents=[common])
    c.add_argument("--input", required=True)
    c.add_argument("--output-col")
    c.add_argument("--proxy-col")
    c.set_defaults(func=cmd_bench)

    d = sub.add_parser("density", help="export density grids for plotting")
    d.add_argument("--model", required=True)
    mode = d.add_mutually_exclusive_group(required=True)
    mode.add_argument("--joint", action="store_true")
    mode.add_argument("--conditional", action="store_true")
    d.add_argument("--dims")
    d.add_argument("--at")
    d.add_argument("--range")
    d.add_argument("--points", type=int, default=200)
    d.add_argument("--level", type=float, default=DEFAULT_LEVEL)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_density)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "conditional", False) and not args.at:
        parser.error("--conditional needs --at")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"kdecorrect: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"kdecorrect: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"kdecorrect: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
