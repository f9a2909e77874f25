"""Self-contained JSON model files.

A KDE needs every training sample at prediction time, so the file embeds
the training data next to the bandwidth spec. Floats are written with
``repr`` precision, which reparses to the identical double.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .bandwidth import BandwidthSpec
from .dataset import Dataset
from .density import FittedModel, fit
from .errors import DataError

FORMAT = "kdecorrect-model"
FORMAT_VERSION = 1


def fingerprint(data: Dataset) -> dict:
    values = np.ascontiguousarray(data.values, dtype="<f8")
    return {
        "rows": data.M,
        "means": values.mean(axis=0).tolist(),
        "stds": values.std(axis=0, ddof=1).tolist(),
        "sha256": hashlib.sha256(values.tobytes()).hexdigest(),
    }


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def model_to_dict(model: FittedModel, extra: dict | None = None) -> dict:
    if model.data is None or model.spec is None:
        raise DataError("only models fitted from a Dataset can be saved")
    spec, data = model.spec, model.data
    factor = list(spec.factor) if spec.selective else spec.factor
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "columns": list(data.columns),
        "output_column": data.output_column,
        "bandwidth": {"method": spec.method, "factor": factor, "alpha": spec.alpha},
        "fingerprint": fingerprint(data),
        "data": data.values.tolist(),
        "local_factors": model.local.lambdas.tolist() if model.local is not None else None,
    }
    if extra:
        doc["meta"] = extra
    return doc


def save_model(model: FittedModel, path, extra: dict | None = None) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model, extra), indent=1) + "\n")


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("format") != FORMAT:
        raise DataError("not a kdecorrect model file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {doc.get('format_version')}")
    columns = tuple(doc["columns"])
    data = Dataset(columns, np.array(doc["data"], dtype=float), columns.index(doc["output_column"]))
    if fingerprint(data)["sha256"] != doc["fingerprint"]["sha256"]:
        raise DataError("model file fingerprint does not match its embedded data")
    bw = doc["bandwidth"]
    return fit(data, BandwidthSpec.create(bw["method"], bw["factor"], bw["alpha"]))


def load_model(path) -> FittedModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such model file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)
