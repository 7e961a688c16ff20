"""Artifact serialization: GridField CSV + JSON header, JSON reports with provenance."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .dpp import Domain, GridField

SCHEMA_VERSION = "1.0"

GRID_COLUMNS = ["index", "coords", "region", "value"]


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _clean(obj):
    """JSON-safe copy: numpy to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_report(path, payload: dict, chash: str) -> None:
    body = {**payload, "schema_version": SCHEMA_VERSION, "config_hash": chash}
    Path(path).write_text(dumps(body))


def write_grid(u: GridField, csv_path, json_path, chash: str, extra: dict | None = None) -> None:
    """CSV rows (flat index, coordinates, region, value) and a JSON header."""
    pts = u.coords().reshape(-1, u.n)
    vals = u.values.reshape(-1)
    reg = u.region.reshape(-1)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index"] + [f"x{d + 1}" for d in range(u.n)] + ["region", "value"])
        for k in range(len(vals)):
            w.writerow([k] + [repr(float(c)) for c in pts[k]] + [int(reg[k]), repr(float(vals[k]))])
    header = {
        "h": u.h,
        "epsilon": u.epsilon,
        "origin": u.origin.tolist(),
        "shape": list(u.shape),
        "domain": u.domain.to_dict(),
        "meta": u.meta,
        **(extra or {}),
    }
    write_report(json_path, header, chash)


def read_grid(csv_path, json_path) -> GridField:
    header = json.loads(Path(json_path).read_text())
    shape = tuple(header["shape"])
    rows = np.loadtxt(csv_path, delimiter=",", skiprows=1)
    rows = np.atleast_2d(rows)
    vals = rows[:, -1].reshape(shape)
    reg = rows[:, -2].astype(np.int8).reshape(shape)
    d = header["domain"]
    dom = Domain(d["kind"], tuple(d["center"]), tuple(d["size"]), d["epsilon"])
    return GridField(np.asarray(header["origin"], float), float(header["h"]), shape, vals, reg, dom,
                     dict(header.get("meta", {})))
