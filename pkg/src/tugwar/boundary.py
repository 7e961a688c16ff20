"""Named boundary data g imposed on the strip outside the domain."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class BoundaryDatum:
    func: Callable[[np.ndarray], np.ndarray]
    spec: dict = field(default_factory=dict, compare=False)

    def __call__(self, x) -> np.ndarray:
        return self.func(np.asarray(x, dtype=float))

    def is_affine(self) -> bool:
        return self.spec.get("kind") in ("constant", "affine")


def constant(c: float) -> BoundaryDatum:
    c = float(c)
    return BoundaryDatum(lambda x: np.full(x.shape[:-1], c), {"kind": "constant", "value": c})


def affine(c0: float, slope) -> BoundaryDatum:
    a = np.asarray(slope, dtype=float)
    return BoundaryDatum(lambda x: c0 + x @ a, {"kind": "affine", "c0": float(c0), "slope": a.tolist()})


def quadratic_harmonic(scale: float = 1.0) -> BoundaryDatum:
    """g(x) = scale * (x1**2 - x2**2), harmonic in every dimension >= 2."""
    s = float(scale)
    return BoundaryDatum(
        lambda x: s * (x[..., 0] ** 2 - x[..., 1] ** 2),
        {"kind": "quadratic_harmonic", "scale": s},
    )


def table(points, values) -> BoundaryDatum:
    """Nearest-neighbour lookup in a table of (point, value) rows."""
    from scipy.spatial import cKDTree

    pts = np.asarray(points, dtype=float)
    vals = np.asarray(values, dtype=float)
    tree = cKDTree(pts)

    def look(x):
        _, i = tree.query(x)
        return vals[i]

    return BoundaryDatum(look, {"kind": "table", "points": pts.tolist(), "values": vals.tolist()})


def datum_from_spec(spec: dict) -> BoundaryDatum:
    kind = spec["kind"]
    if kind == "constant":
        return constant(spec["value"])
    if kind == "affine":
        return affine(spec.get("c0", 0.0), spec["slope"])
    if kind == "quadratic_harmonic":
        return quadratic_harmonic(spec.get("scale", 1.0))
    if kind == "table":
        return table(spec["points"], spec["values"])
    raise ValueError(f"unknown boundary datum kind {kind!r}")
