"""Exponent fields p(x) and the induced game probabilities alpha, beta."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

INF = math.inf

ORTHOGONAL = "orthogonal"
FULLBALL = "fullball"
VARIANTS = (ORTHOGONAL, FULLBALL)


class CoefficientDomainError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientPair:
    alpha: float
    beta: float


@dataclass(frozen=True)
class ExponentField:
    """A map x -> p(x) in (1, inf] with declared Hölder data.

    ``eval`` must accept an array of points of shape (..., n) and return an
    array of shape (...). ``spec`` is the config dictionary the field was built
    from (None for programmatic fields).
    """

    eval: Callable[[np.ndarray], np.ndarray]
    n: int
    s: float
    c_p: float
    p_min: float
    spec: dict | None = field(default=None, compare=False)

    def __call__(self, x) -> np.ndarray:
        return self.eval(np.asarray(x, dtype=float))

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.p_min)

    def to_dict(self) -> dict:
        return dict(self.spec or {"kind": "custom"}, n=self.n, s=self.s, c_p=self.c_p, p_min=self.p_min)


def constant_field(p: float, n: int = 2, s: float = 0.5) -> ExponentField:
    p = float(p)
    return ExponentField(
        lambda x: np.full(np.shape(x)[:-1], p),
        n=n, s=s, c_p=0.0, p_min=p,
        spec={"kind": "constant", "p": p},
    )


def affine_field(p0: float, slope, n: int = 2, p_min: float | None = None) -> ExponentField:
    """p(x) = p0 + <slope, x>; ``p_min`` must be supplied for the region of use."""
    a = np.asarray(slope, dtype=float)
    if a.shape != (n,):
        raise ValueError("slope must have length n")
    lip = float(np.linalg.norm(a))
    if p_min is None:
        raise ValueError("affine fields need an explicit p_min for their region")
    return ExponentField(
        lambda x: p0 + x @ a,
        n=n, s=1.0, c_p=lip, p_min=float(p_min),
        spec={"kind": "affine", "p0": p0, "slope": a.tolist(), "p_min": float(p_min)},
    )


def radial_holder_field(p0: float, amp: float, s: float, center=None, n: int = 2) -> ExponentField:
    """p(x) = p0 + amp * |x - center|**s, Hölder with constant |amp| and exponent s."""
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if not 0.0 < s <= 1.0:
        raise ValueError("Hölder exponent must lie in (0, 1]")
    if amp < 0:
        raise ValueError("amp must be nonnegative (p_min is then p0)")
    return ExponentField(
        lambda x: p0 + amp * np.linalg.norm(x - c, axis=-1) ** s,
        n=n, s=s, c_p=abs(amp), p_min=float(p0),
        spec={"kind": "radial_holder", "p0": p0, "amp": amp, "s": s, "center": c.tolist()},
    )


def field_from_spec(spec: dict, n: int) -> ExponentField:
    kind = spec["kind"]
    if kind == "constant":
        p = spec["p"]
        p = INF if p in ("inf", "infinity", INF) else float(p)
        return constant_field(p, n=n, s=float(spec.get("s", 0.5)))
    if kind == "affine":
        return affine_field(float(spec["p0"]), spec["slope"], n=n, p_min=spec["p_min"])
    if kind == "radial_holder":
        return radial_holder_field(
            float(spec["p0"]), float(spec["amp"]), float(spec["s"]), spec.get("center"), n=n
        )
    raise ValueError(f"unknown exponent field kind {kind!r}")


# --------------------------------------------------------------------------


def _alpha(p: np.ndarray, n: int, variant: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    shift = 1.0 if variant == ORTHOGONAL else 2.0
    with np.errstate(invalid="ignore"):
        a = (p - shift) / (n + p)
    return np.where(np.isinf(p), 1.0, a)


def alpha_of_p(p, n: int, variant: str = ORTHOGONAL) -> np.ndarray:
    """Vectorized alpha(p); raises if p is outside the variant's range."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    p = np.asarray(p, dtype=float)
    bound = 1.0 if variant == ORTHOGONAL else 2.0
    if np.any(p <= bound) or np.any(np.isnan(p)):
        raise CoefficientDomainError(f"{variant} variant needs p > {bound:g}")
    return _alpha(p, n, variant)


def coeffs_orthogonal_variant(field: ExponentField, x) -> CoefficientPair:
    """alpha = (p-1)/(n+p), beta = (n+1)/(n+p); alpha = 1 at p = inf."""
    p = float(field(np.asarray(x, dtype=float)))
    alpha = float(alpha_of_p(p, field.n, ORTHOGONAL))
    return CoefficientPair(alpha, 1.0 - alpha)


def coeffs_fullball_variant(field: ExponentField, x) -> CoefficientPair:
    """alpha = (p-2)/(n+p), beta = (n+2)/(n+p); defined for p > 2 only."""
    p = float(field(np.asarray(x, dtype=float)))
    alpha = float(alpha_of_p(p, field.n, FULLBALL))
    return CoefficientPair(alpha, 1.0 - alpha)


def coefficients(field: ExponentField, x, variant: str) -> CoefficientPair:
    if variant == ORTHOGONAL:
        return coeffs_orthogonal_variant(field, x)
    if variant == FULLBALL:
        return coeffs_fullball_variant(field, x)
    raise ValueError(f"unknown variant {variant!r}")


def alpha_field(field: ExponentField, points: np.ndarray, variant: str) -> np.ndarray:
    """alpha at many points; the fullball variant allows p = 2 exactly (pure averaging)."""
    p = field(points)
    bound = 1.0 if variant == ORTHOGONAL else 2.0
    if np.any(p < bound) or (variant == ORTHOGONAL and np.any(p == bound)):
        raise CoefficientDomainError(f"{variant} variant needs p > {bound:g}")
    return _alpha(p, field.n, variant)


def alpha_min(field: ExponentField, variant: str) -> float:
    return float(_alpha(np.array(field.p_min), field.n, variant))


def alpha_holder_constant(field: ExponentField, variant: str) -> float:
    """Hölder constant of alpha from that of p via the derivative bound.

    d alpha / d p = (n+1)/(n+p)**2 (orthogonal) or (n+2)/(n+p)**2 (fullball),
    maximal at p = p_min.
    """
    if field.c_p == 0.0 or field.is_infinite:
        return 0.0
    k = 1.0 if variant == ORTHOGONAL else 2.0
    return (field.n + k) / (field.n + field.p_min) ** 2 * field.c_p


def estimate_holder(
    field: ExponentField,
    pairs: np.ndarray,
    variant: str = ORTHOGONAL,
) -> tuple[float, float]:
    """Fit |alpha(x)-alpha(z)| ~ c |x-z|**s on sample pairs (shape (k, 2, n)).

    Returns ``(s_fit, c_fit)``: the least-squares slope in log-log coordinates
    and the largest ratio |d alpha| / |x-z|**s_fit. If every difference vanishes
    the declared exponent is returned with c_fit = 0.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1] != 2 or len(pairs) < 10:
        raise ValueError("need at least 10 point pairs of shape (k, 2, n)")
    ax = alpha_field(field, pairs[:, 0], variant)
    az = alpha_field(field, pairs[:, 1], variant)
    da = np.abs(ax - az)
    dist = np.linalg.norm(pairs[:, 0] - pairs[:, 1], axis=-1)
    keep = (da > 0) & (dist > 0)
    if keep.sum() < 2:
        return field.s, 0.0
    lx, ly = np.log(dist[keep]), np.log(da[keep])
    if np.ptp(lx) == 0:
        s_fit = field.s
    else:
        s_fit = float(np.polyfit(lx, ly, 1)[0])
    c_fit = float(np.max(da[keep] / dist[keep] ** s_fit))
    return s_fit, c_fit
