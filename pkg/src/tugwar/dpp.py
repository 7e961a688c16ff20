"""Dynamic programming principles on a lattice and their fixed points.

The value function is stored on a regular lattice covering the domain plus a
strip of width at least epsilon. Strip nodes carry the boundary datum and are
never updated; interior nodes are updated by one Jacobi sweep of the chosen
DPP, with off-lattice values obtained by multilinear interpolation.

Because interior nodes are lattice nodes, every evaluation point x + eps*eta
has the same position relative to the lattice for every x, so each operator
is a fixed stencil: one gather of the neighbourhood followed by small dense
products.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .boundary import BoundaryDatum
from .coefficients import FULLBALL, ORTHOGONAL, VARIANTS, ExponentField, alpha_field
from .geometry import (
    QuadratureRule,
    ball_quadrature,
    frames_for,
    frame_for,
    full_ball_quadrature,
    sphere_directions,
)

INTERIOR = 1
STRIP = 0


class StripTooThinError(ValueError):
    """An evaluation point fell outside the lattice hull."""


def midrange(values) -> float:
    """Half the sum of the largest and the smallest value."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError("midrange of an empty collection")
    return 0.5 * (float(a.max()) + float(a.min()))


@dataclass(frozen=True)
class Domain:
    """A box (center, half-widths) or a ball (center, radius) with step size epsilon."""

    kind: str
    center: tuple
    size: tuple
    epsilon: float

    def __post_init__(self):
        if self.kind not in ("box", "ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.epsilon >= self.characteristic_size / 4:
            raise ValueError("epsilon must be below a quarter of the domain size")

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def characteristic_size(self) -> float:
        return 2.0 * min(self.size)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.center, float)
        if self.kind == "box":
            half = np.asarray(self.size, float)
        else:
            half = np.full(self.n, float(self.size[0]))
        return c - half, c + half

    def contains(self, x) -> np.ndarray:
        """Membership in the open domain."""
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center, float)
        if self.kind == "box":
            lo, hi = self.bounds
            return np.all((x > lo) & (x < hi), axis=-1)
        return np.linalg.norm(x - c, axis=-1) < float(self.size[0])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "size": list(self.size),
                "epsilon": self.epsilon}

    @classmethod
    def box(cls, lo, hi, epsilon: float) -> "Domain":
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        return cls("box", tuple(((lo + hi) / 2).tolist()), tuple(((hi - lo) / 2).tolist()), epsilon)

    @classmethod
    def unit_square(cls, epsilon: float) -> "Domain":
        return cls.box([0.0, 0.0], [1.0, 1.0], epsilon)


@dataclass
class GridField:
    """Values on a regular lattice; ``region`` tags each node INTERIOR or STRIP."""

    origin: np.ndarray
    h: float
    shape: tuple
    values: np.ndarray
    region: np.ndarray
    domain: Domain
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.shape)

    @property
    def epsilon(self) -> float:
        return self.domain.epsilon

    @property
    def strides(self) -> np.ndarray:
        return np.array([int(np.prod(self.shape[d + 1:])) for d in range(self.n)], dtype=np.int64)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*shape, n)."""
        axes = [self.origin[d] + self.h * np.arange(self.shape[d]) for d in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def copy_with(self, values: np.ndarray) -> "GridField":
        return GridField(self.origin, self.h, self.shape, values, self.region, self.domain, dict(self.meta))

    @property
    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.region.ravel() == INTERIOR)

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation at points of shape (..., n)."""
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, self.n)
        q = (flat - self.origin) / self.h
        base = np.floor(q).astype(np.int64)
        t = q - base
        shape = np.asarray(self.shape)
        # points sitting on the upper face use the last cell
        upper = base >= shape - 1
        base[upper] = (shape - 2)[np.nonzero(upper)[1]]
        t[upper] = q[upper] - base[upper]
        if np.any(base < 0) or np.any(base > shape - 2) or np.any(t > 1 + 1e-9) or np.any(t < -1e-9):
            raise StripTooThinError("evaluation point outside the lattice hull")
        vals = self.values.reshape(-1)
        strides = self.strides
        out = np.zeros(len(flat))
        for corner in itertools.product((0, 1), repeat=self.n):
            c = np.asarray(corner)
            w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
            out += w * vals[(base + c) @ strides]
        return out.reshape(pts.shape[:-1])

    def interior_values(self) -> np.ndarray:
        return self.values.reshape(-1)[self.interior_index]

    def strip_values(self) -> np.ndarray:
        return self.values.reshape(-1)[self.region.ravel() == STRIP]


def make_grid(domain: Domain, h: float, g: BoundaryDatum, fill: float | None = None) -> GridField:
    """Lattice with spacing ``h`` aligned on the domain's lower corner.

    Strip nodes get ``g``; interior nodes get ``fill`` (default: the midrange
    of the strip data).
    """
    if h <= 0:
        raise ValueError("h must be positive")
    eps = domain.epsilon
    lo, hi = domain.bounds
    pad = int(math.ceil(eps / h - 1e-9)) + 1
    counts = np.rint((hi - lo) / h).astype(int)
    origin = lo - pad * h
    shape = tuple(int(c + 1 + 2 * pad) for c in counts)
    proto = GridField(origin, float(h), shape, np.zeros(shape), np.zeros(shape, dtype=np.int8), domain)
    pts = proto.coords()
    inside = domain.contains(pts)
    region = np.where(inside, INTERIOR, STRIP).astype(np.int8)
    values = np.asarray(g(pts), dtype=float).copy()
    strip = values[region == STRIP]
    start = midrange(strip) if fill is None else float(fill)
    values[region == INTERIOR] = start
    return GridField(origin, float(h), shape, values, region, domain, {"boundary": g.spec})


# --------------------------------------------------------------------------
# Stencils


def _stencil(points_in_h: np.ndarray, n: int):
    """Multilinear stencils for offsets given in lattice units.

    Returns ``(offsets, W)`` with integer node offsets (k, n) and weights
    (len(points), k), rows summing to one.
    """
    q = np.asarray(points_in_h, dtype=float)
    # snap round-off so that points on lattice lines use a single cell
    q = np.where(np.abs(q - np.rint(q)) < 1e-12, np.rint(q), q)
    base = np.floor(q).astype(np.int64)
    t = q - base
    entries: dict[tuple, int] = {}
    rows, cols, vals = [], [], []
    for corner in itertools.product((0, 1), repeat=n):
        c = np.asarray(corner)
        w = np.prod(np.where(c == 1, t, 1.0 - t), axis=1)
        nodes = base + c
        for i in range(len(q)):
            if w[i] == 0.0:
                continue
            key = tuple(nodes[i])
            j = entries.setdefault(key, len(entries))
            rows.append(i)
            cols.append(j)
            vals.append(w[i])
    offsets = np.array(list(entries.keys()), dtype=np.int64).reshape(-1, n)
    W = np.zeros((len(q), len(offsets)))
    np.add.at(W, (np.array(rows), np.array(cols)), np.array(vals))
    return offsets, W


def default_direction_count(n: int) -> int:
    return 64 if n == 2 else 256


def default_quadrature(n: int, variant: str, m: int | None = None) -> QuadratureRule:
    if variant == ORTHOGONAL:
        return ball_quadrature(n, m or (16 if n == 2 else 64))
    return full_ball_quadrature(n, m or (64 if n == 2 else 128))


class DPPOperator:
    """One Jacobi sweep of either DPP on a fixed lattice.

    ``orthogonal``: u(x) = midrange over directions nu of
    alpha(x) u(x + eps nu) + beta(x) * mean of u over x + eps P_nu (flat ball).

    ``fullball``: u(x) = alpha(x) * midrange of u over the closed eps-ball
    (lattice nodes inside it plus sphere samples) + beta(x) * ball average.
    """

    def __init__(
        self,
        grid: GridField,
        field: ExponentField,
        variant: str,
        dirs: np.ndarray | None = None,
        quad: QuadratureRule | None = None,
    ):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        n = grid.n
        if field.n != n:
            raise ValueError("exponent field and grid dimensions differ")
        self.variant = variant
        self.grid_shape = grid.shape
        self.h = grid.h
        eps = grid.epsilon
        self.dirs = sphere_directions(n, default_direction_count(n)) if dirs is None else np.asarray(dirs, float)
        self.quad = default_quadrature(n, variant) if quad is None else quad
        if variant == ORTHOGONAL and self.quad.kind != "flat":
            raise ValueError("orthogonal variant needs a flat-ball rule")
        if variant == FULLBALL and self.quad.kind != "full":
            raise ValueError("fullball variant needs a full-ball rule")

        self.idx = grid.interior_index
        coords = grid.coords().reshape(-1, n)[self.idx]
        self.alpha = alpha_field(field, coords, variant)
        self.beta = 1.0 - self.alpha

        if variant == ORTHOGONAL:
            m, q = len(self.dirs), len(self.quad)
            frames = frames_for(self.dirs, 1)
            det_pts = eps * self.dirs
            noise_pts = eps * np.einsum("kij,qj->kqi", frames, self.quad.nodes)  # (m, q, n)
            all_pts = np.vstack([det_pts, noise_pts.reshape(-1, n)]) / self.h
            offsets, W = _stencil(all_pts, n)
            self.W_det = W[:m]
            self.W_noise = np.einsum("q,kqs->ks", self.quad.weights, W[m:].reshape(m, q, -1))
        else:
            r = int(math.floor(eps / self.h + 1e-9))
            rng_ = range(-r, r + 1)
            lat = np.array([k for k in itertools.product(rng_, repeat=n)
                            if self.h * math.sqrt(sum(c * c for c in k)) <= eps * (1 + 1e-12)], float)
            ext_pts = np.vstack([lat, eps * self.dirs / self.h])
            avg_pts = eps * self.quad.nodes / self.h
            offsets, W = _stencil(np.vstack([ext_pts, avg_pts]), n)
            self.W_ext = W[: len(ext_pts)]
            self.w_avg = self.quad.weights @ W[len(ext_pts):]
        strides = np.array([int(np.prod(grid.shape[d + 1:])) for d in range(n)], dtype=np.int64)
        self.lin_offsets = offsets @ strides
        # every gathered node must exist in the lattice
        interior_multi = np.array(np.unravel_index(self.idx, grid.shape)).T
        lo = interior_multi.min(axis=0) + offsets.min(axis=0)
        hi = interior_multi.max(axis=0) + offsets.max(axis=0)
        if np.any(lo < 0) or np.any(hi >= np.asarray(grid.shape)):
            raise StripTooThinError("strip too thin for the evaluation stencil")
        self._gather = self.idx[:, None] + self.lin_offsets[None, :]

    def interior_update(self, values_flat: np.ndarray) -> np.ndarray:
        U = values_flat[self._gather]
        if self.variant == ORTHOGONAL:
            A = U @ self.W_det.T
            if np.any(self.beta > 0):
                A = self.alpha[:, None] * A + self.beta[:, None] * (U @ self.W_noise.T)
            return 0.5 * (A.max(axis=1) + A.min(axis=1))
        V = U @ self.W_ext.T
        mid = 0.5 * (V.max(axis=1) + V.min(axis=1))
        return self.alpha * mid + self.beta * (U @ self.w_avg)

    def apply(self, u: GridField) -> GridField:
        vals = u.values.reshape(-1).copy()
        vals[self.idx] = self.interior_update(u.values.reshape(-1))
        return u.copy_with(vals.reshape(u.shape))


def avg_operator(u: GridField, x, nu, alpha: float, quad: QuadratureRule) -> float:
    """alpha*u(x + eps*nu) + (1-alpha) * mean of u over the noise set of the rule.

    With a flat rule the noise set is x + eps*P_nu*zeta; with a full-ball rule it
    is x + eps*zeta (and ``nu`` may be any vector of length <= 1).
    """
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    eps = u.epsilon
    if quad.kind == "flat":
        pts = x + eps * quad.nodes @ frame_for(nu, 1).T
    else:
        pts = x + eps * quad.nodes
    det = float(u.interpolate(x + eps * nu))
    noise = float(quad.weights @ u.interpolate(pts))
    return alpha * det + (1.0 - alpha) * noise


def dpp_apply(u: GridField, op: DPPOperator) -> GridField:
    return op.apply(u)


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    domain: Domain
    field: ExponentField
    variant: str
    g: BoundaryDatum
    h: float
    directions: int | None = None
    quad_nodes: int | None = None

    def build(self) -> tuple[GridField, DPPOperator]:
        n = self.domain.n
        grid = make_grid(self.domain, self.h, self.g)
        dirs = sphere_directions(n, self.directions or default_direction_count(n))
        quad = default_quadrature(n, self.variant, self.quad_nodes)
        return grid, DPPOperator(grid, self.field, self.variant, dirs, quad)

    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "field": self.field.to_dict(),
            "variant": self.variant,
            "boundary": self.g.spec,
            "h": self.h,
            "directions": self.directions or default_direction_count(self.domain.n),
            "quad_nodes": len(default_quadrature(self.domain.n, self.variant, self.quad_nodes)),
        }


@dataclass
class SolveResult:
    field: GridField
    iterations: int
    residual_history: list
    converged: bool


def solve_fixed_point(
    problem: Problem | tuple[GridField, DPPOperator],
    tol: float | None = None,
    max_iter: int = 200_000,
) -> SolveResult:
    """Jacobi value iteration until the sup-norm update is at most ``tol``.

    Default tolerance is ``1e-9 * sup|g|`` (absolute 1e-12 for g = 0).
    Not converging within ``max_iter`` is reported, not raised.
    """
    grid, op = problem.build() if isinstance(problem, Problem) else problem
    vals = grid.values.reshape(-1).copy()
    gmax = float(np.abs(grid.strip_values()).max())
    if tol is None:
        tol = 1e-9 * gmax if gmax > 0 else 1e-12
    if tol <= 0:
        raise ValueError("tol must be positive")
    bound = gmax * (1 + 1e-12) + 1e-14
    history = []
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        new = op.interior_update(vals)
        res = float(np.max(np.abs(new - vals[op.idx]))) if len(new) else 0.0
        vals[op.idx] = new
        history.append(res)
        if np.max(np.abs(new), initial=0.0) > bound:
            raise AssertionError("maximum principle violated during iteration")
        if res <= tol:
            converged = True
            break
    out = grid.copy_with(vals.reshape(grid.shape))
    out.meta.update(
        variant=op.variant,
        iterations=it,
        converged=converged,
        tol=tol,
        directions=len(op.dirs),
        quad_nodes=len(op.quad),
    )
    return SolveResult(out, it, history, converged)
