"""Vector geometry for the orthogonal-noise game.

Frames sending ``e1`` to a prescribed unit vector, the coupled pair of
rotations used for the common-noise branch, projections onto ``span{v}``,
planar rotations, and symmetric quadrature rules on the flat ball
``{zeta : zeta_1 = 0, |zeta| <= 1}`` and on the full unit ball.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

UNIT_TOL = 1e-12
CLAMP_TOL = 1e-14


class GeometryError(ValueError):
    pass


def unit(v, tol: float = 1e-9) -> np.ndarray:
    """Return ``v`` as a float array, checking that it has norm one."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > tol:
        raise GeometryError(f"expected a unit vector, got norm {nrm!r}")
    return v


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise GeometryError("cannot normalize the zero vector")
    return v / nrm


@dataclass(frozen=True)
class Projection:
    h_v: float
    h_vperp: float


def project(h, v) -> Projection:
    """Split ``h`` into its signed component along ``v`` and the orthogonal magnitude."""
    h = np.asarray(h, dtype=float)
    v = np.asarray(v, dtype=float)
    h_v = float(np.dot(v, h))
    rad = float(np.dot(h, h)) - h_v * h_v
    if rad < 0.0:
        if rad < -CLAMP_TOL * max(1.0, float(np.dot(h, h))):
            raise GeometryError(f"negative orthogonal radicand {rad!r}; is v a unit vector?")
        rad = 0.0
    return Projection(h_v, math.sqrt(rad))


def project_many(h: np.ndarray, v) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`project` over the rows of ``h``; returns ``(h_V, h_Vperp**2)``."""
    h = np.asarray(h, dtype=float)
    hv = h @ np.asarray(v, dtype=float)
    perp2 = np.einsum("...i,...i->...", h, h) - hv * hv
    return hv, np.maximum(perp2, 0.0)


# --------------------------------------------------------------------------
# Orthogonal frames


def _complete(basis: np.ndarray, count: int) -> np.ndarray:
    """Extend orthonormal rows of ``basis`` (shape (B, k, n)) by ``count`` vectors.

    Largest-pivot Gram-Schmidt over the standard basis: at each step the
    standard vector with the largest residual is orthogonalized (lowest index
    on ties), twice for stability. Works on a batch so that scalar and batched
    frames agree bit for bit.
    """
    B, k, n = basis.shape
    cols = [basis[:, j, :] for j in range(k)]
    eye = np.eye(n)
    for _ in range(count):
        Q = np.stack(cols, axis=1)  # (B, k', n)
        # residual norm^2 of e_j after projection: 1 - sum_k Q[:, k, j]^2
        resid = 1.0 - np.einsum("bkn,bkn->bn", Q, Q)
        # round to suppress last-bit noise in the tie-break
        resid = np.round(resid, 12)
        pick = np.argmax(resid, axis=1)
        w = eye[pick].copy()
        for _ in range(2):
            coef = np.einsum("bkn,bn->bk", Q, w)
            w = w - np.einsum("bk,bkn->bn", coef, Q)
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        cols.append(w)
    return np.stack(cols, axis=1)


def frames_for(nus: np.ndarray, det_sign: int = 1) -> np.ndarray:
    """Batched :func:`frame_for`: ``nus`` has shape (B, n), result (B, n, n)."""
    nus = np.atleast_2d(np.asarray(nus, dtype=float))
    B, n = nus.shape
    rows = _complete(nus[:, None, :], n - 1)  # rows are the columns of P
    P = np.transpose(rows, (0, 2, 1)).copy()
    dets = np.linalg.det(P)
    flip = np.sign(dets) != det_sign
    P[flip, :, -1] *= -1.0
    P[:, :, 0] = nus
    return P


def frame_for(nu, det_sign: int = 1) -> np.ndarray:
    """Orthogonal matrix with first column ``nu`` and determinant ``det_sign``."""
    if det_sign not in (1, -1):
        raise GeometryError("det_sign must be +1 or -1")
    nu = unit(nu)
    if nu.size == 1:
        if det_sign != int(np.sign(nu[0])):
            raise GeometryError("in one dimension the frame is fixed by nu")
        return nu.reshape(1, 1).copy()
    return frames_for(nu[None, :], det_sign)[0]


@dataclass(frozen=True)
class CoupledRotation:
    p_x: np.ndarray
    p_z: np.ndarray
    nu_x: np.ndarray
    nu_z: np.ndarray

    @property
    def rho_x(self) -> np.ndarray:
        return self.p_x[:, 1]

    @property
    def rho_z(self) -> np.ndarray:
        return self.p_z[:, 1]

    def apply(self, zeta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map flat-ball points (rows, first coordinate zero) through both frames."""
        zeta = np.asarray(zeta, dtype=float)
        return zeta @ self.p_x.T, zeta @ self.p_z.T


def coupled_rotations(nu_x: np.ndarray, nu_z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched coupled frames: rows of ``nu_x``, ``nu_z`` (B, n) give ``P_x``, ``P_z`` (B, n, n).

    ``P_x`` has determinant +1 and ``P_z`` determinant -1; both share every
    column after the second. For each ``zeta`` with ``zeta_1 = 0`` and
    ``|zeta| <= 1`` the images satisfy ``|P_x zeta - P_z zeta| <= |nu_x + nu_z|``.
    """
    nu_x = np.atleast_2d(np.asarray(nu_x, dtype=float))
    nu_z = np.atleast_2d(np.asarray(nu_z, dtype=float))
    if nu_x.shape != nu_z.shape:
        raise GeometryError("nu_x and nu_z have different shapes")
    B, n = nu_x.shape
    if n < 2:
        raise GeometryError("coupled rotations need n >= 2")
    for nu in (nu_x, nu_z):
        if np.any(np.abs(np.linalg.norm(nu, axis=1) - 1.0) > 1e-9):
            raise GeometryError("expected unit vectors")

    dot = np.einsum("bi,bi->b", nu_z, nu_x)
    w = nu_z - dot[:, None] * nu_x
    w = w - np.einsum("bi,bi->b", w, nu_x)[:, None] * nu_x
    wn = np.linalg.norm(w, axis=1)
    para = wn <= 1e-10
    full = np.empty((B, n, n))
    gen = ~para
    if gen.any():
        b2 = w[gen] / wn[gen, None]
        full[gen] = _complete(np.stack([nu_x[gen], b2], axis=1), n - 2)
    if para.any():
        # nu_x = +-nu_z: both orthogonal complements coincide
        full[para] = _complete(nu_x[para, None, :], n - 1)
    b2 = full[:, 1, :]
    R = np.transpose(full[:, 2:, :], (0, 2, 1))  # (B, n, n-2)

    P_x = np.concatenate([nu_x[:, :, None], b2[:, :, None], R], axis=2)
    neg = np.linalg.det(P_x) < 0
    P_x[neg, :, 1] *= -1.0

    # in-plane perpendicular of nu_z with respect to the basis (nu_x, b2)
    a = np.einsum("bi,bi->b", nu_z, nu_x)
    c = np.einsum("bi,bi->b", nu_z, b2)
    rho_z = -c[:, None] * nu_x + a[:, None] * b2
    rho_z /= np.linalg.norm(rho_z, axis=1, keepdims=True)
    P_z = np.concatenate([nu_z[:, :, None], rho_z[:, :, None], R], axis=2)
    pos = np.linalg.det(P_z) > 0
    P_z[pos, :, 1] *= -1.0
    return P_x, P_z


def coupled_rotation(nu_x, nu_z) -> CoupledRotation:
    """Frames ``P_x`` (det +1) and ``P_z`` (det -1) sharing all columns after the second.

    For every ``zeta`` with ``zeta_1 = 0`` and ``|zeta| <= 1`` the images satisfy
    ``|P_x zeta - P_z zeta| <= |nu_x + nu_z|``; when ``nu_z = -nu_x`` the two
    images coincide.
    """
    nu_x = unit(nu_x)
    nu_z = unit(nu_z)
    if nu_x.shape != nu_z.shape:
        raise GeometryError("nu_x and nu_z have different dimensions")
    P_x, P_z = coupled_rotations(nu_x[None], nu_z[None])
    return CoupledRotation(P_x[0], P_z[0], nu_x, nu_z)


def rotate_in_plane(v, w, theta: float) -> np.ndarray:
    """Rotate ``v`` by ``theta`` inside ``span{v, w}`` toward ``w``."""
    v = unit(v)
    w = np.asarray(w, dtype=float)
    w_perp = w - np.dot(w, v) * v
    nrm = np.linalg.norm(w_perp)
    if nrm < 1e-12:
        raise GeometryError("v and w are parallel; rotation plane undefined")
    w_perp /= nrm
    return math.cos(theta) * v + math.sin(theta) * w_perp


# --------------------------------------------------------------------------
# Quadrature and sampling


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes (rows) with positive weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "flat"

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind,
                "nodes": self.nodes.tolist(),
                "weights": self.weights.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "QuadratureRule":
        d = json.loads(text)
        return cls(np.asarray(d["nodes"], float), np.asarray(d["weights"], float), d["kind"])


def _halton_ball(count: int, d: int) -> np.ndarray:
    """``count`` quasi-uniform points in the unit ``d``-ball (unscrambled Halton)."""
    from scipy.special import ndtri

    if d == 1:
        u = qmc.Halton(d=1, scramble=False).random(count + 1)[1:]
        return 2.0 * u - 1.0
    if d == 2:
        u = qmc.Halton(d=2, scramble=False).random(count + 1)[1:]
        phi = 2.0 * math.pi * u[:, 1]
        dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    else:
        u = qmc.Halton(d=d + 1, scramble=False).random(count + 1)[1:]
        g = ndtri(np.clip(u[:, 1:], 1e-12, 1 - 1e-12))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    radius = u[:, 0] ** (1.0 / d)
    return radius[:, None] * dirs


def _symmetric(points: np.ndarray) -> np.ndarray:
    # interleave p, -p so that ordered summation cancels pairwise to exactly zero
    out = np.empty((2 * len(points),) + points.shape[1:])
    out[0::2] = points
    out[1::2] = -points
    return out


def _disk_polar(m: int) -> np.ndarray:
    """Equal-area rings times equally spaced angles on the unit disk; ``m`` nodes, 8 | m."""
    choices = [a for a in range(8, m + 1, 8) if m % a == 0]
    n_ang = min(choices, key=lambda a: abs(a - math.sqrt(math.pi * m)))
    n_rad = m // n_ang
    r = np.sqrt((np.arange(n_rad) + 0.5) / n_rad)
    phi = 2.0 * math.pi * (np.arange(n_ang // 2) + 0.5) / n_ang
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    half = np.column_stack([(rr * np.cos(pp)).ravel(), (rr * np.sin(pp)).ravel()])
    return _symmetric(half)


def ball_quadrature(n: int, m: int) -> QuadratureRule:
    """Equal-weight symmetric rule on the flat ball ``{zeta_1 = 0, |zeta| <= 1}`` in R^n.

    For ``n = 2`` the flat ball is a segment and the rule is the composite
    midpoint rule; for ``n >= 3`` a Halton set mapped to the ``(n-1)``-ball and
    closed under ``zeta -> -zeta``.
    """
    if n < 2:
        raise GeometryError("n must be at least 2")
    if m < 2 or m % 2:
        raise GeometryError(f"node count must be even and >= 2, got {m}")
    d = n - 1
    if d == 1:
        t = (2.0 * np.arange(m // 2) + 1.0) / m
        flat = _symmetric(t[:, None])
    else:
        flat = _symmetric(_halton_ball(m // 2, d))
    nodes = np.column_stack([np.zeros(m), flat])
    return QuadratureRule(nodes, np.full(m, 1.0 / m), kind="flat")


def full_ball_quadrature(n: int, m: int) -> QuadratureRule:
    """Equal-weight symmetric rule on the full unit ball of R^n.

    In the plane the rule is a polar product (equal-area rings, angles offset by
    half a step), invariant under quarter turns and coordinate reflections, so
    it averages ``y1*y2`` and ``y1**2 - y2**2`` to zero exactly. In higher
    dimension: antipodally symmetrized Halton points.
    """
    if n < 1:
        raise GeometryError("n must be positive")
    if m < 2 or m % 2:
        raise GeometryError(f"node count must be even and >= 2, got {m}")
    if n == 2 and m % 8 == 0:
        nodes = _disk_polar(m)
    elif n == 1:
        nodes = _symmetric(((2.0 * np.arange(m // 2) + 1.0) / m)[:, None])
    else:
        nodes = _symmetric(_halton_ball(m // 2, n))
    return QuadratureRule(nodes, np.full(len(nodes), 1.0 / len(nodes)), kind="full")


def sphere_directions(n: int, m: int) -> np.ndarray:
    """Antipodally symmetric, quasi-uniform unit vectors (rows), ``m`` even."""
    if m < 2 or m % 2:
        raise GeometryError("direction count must be even and >= 2")
    if n == 1:
        return np.array([[1.0], [-1.0]])
    half = m // 2
    if n == 2:
        phi = 2.0 * math.pi * np.arange(half) / m
        return _symmetric(np.column_stack([np.cos(phi), np.sin(phi)]))
    if n == 3:
        # Fibonacci lattice on the upper hemisphere
        k = np.arange(half) + 0.5
        zc = 1.0 - k / half
        golden = math.pi * (3.0 - math.sqrt(5.0))
        phi = golden * np.arange(half)
        rxy = np.sqrt(1.0 - zc * zc)
        pts = np.column_stack([rxy * np.cos(phi), rxy * np.sin(phi), zc])
    else:
        from scipy.special import ndtri

        u = qmc.Halton(d=n, scramble=False).random(half + 1)[1:]
        g = ndtri(np.clip(u, 1e-12, 1 - 1e-12))
        pts = g / np.linalg.norm(g, axis=1, keepdims=True)
    return _symmetric(pts)


def sample_flat_ball(rng: np.random.Generator, n: int, size: int | None = None) -> np.ndarray:
    """Uniform samples on the flat ball ``{zeta_1 = 0, |zeta| <= 1}`` of R^n.

    Radius by inverse transform ``U**(1/(n-1))`` composed with a uniform
    direction on the ``(n-2)``-sphere.
    """
    d = n - 1
    shape = (1 if size is None else size, d)
    g = rng.standard_normal(shape)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(shape[0]) ** (1.0 / d)
    out = np.column_stack([np.zeros(shape[0]), r[:, None] * g])
    return out[0] if size is None else out


def sample_ball(rng: np.random.Generator, n: int, size: int | None = None) -> np.ndarray:
    """Uniform samples on the full unit ball of R^n."""
    shape = (1 if size is None else size, n)
    g = rng.standard_normal(shape)
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = rng.random(shape[0]) ** (1.0 / n)
    out = r[:, None] * g
    return out[0] if size is None else out


def random_unit(rng: np.random.Generator, n: int, size: int | None = None) -> np.ndarray:
    g = rng.standard_normal((1 if size is None else size, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[0] if size is None else g
