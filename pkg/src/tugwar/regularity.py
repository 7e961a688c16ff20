"""Empirical regularity of solved fields: Lipschitz quotients across scales and the comparison gap."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .comparison import ComparisonParams, annulus_index, omega_eval
from .dpp import GridField, INTERIOR, Problem, solve_fixed_point


class RegionError(ValueError):
    pass


@dataclass
class ModulusReport:
    epsilon: float
    pair_count: int
    L_eps: float
    argmax: list
    delta_fit: float
    C_fit: float
    C_u: float
    delta_used: float
    converged: bool = True
    iterations: int | None = None
    gap: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _check_region(u: GridField, center: np.ndarray, r: float):
    dom = u.domain
    if dom is None:
        return
    lo, hi = dom.bounds
    if dom.kind == "box":
        inside = np.all(center - 2 * r > lo) and np.all(center + 2 * r < hi)
    else:
        inside = np.linalg.norm(center - dom.center) + 2 * r < float(np.min(dom.size))
    if not inside:
        raise RegionError("B_2r(center) must lie inside the domain")


def _nodes_in_ball(u: GridField, center, r):
    pts = u.coords().reshape(-1, u.n)
    vals = u.values.reshape(-1)
    reg = u.region.reshape(-1)
    keep = (np.linalg.norm(pts - center, axis=1) < r) & (reg == INTERIOR)
    return pts[keep], vals[keep]


def _neighbour_pairs(u: GridField, center, r):
    """All axis-neighbour lattice pairs with both nodes in B_r(center)."""
    shape = u.values.shape
    coords = u.coords()
    inside = (np.linalg.norm(coords - center, axis=-1) < r) & (u.region == INTERIOR)
    xs, zs, dx, dz = [], [], [], []
    for ax in range(u.n):
        a = [slice(None)] * u.n
        b = [slice(None)] * u.n
        a[ax] = slice(0, shape[ax] - 1)
        b[ax] = slice(1, shape[ax])
        both = inside[tuple(a)] & inside[tuple(b)]
        xs.append(coords[tuple(a)][both])
        zs.append(coords[tuple(b)][both])
        dx.append(u.values[tuple(a)][both])
        dz.append(u.values[tuple(b)][both])
    return np.concatenate(xs), np.concatenate(zs), np.concatenate(dx), np.concatenate(dz)


def modulus_pairs(u: GridField, center, r: float, pairs: int, rng: np.random.Generator):
    """Random pairs in B_r(center) plus every neighbour lattice pair: (X, Z, uX, uZ)."""
    center = np.asarray(center, float)
    _check_region(u, center, r)
    n = u.n
    g = rng.standard_normal((2 * pairs, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = r * rng.uniform(0, 1, size=(2 * pairs, 1)) ** (1.0 / n)
    P = center + g * rad
    X, Z = P[:pairs], P[pairs:]
    uX, uZ = u.interpolate(X), u.interpolate(Z)
    nx, nz, nux, nuz = _neighbour_pairs(u, center, r)
    return (np.concatenate([X, nx]), np.concatenate([Z, nz]),
            np.concatenate([uX, nux]), np.concatenate([uZ, nuz]))


def _holder_fit(dist, du, eps, delta_used):
    keep = (dist > 0) & (du > 0)
    if keep.sum() < 2 or np.ptp(np.log(dist[keep])) == 0:
        delta_fit = delta_used
    else:
        delta_fit = float(np.polyfit(np.log(dist[keep]), np.log(du[keep]), 1)[0])
    c_fit = float(np.max(du[keep] / dist[keep] ** delta_fit)) if keep.any() else 0.0
    c_u = float(np.max(du / (dist ** delta_used + eps ** delta_used))) if len(du) else 0.0
    return delta_fit, c_fit, c_u


def lipschitz_modulus(u: GridField, center, r: float, epsilon: float | None = None,
                      pairs: int = 2000, seed: int = 0, delta: float = 1.0) -> ModulusReport:
    """L_eps = max |u(x) - u(z)| / (|x - z| + eps) over pairs in B_r(center).

    Also fits |u(x) - u(z)| ~ C |x - z|**delta_fit and reports
    C_u = max |u(x) - u(z)| / (|x - z|**delta + eps**delta) for the given delta.
    """
    if pairs < 1000:
        raise ValueError("need at least 1000 random pairs")
    eps = u.epsilon if epsilon is None else epsilon
    rng = np.random.default_rng(seed)
    X, Z, uX, uZ = modulus_pairs(u, center, r, pairs, rng)
    dist = np.linalg.norm(X - Z, axis=1)
    du = np.abs(uX - uZ)
    q = du / (dist + eps)
    k = int(np.argmax(q))
    delta_fit, c_fit, c_u = _holder_fit(dist, du, eps, delta)
    return ModulusReport(
        epsilon=eps, pair_count=len(q), L_eps=float(q[k]), argmax=[X[k].tolist(), Z[k].tolist()],
        delta_fit=delta_fit, C_fit=c_fit, C_u=c_u, delta_used=delta,
        converged=bool(u.meta.get("converged", True)), iterations=u.meta.get("iterations"),
        meta={"center": np.asarray(center, float).tolist(), "r": r, "seed": seed},
    )


def scatter_rows(u: GridField, center, r: float, pairs: int = 2000, seed: int = 0):
    rng = np.random.default_rng(seed)
    X, Z, uX, uZ = modulus_pairs(u, center, r, pairs, rng)
    return np.linalg.norm(X - Z, axis=1), np.abs(uX - uZ)


def write_scatter_csv(path, dist, du) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distance", "abs_difference"])
        for d, v in zip(dist, du):
            w.writerow([repr(float(d)), repr(float(v))])


# --------------------------------------------------------------------------


@dataclass
class SweepResult:
    reports: list
    ratios: list

    def table(self) -> list[dict]:
        rows = []
        for k, rep in enumerate(self.reports):
            rows.append({
                "epsilon": rep.epsilon,
                "L_eps": rep.L_eps,
                "ratio_to_previous": None if k == 0 else self.ratios[k - 1],
                "converged": rep.converged,
                "iterations": rep.iterations,
            })
        return rows

    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else math.nan


def scale_sweep(problem: Problem, eps_list, center, r: float, pairs: int = 2000, seed: int = 0,
                h_factor: float = 0.5, delta: float = 1.0, solve_kwargs: dict | None = None,
                keep_fields: bool = False):
    """Solve at each eps (grid h = h_factor eps) and measure; ratios L(eps_k+1)/L(eps_k)."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    reports, fields = [], []
    for eps in eps_list:
        dom = dataclasses.replace(problem.domain, epsilon=eps)
        prob = dataclasses.replace(problem, domain=dom, h=h_factor * eps)
        res = solve_fixed_point(prob, **(solve_kwargs or {}))
        rep = lipschitz_modulus(res.field, center, r, eps, pairs, seed, delta)
        rep.converged = res.converged
        rep.iterations = res.iterations
        reports.append(rep)
        if keep_fields:
            fields.append(res.field)
    ratios = [b.L_eps / a.L_eps if a.L_eps > 0 else math.nan for a, b in zip(reports, reports[1:])]
    out = SweepResult(reports, ratios)
    return (out, fields) if keep_fields else out


# --------------------------------------------------------------------------


@dataclass
class GapReport:
    """K = sup (u(x) - u(z) - f(x, z)) against the threshold T = C**(2N) eps.

    T typically overflows, so K is carried as T + excess with log10 T kept
    separately; pass iff excess <= 0.
    """

    excess: float
    log10_threshold: float
    witness: list
    witness_annulus: int
    pairs: int
    passed: bool

    @property
    def K(self) -> float:
        lt = self.log10_threshold * math.log(10)
        return math.inf if lt > 709 else math.exp(lt) + self.excess

    def to_dict(self) -> dict:
        d = asdict(self)
        k = self.K
        d["K"] = k if math.isfinite(k) else None
        return d


def _excess_rows(p: ComparisonParams, eps, X, Z, uX, uZ, logT):
    """u(x) - u(z) - f(x, z) - T for each pair, without forming T or f2 directly."""
    a = X - Z
    t = np.linalg.norm(a, axis=1)
    f1 = p.C * omega_eval(p, t)[0] + p.M * np.sum((X + Z) ** 2, axis=1)
    i = annulus_index(t, eps, p.N)
    base = uX - uZ - f1
    lnC = math.log(p.C)
    # f2 - T = T (C^{-2i} - 1) inside the annuli, -T outside
    with np.errstate(over="ignore", under="ignore"):
        if logT < 700:
            T = math.exp(logT)
            f2_minus_T = np.where(i > p.N, -T, T * np.expm1(-2.0 * np.minimum(i, p.N) * lnC))
        else:
            f2_minus_T = np.where(i == 0, 0.0, -np.inf)
    return base + f2_minus_T, i


def gap_K(u: GridField, params: ComparisonParams, center, r: float, max_nodes: int = 3000,
          seed: int = 0, chunk: int = 2_000_000) -> GapReport:
    """Counter-assumption gap over all lattice pairs in B_r(center) (subsampled above max_nodes)."""
    center = np.asarray(center, float)
    eps = u.epsilon
    pts, vals = _nodes_in_ball(u, center, r)
    if len(pts) == 0:
        raise RegionError("no lattice nodes in the region")
    if len(pts) > max_nodes:
        sel = np.random.default_rng(seed).choice(len(pts), max_nodes, replace=False)
        pts, vals = pts[sel], vals[sel]
    logT = params.log_threshold_per_eps + math.log(eps)
    best, wit, wit_i = -math.inf, None, -1
    m = len(pts)
    rows_per = max(1, chunk // m)
    for s0 in range(0, m, rows_per):
        xi = np.arange(s0, min(m, s0 + rows_per))
        I = np.repeat(xi, m)
        J = np.tile(np.arange(m), len(xi))
        ex, ann = _excess_rows(params, eps, pts[I], pts[J], vals[I], vals[J], logT)
        k = int(np.argmax(ex))
        if ex[k] > best:
            best, wit, wit_i = float(ex[k]), [pts[I[k]].tolist(), pts[J[k]].tolist()], int(ann[k])
    return GapReport(best, logT / math.log(10), wit, wit_i, m * m, bool(best <= 0.0))
