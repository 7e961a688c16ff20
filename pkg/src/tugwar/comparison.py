"""Comparison functions for the doubled game and numerical checks of their inequalities.

Notation: t = |x - z|, v = (x - z)/t, a = x - z, b = x + z.

    omega(t) = t - omega0 t**gamma      on [0, omega1], gamma = 1 + s
    f1(x, z) = C omega(t) + M |b|**2
    f2(x, z) = C**(2(N - i)) eps        on the annulus A_i, 0 beyond N eps/10
    f = f1 - f2

Since C**(2N) overflows for realistic constants, every f2 value is carried in
units of a reference level S_k = C**(2(N - k)) eps; the Case 1/2 checks use
k = N (S = eps) and the annular check uses the annulus index of (x, z).

Differences f(x + hx, z + hz) - f(x, z) are formed from exact increment
identities rather than by subtracting two large values, so second-order
margins stay accurate even when eps/t is tiny.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import binom

from .coefficients import FULLBALL, ORTHOGONAL, ExponentField, alpha_field
from .geometry import QuadratureRule, coupled_rotation, project, project_many, random_unit


DIAGONAL_SNAP = 1e-9
# alpha = 1 makes the G2 bound an equality; allow for rounding in the weighted sum
G2_RTOL = 1e-12


class PreconditionError(ValueError):
    """Configuration outside the regime an inequality is stated for."""


@dataclass(frozen=True)
class ComparisonParams:
    s: float
    omega0: float
    C: float
    M: float
    N: int
    r: float
    c_alpha: float
    alpha_min: float
    sup_u: float
    C_u: float | None = None
    delta: float | None = None

    @property
    def gamma(self) -> float:
        return 1.0 + self.s

    @property
    def omega1(self) -> float:
        return (1.0 / (2.0 * self.gamma * self.omega0)) ** (1.0 / self.s)

    @property
    def omega_offset(self) -> float:
        """Constant added to omega past omega1 so that C omega(r) > 2 sup_u."""
        w1 = self.omega1
        if self.r <= w1:
            return 0.0
        base = w1 - self.omega0 * w1 ** self.gamma + 0.5 * (self.r - w1)
        need = 2.0 * self.sup_u / self.C - base
        return 0.0 if need < 0 else need * (1 + 1e-9) + 1e-15

    @property
    def log_threshold_per_eps(self) -> float:
        """log(C**(2N)); the gap threshold is exp(this) * eps."""
        return 2.0 * self.N * math.log(self.C)

    def log_f2_peak(self, eps: float) -> float:
        return self.log_threshold_per_eps + math.log(eps)

    def constraint_values(self) -> dict[str, tuple[float, float]]:
        """name -> (value, lower bound); each constraint reads value > bound (or >= where noted).

        N stays an int so that the comparison with its float bound is exact.
        """
        a, cal, r, sup_u, M = self.alpha_min, self.c_alpha, self.r, self.sup_u, self.M
        cons = {
            "omega0>=1/2": (self.omega0, 0.5),
            "omega0>1/(2r^s)": (self.omega0, 1.0 / (2.0 * r ** self.s)),
            "omega0-concavity": (self.omega0, (cal + 2.0) / (3.0 * a * self.s * (1.0 + self.s))),
            "C-sup": (self.C, (16.0 * self.omega0) ** (1.0 / self.s) * sup_u),
            "C-case1": (self.C, 2.0 * (4.0 * M + 1.0)),
            "C-annulus-rough": (self.C, 8.0 * M * r + 1.0),
            "C-annulus-step": (a * self.C ** 2 - 2.0, 7.0 * self.C),
            "N>=40": (self.N, 40.0),
            "N-scale": (self.N, 2 ** 5.5 * 10.0 * self.C * self.omega0),
            "N-alpha": (self.N, 40.0 * (3.0 * cal + 1.0) / a),
            "M": (M, 2.0 * sup_u / (3.0 * r * r)),
        }
        if self.C_u is not None:
            cons["C-case2"] = (self.C, 8.0 * ((4.0 * M + 1.0) / (3.0 * cal + 1.0)
                                              + 12.0 * math.sqrt(M * self.C_u) / a))
        return cons

    def violations(self) -> list[str]:
        out = []
        for name, (val, bound) in self.constraint_values().items():
            if name in ("omega0>=1/2", "N>=40"):
                bad = val < bound
            elif name == "M":
                bad = not math.isclose(val, bound, rel_tol=1e-12)
            else:
                bad = not val > bound
            if bad:
                out.append(name)
        return out

    @property
    def admissible(self) -> bool:
        return not self.violations()

    def binding_constraints(self) -> dict[str, str]:
        """Which lower bound determined omega0 and C."""
        cons = self.constraint_values()
        om = max(("omega0>=1/2", "omega0>1/(2r^s)", "omega0-concavity"), key=lambda k: cons[k][1])
        c_names = ["C-sup", "C-case1", "C-annulus-rough"] + (["C-case2"] if "C-case2" in cons else [])
        c_bounds = {k: cons[k][1] for k in c_names}
        c_bounds["C-annulus-step"] = _step_root(self.alpha_min)
        return {"omega0": om, "C": max(c_bounds, key=c_bounds.get)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(gamma=self.gamma, omega1=self.omega1, omega_offset=self.omega_offset,
                 log_C2N=self.log_threshold_per_eps, violations=self.violations())
        return d


def _step_root(alpha_min: float) -> float:
    # larger root of alpha_min C^2 - 7C - 2 = 0
    return (7.0 + math.sqrt(49.0 + 8.0 * alpha_min)) / (2.0 * alpha_min)


def constants_recipe(s: float, c_alpha: float, alpha_min: float, r: float, sup_u: float,
                     C_u: float, delta: float | None = None, slack: float = 1.01) -> ComparisonParams:
    """Smallest admissible constants, each lower bound inflated by ``slack``."""
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    if c_alpha < 0 or alpha_min <= 0 or alpha_min > 1 or r <= 0 or sup_u <= 0 or C_u <= 0:
        raise ValueError("recipe inputs must be positive (c_alpha may be 0)")
    M = 2.0 * sup_u / (3.0 * r * r)
    omega0 = slack * max(0.5, 1.0 / (2.0 * r ** s), (c_alpha + 2.0) / (3.0 * alpha_min * s * (1.0 + s)))
    C = slack * max(
        (16.0 * omega0) ** (1.0 / s) * sup_u,
        2.0 * (4.0 * M + 1.0),
        8.0 * ((4.0 * M + 1.0) / (3.0 * c_alpha + 1.0) + 12.0 * math.sqrt(M * C_u) / alpha_min),
        8.0 * M * r + 1.0,
        _step_root(alpha_min),
    )
    n1 = 2 ** 5.5 * 10.0 * C * omega0
    n2 = 40.0 * (3.0 * c_alpha + 1.0) / alpha_min
    N = max(40, math.floor(max(n1, n2)) + 1)
    return ComparisonParams(s=s, omega0=omega0, C=C, M=M, N=N, r=r, c_alpha=c_alpha,
                            alpha_min=alpha_min, sup_u=sup_u, C_u=C_u,
                            delta=2.0 * s if delta is None else delta)


# --------------------------------------------------------------------------
# omega and f


def omega_eval(p: ComparisonParams, t):
    """(omega, omega', omega'') at t >= 0; linear with slope 1/2 past omega1."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("omega is defined for t >= 0")
    w1, g, w0 = p.omega1, p.gamma, p.omega0
    inside = t <= w1
    ti = np.where(inside, t, w1)
    val_in = ti - w0 * ti ** g
    d1_in = 1.0 - g * w0 * ti ** p.s
    with np.errstate(divide="ignore"):
        d2_in = np.where(ti > 0, -g * p.s * w0 * ti ** (p.s - 1.0), -np.inf)
    w_end = w1 - w0 * w1 ** g
    val = np.where(inside, val_in, w_end + 0.5 * (t - w1) + p.omega_offset)
    d1 = np.where(inside, d1_in, 0.5)
    d2 = np.where(inside, d2_in, 0.0)
    if val.ndim == 0:
        return float(val), float(d1), float(d2)
    return val, d1, d2


def annulus_index(t, eps: float, N: int):
    """Index i with t in ((i-1) eps/10, i eps/10]; 0 on the diagonal, N + 1 beyond the last annulus."""
    t = np.asarray(t, dtype=float)
    i = np.ceil(t * 10.0 / eps).astype(np.int64)
    i = np.where(t <= 0, 0, i)
    return np.minimum(i, N + 1)


def f2_units(p: ComparisonParams, t, eps: float, ref: int):
    """f2 / (C**(2(N - ref)) eps): equals C**(2(ref - i)), or 0 past N eps/10."""
    i = annulus_index(t, eps, p.N)
    expo = 2.0 * (ref - i)
    with np.errstate(over="ignore"):
        return np.where(i > p.N, 0.0, np.power(p.C, np.where(i > p.N, 0.0, expo)))


def f_eval(p: ComparisonParams, x, z, eps: float) -> tuple[float, float, float]:
    """(f, f1, f2) at a pair; f2 may be inf when C**(2N) eps overflows."""
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    t = float(np.linalg.norm(x - z))
    f1 = p.C * omega_eval(p, t)[0] + p.M * float(np.dot(x + z, x + z))
    i = int(annulus_index(t, eps, p.N))
    if i > p.N:
        f2 = 0.0
    else:
        lg = 2.0 * (p.N - i) * math.log(p.C) + math.log(eps)
        f2 = math.exp(lg) if lg < 709.0 else math.inf
    return f1 - f2, f1, f2


def _binom_rem(q: np.ndarray, g: float) -> np.ndarray:
    """(1 + q)**g - 1 - g q without cancellation."""
    q = np.asarray(q, float)
    small = np.abs(q) < 1e-2
    qs = np.where(small, q, 0.0)
    series = np.zeros_like(qs)
    term_pow = qs * qs
    for k in range(2, 14):
        series += binom(g, k) * term_pow
        term_pow = term_pow * qs
    ql = np.where(small, 0.0, np.maximum(q, -1.0))
    with np.errstate(divide="ignore"):
        direct = np.expm1(g * np.log1p(ql)) - g * ql
    return np.where(small, series, direct)


def _dist_increment(a: np.ndarray, d: np.ndarray):
    """(|a + d| - |a|, |a|, |a + d|) row-wise."""
    t = np.linalg.norm(a, axis=-1)
    t2 = np.linalg.norm(a + d, axis=-1)
    num = 2.0 * np.einsum("...i,...i->...", a, d) + np.einsum("...i,...i->...", d, d)
    den = t + t2
    with np.errstate(invalid="ignore", divide="ignore"):
        dt = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return dt, t, t2


def omega_increment(p: ComparisonParams, t, dt):
    """omega(t + dt) - omega(t), accurate when |dt| << t."""
    t = np.asarray(t, float)
    dt = np.maximum(np.asarray(dt, float), -t)  # the shifted distance cannot go below 0
    t2 = np.maximum(t + dt, 0.0)
    w1 = p.omega1
    inside = (t > 0) & (t <= w1) & (t2 <= w1)
    ts = np.where(inside, t, 1.0)
    q = np.where(inside, dt / ts, 0.0)
    d1 = 1.0 - p.gamma * p.omega0 * ts ** p.s
    fine = d1 * dt - p.omega0 * ts ** p.gamma * _binom_rem(q, p.gamma)
    coarse = omega_eval(p, t2)[0] - omega_eval(p, t)[0]
    return np.where(inside, fine, coarse)


def f1_increment(p: ComparisonParams, x, z, hx, hz):
    """f1(x + hx, z + hz) - f1(x, z) for displacement arrays hx, hz of shape (..., n)."""
    x, z, hx, hz = np.broadcast_arrays(*(np.asarray(v, float) for v in (x, z, hx, hz)))
    a = x - z
    b = x + z
    d = hx - hz
    ds = hx + hz
    dt, t, _ = _dist_increment(a, d)
    dm = 2.0 * np.einsum("...i,...i->...", b, ds) + np.einsum("...i,...i->...", ds, ds)
    return p.C * omega_increment(p, t, dt) + p.M * dm


# --------------------------------------------------------------------------
# F


@dataclass
class FTerms:
    """F - f split by branch; f1 parts are absolute, f2 parts in units S_ref."""

    weights: tuple[float, float, float]
    df1: tuple[float, float, float]
    f2u: tuple[float, float, float]
    f2u_here: float
    ref: int
    swapped: bool

    @property
    def dF1(self) -> float:
        w1, w2, w3 = self.weights
        return (w1 * self.df1[0] + w3 * self.df1[2]) + w2 * self.df1[1]

    @property
    def F2u(self) -> float:
        w1, w2, w3 = self.weights
        return (w1 * self.f2u[0] + w3 * self.f2u[2]) + w2 * self.f2u[1]

    def minus_f(self, p: ComparisonParams, eps: float) -> float:
        """F - f in absolute units (may overflow to +-inf near the diagonal)."""
        scale = math.exp(2.0 * (p.N - self.ref) * math.log(p.C) + math.log(eps))
        return self.dF1 - scale * (self.F2u - self.f2u_here)

    def to_dict(self) -> dict:
        return {"weights": list(self.weights), "df1": list(self.df1), "f2_units": list(self.f2u),
                "f2_units_here": self.f2u_here, "ref_annulus": self.ref, "swapped": self.swapped,
                "dF1": self.dF1, "F2_units": self.F2u}


def _weights(ax: float, az: float) -> tuple[float, float, float]:
    w1, w3 = az, ax - az
    return w1, 1.0 - (w1 + w3), w3


def _branch_displacements(nu_x, nu_z, eps, variant, quad: QuadratureRule):
    """Displacement arrays (hx, hz) for the three branches; rows are quadrature nodes."""
    nu_x = np.asarray(nu_x, float)
    nu_z = np.asarray(nu_z, float)
    zeta = quad.nodes
    if variant == FULLBALL:
        if quad.kind != "full":
            raise ValueError("fullball F needs a full-ball quadrature rule")
        common = (eps * zeta, eps * zeta)
        dn = (np.broadcast_to(eps * nu_x, zeta.shape), eps * zeta)
    else:
        if quad.kind != "flat":
            raise ValueError("orthogonal F needs a flat-ball quadrature rule")
        cr = coupled_rotation(nu_x, nu_z)
        px, pz = cr.apply(zeta)
        common = (eps * px, eps * pz)
        dn = (np.broadcast_to(eps * nu_x, zeta.shape), eps * pz)
    det = (eps * nu_x[None], eps * nu_z[None])
    return det, common, dn


def _avg(w: np.ndarray, vals: np.ndarray) -> float:
    return float(np.dot(w, vals) / w.sum())


def F_terms(p: ComparisonParams, x, z, nu_x, nu_z, eps: float, alphas, variant: str,
            quad: QuadratureRule, ref: int | None = None) -> FTerms:
    """Branch-wise increments of the coupled average F of the comparison function."""
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    ax, az = (float(a) for a in alphas)
    swapped = ax < az
    if swapped:
        x, z, nu_x, nu_z, ax, az = z, x, nu_z, nu_x, az, ax
    ref = p.N if ref is None else ref
    det, common, dn = _branch_displacements(nu_x, nu_z, eps, variant, quad)
    qw = quad.weights
    a = x - z
    df1, f2u = [], []
    for k, (hx, hz) in enumerate((det, common, dn)):
        inc = f1_increment(p, x, z, hx, hz)
        t_new = np.linalg.norm(a + hx - hz, axis=-1)
        f2n = f2_units(p, t_new, eps, ref)
        if k == 0:
            df1.append(float(inc[0]))
            f2u.append(float(f2n[0]))
        else:
            df1.append(_avg(qw, inc))
            f2u.append(_avg(qw, f2n))
    here = float(f2_units(p, np.linalg.norm(a), eps, ref))
    return FTerms(_weights(ax, az), tuple(df1), tuple(f2u), here, ref, swapped)


def F_generic(f, x, z, nu_x, nu_z, eps: float, alphas, variant: str, quad: QuadratureRule) -> float:
    """F for an arbitrary pair function f(X, Z) evaluated row-wise."""
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    ax, az = (float(a) for a in alphas)
    if ax < az:
        x, z, nu_x, nu_z, ax, az = z, x, nu_z, nu_x, az, ax
    det, common, dn = _branch_displacements(nu_x, nu_z, eps, variant, quad)
    qw = quad.weights
    t1 = float(np.asarray(f(x + det[0], z + det[1]))[0])
    t2 = _avg(qw, np.asarray(f(x + common[0], z + common[1]), float))
    t3 = _avg(qw, np.asarray(f(x + dn[0], z + dn[1]), float))
    w1, w2, w3 = _weights(ax, az)
    return (w1 * t1 + w3 * t3) + w2 * t2


def F_eval(p: ComparisonParams, x, z, nu_x, nu_z, eps: float, alphas, variant: str,
           quad: QuadratureRule) -> float:
    """F for the comparison function itself (f1 - f2 with absolute f2)."""

    def f(X, Z):
        t = np.linalg.norm(X - Z, axis=-1)
        f1 = p.C * omega_eval(p, t)[0] + p.M * np.sum((X + Z) ** 2, axis=-1)
        return f1 - f2_units(p, t, eps, p.N) * eps

    return F_generic(f, x, z, nu_x, nu_z, eps, alphas, variant, quad)


# --------------------------------------------------------------------------
# Taylor bound


@dataclass
class TaylorCheck:
    lhs: float
    rhs: float
    margin: float
    ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


def taylor_margins(p: ComparisonParams, X, Z, HX, HZ, eps: float):
    """Vectorized (lhs, rhs, margin = rhs - lhs) of the second-order bound for f1.

    Both sides are formed relative to their common first-order part, so the
    margin keeps full relative accuracy.
    """
    X, Z, HX, HZ = (np.atleast_2d(np.asarray(v, float)) for v in (X, Z, HX, HZ))
    a = X - Z
    b = X + Z
    d = HX - HZ
    ds = HX + HZ
    t = np.linalg.norm(a, axis=1)
    lo = p.N * eps / 10.0
    hn = np.maximum(np.linalg.norm(HX, axis=1), np.linalg.norm(HZ, axis=1))
    if np.any(t <= lo) or np.any(t > p.omega1) or np.any(hn > eps * (1 + 1e-12)):
        raise PreconditionError("need N eps/10 < |x-z| <= omega1 and |h| <= eps")
    dt, _, t2 = _dist_increment(a, d)
    if np.any(t2 > p.omega1):
        raise PreconditionError("shifted pair leaves [0, omega1]")
    v = a / t[:, None]
    dv = np.einsum("ij,ij->i", d, v)
    dperp2 = np.maximum(np.einsum("ij,ij->i", d, d) - dv * dv, 0.0)
    _, w1, w2 = omega_eval(p, t)
    first = p.C * w1 * dv + 2.0 * p.M * np.einsum("ij,ij->i", b, ds)
    # exact: dt - dv = (|d|^2 - dv dt) / (|a+d| + |a|)
    dt_minus_dv = (np.einsum("ij,ij->i", d, d) - dv * dt) / (t + t2)
    lhs_rest = (p.C * w1 * dt_minus_dv
                - p.C * p.omega0 * t ** p.gamma * _binom_rem(dt / t, p.gamma)
                + p.M * np.einsum("ij,ij->i", ds, ds))
    rhs_rest = (0.5 * p.C * w2 * dv * dv + 0.5 * p.C * (w1 / t) * dperp2
                + (4.0 * p.M + 1.0) * t ** (p.gamma - 2.0) * eps * eps)
    return first + lhs_rest, first + rhs_rest, rhs_rest - lhs_rest


def taylor_bound_check(p: ComparisonParams, x, z, h_x, h_z, eps: float, tol: float = 1e-10) -> TaylorCheck:
    lhs, rhs, margin = (float(v[0]) for v in taylor_margins(p, x, z, h_x, h_z, eps))
    return TaylorCheck(lhs, rhs, margin, bool(margin >= -tol))


# --------------------------------------------------------------------------
# Case checks


def _v_of(x, z):
    a = np.asarray(x, float) - np.asarray(z, float)
    t = float(np.linalg.norm(a))
    if t == 0:
        raise PreconditionError("x = z")
    return a / t, t


def _far_regime(p: ComparisonParams, t: float, eps: float):
    if not (p.N * eps / 10.0 < t <= p.omega1):
        raise PreconditionError(f"need N eps/10 < |x-z| <= omega1, got |x-z|={t:.3e}")


@dataclass
class CaseReport:
    case: str
    lhs: float
    ok: bool
    theta: float
    dV2: float
    terms: dict = field(default_factory=dict)
    bound: float | None = None
    in_regime: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _pair_sum(p, x, z, first, second, eps, alphas, variant, quad):
    ta = F_terms(p, x, z, *first, eps, alphas, variant, quad)
    tb = F_terms(p, x, z, *second, eps, alphas, variant, quad)
    # ref = N, S = eps; f2 at (x, z) is 0 in the far regime
    lhs = (ta.dF1 + tb.dF1) - eps * ((ta.F2u - ta.f2u_here) + (tb.F2u - tb.f2u_here))
    return lhs, {"opponent": ta.to_dict(), "response": tb.to_dict()}


def case1_verify(p: ComparisonParams, x, z, nu_x, nu_z, eps: float, alphas, variant: str,
                 quad: QuadratureRule) -> CaseReport:
    """F(nu) + F(-nu) - 2f < 0 when the opponent pulls nearly straight apart."""
    v, t = _v_of(x, z)
    _far_regime(p, t, eps)
    nu_x = np.asarray(nu_x, float)
    nu_z = np.asarray(nu_z, float)
    theta = t ** p.s
    dv = project(nu_x - nu_z, v).h_v
    if dv * dv < 4.0 - theta - 1e-12:
        raise PreconditionError("not a Case 1 move: (nu_x - nu_z)_V^2 < 4 - Theta")
    lhs, terms = _pair_sum(p, x, z, (nu_x, nu_z), (-nu_x, -nu_z), eps, alphas, variant, quad)
    return CaseReport("case1", lhs, bool(lhs < 0), theta, dv * dv, terms)


def case2_bound(p: ComparisonParams, t: float, eps: float) -> float:
    if p.C_u is None:
        raise PreconditionError("Case 2 needs the Hölder data C_u of u")
    delta = 2.0 * p.s if p.delta is None else p.delta
    return (6.0 * math.sqrt(p.M * p.C_u) * t ** (delta / 2.0)
            + 0.5 * p.alpha_min * ((4.0 * p.M + 1.0) / (3.0 * p.c_alpha + 1.0) - p.C / 8.0) * t ** p.s) * eps


def case2_regime_radius(p: ComparisonParams, t: float) -> float:
    delta = 2.0 * p.s if p.delta is None else p.delta
    return 1.5 * math.sqrt(p.C_u / p.M) * t ** (delta / 2.0)


def case2_verify(p: ComparisonParams, x, z, nu_x, nu_z, eps: float, alphas, variant: str,
                 quad: QuadratureRule) -> CaseReport:
    """F(nu) + F(-v, v) - 2f below the analytic bound, which is negative in the regime."""
    v, t = _v_of(x, z)
    _far_regime(p, t, eps)
    nu_x = np.asarray(nu_x, float)
    nu_z = np.asarray(nu_z, float)
    theta = t ** p.s
    dv = project(nu_x - nu_z, v).h_v
    if dv * dv > 4.0 - theta + 1e-12:
        raise PreconditionError("not a Case 2 move: (nu_x - nu_z)_V^2 > 4 - Theta")
    lhs, terms = _pair_sum(p, x, z, (nu_x, nu_z), (-v, v), eps, alphas, variant, quad)
    bound = case2_bound(p, t, eps)
    b = np.asarray(x, float) + np.asarray(z, float)
    in_regime = bool(np.linalg.norm(b) <= case2_regime_radius(p, t))
    ok = bool(lhs < bound + 1e-10 and (bound < 0 or not in_regime))
    return CaseReport("case2", lhs, ok, theta, dv * dv, terms, bound, in_regime)


# --------------------------------------------------------------------------
# Annular chain


@dataclass
class AnnularReport:
    """Per-annulus chain of the near-diagonal argument (arrays over the family)."""

    index: np.ndarray
    g1_bound: np.ndarray       # upper bound of sup G1 - f1 over all moves
    g1_response: np.ndarray    # G1(response) - f1
    g2_units: np.ndarray       # G2(response) / S_i
    final_units: np.ndarray    # [sup F + inf F - 2f + C eps] / S_i, upper bound
    ok_g1: np.ndarray
    ok_g2: np.ndarray
    ok_final: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(self.ok_g1.all() and self.ok_g2.all() and self.ok_final.all())

    def failures(self) -> dict:
        return {
            "g1": self.index[~self.ok_g1].tolist()[:20],
            "g2": self.index[~self.ok_g2].tolist()[:20],
            "final": self.index[~self.ok_final].tolist()[:20],
        }

    def summary(self) -> dict:
        return {
            "annuli": int(len(self.index)),
            "ok": self.ok,
            "max_g1_bound_over_3Ceps": float(self.g1_bound.max() / 1.0),
            "min_g2_units": float(self.g2_units.min()),
            "max_final_units": float(self.final_units.max()),
            "failures": self.failures(),
        }


def response_into_previous_annulus(t: float, eps: float, w=None, v=None):
    """Unit pair moving (x, z) from A_i to the midpoint of A_{i-1} (the diagonal when i = 1).

    With v the unit separation, x moves by -a v + b w and z by a v + b w, so the
    separation shrinks by exactly 2 a eps.
    """
    i = int(math.ceil(t * 10.0 / eps))
    if i < 1:
        raise PreconditionError("already on the diagonal")
    target = 0.0 if i == 1 else (i - 1.5) * eps / 10.0
    a = (t - target) / (2.0 * eps)
    if not 0 <= a <= 1:
        raise PreconditionError("cannot reach the previous annulus in one step")
    bb = math.sqrt(max(0.0, 1.0 - a * a))
    v = np.array([1.0, 0.0]) if v is None else np.asarray(v, float)
    w = np.array([0.0, 1.0]) if w is None else np.asarray(w, float)
    return -a * v + bb * w, a * v + bb * w


def annular_verify(p: ComparisonParams, eps: float, field_: ExponentField, variant: str,
                   quad: QuadratureRule, center=None, indices=None, chunk: int = 20000) -> AnnularReport:
    """Check the near-diagonal chain on the family x, z = c +- (t_i/2) e1, t_i the midpoint of A_i.

    Links per annulus i >= 1, all in units S_i = C**(2(N-i)) eps where f2 is involved:
      1. sup over all moves of G1 - f1 <= C(omega(t+2eps) - omega(t)) + M(4|b|eps + 4eps^2) <= 3 C eps;
      2. G2 at the response >= alpha_min C^2 S_i;
      3. (sup F - f) + (F(response) - f) + C eps < 0, using sup G1 from link 1 and inf G2 >= 0.
    """
    n = field_.n
    if n != 2:
        raise ValueError("the synthetic annular family is planar (n = 2)")
    c = np.zeros(n) if center is None else np.asarray(center, float)
    idx = np.arange(1, p.N + 1) if indices is None else np.asarray(indices, dtype=np.int64)
    if np.any(idx < 1) or np.any(idx > p.N):
        raise PreconditionError("annulus indices must lie in 1..N")
    e1, e2 = np.eye(2)
    lnC = math.log(p.C)
    out = {k: [] for k in ("g1b", "g1r", "g2", "fin")}

    # only two response geometries: i = 1 (to the diagonal) and i >= 2 (one annulus inward)
    moves = {}
    for key, t_probe in (("first", 0.5 * eps / 10.0), ("rest", 1.5 * eps / 10.0)):
        nx, nz = response_into_previous_annulus(t_probe, eps, e2, e1)
        for sw in (False, True):
            a_nx, a_nz = (nz, nx) if sw else (nx, nz)
            det, common, dn = _branch_displacements(a_nx, a_nz, eps, variant, quad)
            moves[key, sw] = (det, common, dn)

    for start in range(0, len(idx), chunk):
        ii = idx[start:start + chunk]
        t = (ii - 0.5) * eps / 10.0
        X = c + 0.5 * t[:, None] * e1
        Z = c - 0.5 * t[:, None] * e1
        al = alpha_field(field_, np.concatenate([X, Z]), variant)
        ax, az = al[: len(ii)], al[len(ii):]
        sw = ax < az
        hi, lo = np.maximum(ax, az), np.minimum(ax, az)
        w1, w3 = lo, hi - lo
        w2 = 1.0 - (w1 + w3)
        b = X + Z
        bn = np.linalg.norm(b, axis=1)
        g1b = p.C * (omega_eval(p, t + 2 * eps)[0] - omega_eval(p, t)[0]) + p.M * (4 * bn * eps + 4 * eps * eps)

        g1r = np.empty(len(ii))
        g2 = np.empty(len(ii))
        for key in ("first", "rest"):
            sel_k = (ii == 1) if key == "first" else (ii >= 2)
            for s_flag in (False, True):
                sel = sel_k & (sw == s_flag)
                if not sel.any():
                    continue
                det, common, dn = moves[key, s_flag]
                # labels: if swapped, the roles of x and z exchange; geometry is the reflected one
                Xs, Zs = (Z[sel], X[sel]) if s_flag else (X[sel], Z[sel])
                parts1, parts2 = [], []
                for hx, hz in (det, common, dn):
                    inc = f1_increment(p, Xs[:, None, :], Zs[:, None, :], hx[None], hz[None])
                    t_new = np.linalg.norm((Xs - Zs)[:, None, :] + hx[None] - hz[None], axis=-1)
                    # the i = 1 response lands both tokens on one point; drop round-off
                    t_new = np.where(t_new < DIAGONAL_SNAP * eps, 0.0, t_new)
                    j = annulus_index(t_new, eps, p.N)
                    f2u = np.where(j > p.N, 0.0, np.power(p.C, 2.0 * (ii[sel][:, None] - j)))
                    parts1.append(inc)
                    parts2.append(f2u)
                qw = quad.weights / quad.weights.sum()
                d1 = (w1[sel] * parts1[0][:, 0] + w3[sel] * (parts1[2] @ qw)) + w2[sel] * (parts1[1] @ qw)
                d2 = (w1[sel] * parts2[0][:, 0] + w3[sel] * (parts2[2] @ qw)) + w2[sel] * (parts2[1] @ qw)
                g1r[sel] = d1
                g2[sel] = d2
        S_log = 2.0 * (p.N - ii) * lnC + math.log(eps)
        with np.errstate(under="ignore"):
            fin = (g1b + g1r + p.C * eps) * np.exp(-S_log) + 2.0 - g2
        out["g1b"].append(g1b)
        out["g1r"].append(g1r)
        out["g2"].append(g2)
        out["fin"].append(fin)

    g1b = np.concatenate(out["g1b"])
    g1r = np.concatenate(out["g1r"])
    g2 = np.concatenate(out["g2"])
    fin = np.concatenate(out["fin"])
    three_c_eps = 3.0 * p.C * eps
    return AnnularReport(
        index=idx, g1_bound=g1b / three_c_eps, g1_response=g1r, g2_units=g2, final_units=fin,
        ok_g1=(g1b <= three_c_eps) & (g1r <= three_c_eps),
        ok_g2=g2 >= p.alpha_min * p.C ** 2 * (1.0 - G2_RTOL),
        ok_final=fin < 0,
    )


# --------------------------------------------------------------------------
# Sampling admissible configurations


def sample_far_pairs(p: ComparisonParams, rng: np.random.Generator, n: int, count: int,
                     center=None, b_radius: float | None = None, reach: int = 2):
    """Random (x, z, eps) with N eps/10 < |x-z| <= omega1 - reach*eps.

    eps is drawn log-uniformly so that N eps/10 spans three decades below
    omega1; the midpoint (x+z)/2 lies within ``b_radius`` of ``center``.
    """
    c = np.zeros(n) if center is None else np.asarray(center, float)
    b_radius = p.r if b_radius is None else b_radius
    w1 = p.omega1
    u = 10 ** rng.uniform(-3.0, -0.05, size=count)
    eps = 10.0 * w1 * u / p.N
    lo = p.N * eps / 10.0
    hi = w1 - reach * eps
    t = lo + (hi - lo) * rng.uniform(1e-6, 1.0, size=count)
    v = random_unit(rng, n, count)
    mid = c + b_radius * random_unit(rng, n, count) * rng.uniform(0, 1, size=(count, 1)) ** (1.0 / n)
    X = mid + 0.5 * t[:, None] * v
    Z = mid - 0.5 * t[:, None] * v
    return X, Z, eps


# --------------------------------------------------------------------------
# Recipe from an exponent field, and a seeded verification suite


def recipe_from_field(field_: ExponentField, variant: str, r: float, sup_u: float, C_u: float,
                      diameter: float = 2.0) -> ComparisonParams:
    """Recipe constants with s, c_alpha and alpha_min read off the exponent field.

    s is the field's Hölder exponent when below 1, else 1/2; a Lipschitz field
    is then Hölder-1/2 with constant c * diameter**(1/2).
    """
    from .coefficients import alpha_holder_constant, alpha_min

    s = field_.s if field_.s < 1.0 else 0.5
    c_alpha = alpha_holder_constant(field_, variant) * diameter ** (field_.s - s)
    return constants_recipe(s, c_alpha, alpha_min(field_, variant), r, sup_u, C_u)


def _case1_moves(rng, v, theta, n, max_tries=200):
    sigma = math.sqrt(theta)
    for _ in range(max_tries):
        nx = v + sigma * rng.standard_normal(n)
        nz = -v + sigma * rng.standard_normal(n)
        nx /= np.linalg.norm(nx)
        nz /= np.linalg.norm(nz)
        dv = float(np.dot(nx - nz, v))
        if dv * dv >= 4.0 - theta:
            return nx, nz
    return v.copy(), -v.copy()


def _case2_moves(rng, v, theta, n):
    while True:
        nx, nz = random_unit(rng, n, 2)
        dv = float(np.dot(nx - nz, v))
        if dv * dv <= 4.0 - theta:
            return nx, nz


def verify_suite(p: ComparisonParams, field_: ExponentField, variant: str, quad: QuadratureRule,
                 checks=("taylor", "case1", "case2", "annular"), samples: int = 1000, seed: int = 0,
                 annuli="all", center=None) -> dict:
    """Run the selected checks on seeded random admissible configurations."""
    n = field_.n
    c = np.zeros(n) if center is None else np.asarray(center, float)
    ss = np.random.SeedSequence(seed)
    streams = dict(zip(("taylor", "case1", "case2", "annular"), ss.spawn(4)))
    out = {}
    if "taylor" in checks:
        rng = np.random.default_rng(streams["taylor"])
        X, Z, eps = sample_far_pairs(p, rng, n, samples, c)
        rad = lambda: random_unit(rng, n, samples) * (eps * rng.uniform(0, 1, samples) ** (1.0 / n))[:, None]
        lhs, rhs, margin = taylor_margins(p, X, Z, rad(), rad(), eps)
        bad = margin < -1e-10
        out["taylor"] = {"count": samples, "violations": int(bad.sum()), "min_margin": float(margin.min()),
                         "ok": not bad.any()}
    for name in ("case1", "case2"):
        if name not in checks:
            continue
        rng = np.random.default_rng(streams[name])
        X, Z, eps = sample_far_pairs(p, rng, n, samples, c)
        worst, fails, outside, first_fail = -math.inf, 0, 0, None
        for x, z, e in zip(X, Z, eps):
            a = x - z
            t = float(np.linalg.norm(a))
            v = a / t
            theta = t ** p.s
            if name == "case1":
                nx, nz = _case1_moves(rng, v, theta, n)
                al = alpha_field(field_, np.stack([x, z]), variant)
                rep = case1_verify(p, x, z, nx, nz, e, al, variant, quad)
                score = rep.lhs / (p.C * e * e / t)
            else:
                rad = case2_regime_radius(p, t)
                mid = c + rad * random_unit(rng, n) * rng.uniform() ** (1.0 / n)
                x, z = mid + a / 2, mid - a / 2
                nx, nz = _case2_moves(rng, v, theta, n)
                al = alpha_field(field_, np.stack([x, z]), variant)
                rep = case2_verify(p, x, z, nx, nz, e, al, variant, quad)
                score = (rep.lhs - rep.bound) / (p.C * e * t ** p.s)
                outside += not rep.in_regime
            worst = max(worst, score)
            if not rep.ok:
                fails += 1
                if first_fail is None:
                    first_fail = {"x": x.tolist(), "z": z.tolist(), "eps": float(e), "report": rep.to_dict()}
        out[name] = {"count": samples, "violations": fails, "worst_scaled": worst, "ok": fails == 0,
                     "first_failure": first_fail}
        if name == "case2":
            out[name]["outside_regime"] = outside
    if "annular" in checks:
        if annuli == "all":
            idx = None
        else:
            idx = np.unique(np.linspace(1, p.N, int(annuli)).round().astype(np.int64))
        eps = 0.1 * 10.0 * p.omega1 / p.N
        rep = annular_verify(p, eps, field_, variant, quad, center=c, indices=idx)
        out["annular"] = {"epsilon": eps, **rep.summary()}
    out["ok"] = all(v["ok"] for v in out.values() if isinstance(v, dict))
    return out
