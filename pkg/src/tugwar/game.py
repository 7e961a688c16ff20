"""Monte Carlo tug-of-war: the single-token game and the coupled two-token game.

In the coupled game the mover's pair of directions (nu_x, nu_z) is applied
through three branches, labelled so that alpha(x) >= alpha(z):

* ``det-det`` with probability alpha(z): both tokens step deterministically;
* ``common-noise`` with probability beta(x): one draw zeta moves both tokens
  through the coupled rotations P_x, P_z;
* ``det-noise`` with probability alpha(x) - alpha(z): x steps
  deterministically and z takes noise.

Each token's marginal law is the single-game transition at its position.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .boundary import BoundaryDatum
from .coefficients import FULLBALL, ORTHOGONAL, ExponentField, alpha_field
from .dpp import Domain, GridField
from .geometry import (
    coupled_rotation,
    frame_for,
    frames_for,
    normalize,
    project,
    rotate_in_plane,
    sample_ball,
    sample_flat_ball,
    sphere_directions,
)

SINGLE = "single"
DOUBLED = "doubled"

DIAGONAL = "diagonal"
EXIT = "exit"
CAP = "cap"


@dataclass
class GameConfig:
    variant: str
    domain: Domain
    field: ExponentField
    g: BoundaryDatum
    game: str = SINGLE
    stop_distance: float | None = None
    max_turns: int = 100_000
    seed: int = 0
    responder: bool = True
    exit_payoff: float | None = None

    def __post_init__(self):
        if self.stop_distance is None:
            self.stop_distance = self.domain.epsilon / 10.0
        if self.stop_distance < 0:
            raise ValueError("stop_distance must be nonnegative")
        if self.game not in (SINGLE, DOUBLED):
            raise ValueError(f"unknown game {self.game!r}")

    @property
    def epsilon(self) -> float:
        return self.domain.epsilon

    def alpha(self, x) -> np.ndarray:
        return alpha_field(self.field, np.asarray(x, float), self.variant)

    def doubled_payoff(self) -> float:
        """Exit payoff of the doubled game: 2 sup|g| over a sample of the strip."""
        if self.exit_payoff is not None:
            return self.exit_payoff
        lo, hi = self.domain.bounds
        eps = self.epsilon
        rng = np.random.default_rng(12345)
        pts = rng.uniform(lo - eps, hi + eps, size=(20000, self.domain.n))
        pts = pts[~self.domain.contains(pts)]
        return 2.0 * float(np.abs(self.g(pts)).max())

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "domain": self.domain.to_dict(),
            "field": self.field.to_dict(),
            "boundary": self.g.spec,
            "game": self.game,
            "stop_distance": self.stop_distance,
            "max_turns": self.max_turns,
            "seed": self.seed,
            "responder": self.responder,
        }

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# Strategies


def _v(x, z) -> np.ndarray:
    d = np.asarray(x, float) - np.asarray(z, float)
    nrm = np.linalg.norm(d)
    if nrm == 0.0:
        raise ValueError("x = z: the direction v is undefined")
    return d / nrm


def _perp(v: np.ndarray) -> np.ndarray:
    """A fixed unit vector orthogonal to v (first two coordinates rotated a quarter turn)."""
    w = np.zeros_like(v)
    if abs(v[0]) + abs(v[1]) > 1e-12:
        w[0], w[1] = -v[1], v[0]
    else:
        w[0] = 1.0
    return normalize(w - np.dot(w, v) * v)


def threshold_response(x, z, opp_move, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Responder rule with threshold Theta = |x-z|**s.

    If (nu_x - nu_z)_V**2 >= 4 - Theta the opponent is pulling the tokens
    nearly straight apart and we reverse both moves; otherwise we pull the
    tokens straight toward each other with (-v, v). Ties (within 1e-12) go to
    the reversal branch.
    """
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    v = _v(x, z)
    nu_x, nu_z = (np.asarray(a, float) for a in opp_move)
    theta_thr = np.linalg.norm(x - z) ** s
    d = project(nu_x - nu_z, v).h_v
    if d * d >= 4.0 - theta_thr - 1e-12:
        return -nu_x, -nu_z
    return -v, v


@dataclass
class Strategy:
    """A player's rule.

    kinds: ``pull_together``, ``slight_turn`` (param ``theta`` or ``theta_exponent``),
    ``threshold_angle`` (param ``s``), ``fixed_direction`` (``nu_x``, ``nu_z`` or
    ``nu``), ``responder_wrapper`` (param ``respond``: callable(x, z, opp_move)),
    ``greedy`` (single game only: ``field`` GridField and ``maximize``).
    """

    kind: str
    params: dict = field(default_factory=dict)

    RESPONDERS = ("threshold_angle", "responder_wrapper")

    @property
    def responds(self) -> bool:
        return self.kind in self.RESPONDERS

    def coupled_move(self, x, z, eps: float, announced=None) -> tuple[np.ndarray, np.ndarray]:
        k = self.kind
        if k == "pull_together":
            v = _v(x, z)
            return -v, v
        if k == "slight_turn":
            v = _v(x, z)
            theta = self.theta(eps)
            w = self.params.get("toward")
            w = _perp(v) if w is None else np.asarray(w, float)
            t = rotate_in_plane(v, w, theta)
            return t, -t
        if k == "fixed_direction":
            nu_x = np.asarray(self.params.get("nu_x", self.params.get("nu")), float)
            nu_z = np.asarray(self.params.get("nu_z", nu_x), float)
            return nu_x, nu_z
        if k == "threshold_angle":
            if announced is None:
                return self._fallback(x, z)
            return threshold_response(x, z, announced, self.params["s"])
        if k == "responder_wrapper":
            if announced is None:
                return self._fallback(x, z)
            out = self.params["respond"](x, z, announced)
            return np.asarray(out[0], float), np.asarray(out[1], float)
        raise ValueError(f"strategy {k!r} has no coupled move")

    def _fallback(self, x, z):
        # simultaneous commitment: no announced move to respond to
        v = _v(x, z)
        return -v, v

    def theta(self, eps: float) -> float:
        if "theta" in self.params:
            return float(self.params["theta"])
        return eps ** float(self.params.get("theta_exponent", 0.75))

    def single_moves(self, X: np.ndarray, eps: float, alpha: np.ndarray, quad=None) -> np.ndarray:
        """Directions for a batch of single-game positions (rows of X)."""
        k = self.kind
        if k == "fixed_direction":
            nu = np.asarray(self.params.get("nu", self.params.get("nu_x")), float)
            return np.broadcast_to(nu, X.shape).copy()
        if k == "greedy":
            return _greedy_directions(self.params["field"], X, eps, alpha,
                                      self.params.get("maximize", True),
                                      self.params.get("dirs"), quad)
        raise ValueError(f"strategy {k!r} has no single-game move")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for key, val in self.params.items():
            if isinstance(val, np.ndarray):
                d[key] = val.tolist()
            elif isinstance(val, (int, float, str, bool, list)):
                d[key] = val
        return d


def _greedy_directions(u: GridField, X, eps, alpha, maximize, dirs, quad):
    """Directions maximizing (or minimizing) the one-step average of a solved field."""
    from .dpp import default_quadrature

    n = X.shape[1]
    dirs = sphere_directions(n, 64 if n == 2 else 256) if dirs is None else dirs
    variant_full = quad is not None and quad.kind == "full"
    det = u.interpolate(X[:, None, :] + eps * dirs[None, :, :])  # (B, m)
    if variant_full:
        score = det
    else:
        quad = default_quadrature(n, ORTHOGONAL) if quad is None else quad
        frames = frames_for(dirs, 1)
        noise_pts = eps * np.einsum("kij,qj->kqi", frames, quad.nodes)
        noise = u.interpolate(X[:, None, None, :] + noise_pts[None]) @ quad.weights
        score = alpha[:, None] * det + (1 - alpha[:, None]) * noise
    k = np.argmax(score, axis=1) if maximize else np.argmin(score, axis=1)
    return dirs[k]


# --------------------------------------------------------------------------
# Single game


def _noise(rng, nu, variant: str) -> np.ndarray:
    n = len(nu)
    if variant == FULLBALL:
        return sample_ball(rng, n)
    return frame_for(nu, 1) @ sample_flat_ball(rng, n)


def step_single_record(x, nu_I, nu_II, rng, alpha: float, eps: float, variant: str = ORTHOGONAL):
    """One turn; returns (new position, winner, branch, noise draw or None)."""
    x = np.asarray(x, float)
    winner = "I" if rng.random() < 0.5 else "II"
    nu = np.asarray(nu_I if winner == "I" else nu_II, float)
    if rng.random() < alpha:
        return x + eps * nu, winner, "det", None
    step = _noise(rng, nu, variant)
    return x + eps * step, winner, "noise", step


def step_single(x, nu_I, nu_II, rng, alpha: float, eps: float, variant: str = ORTHOGONAL) -> np.ndarray:
    """Fair coin, then the winner's step with probability alpha, noise otherwise."""
    return step_single_record(x, nu_I, nu_II, rng, alpha, eps, variant)[0]


# --------------------------------------------------------------------------
# Coupled game


def step_coupled_record(x, z, our: Strategy, opp: Strategy, rng, cfg: GameConfig):
    """One coupled turn; returns (x', z', record dict)."""
    x = np.asarray(x, float)
    z = np.asarray(z, float)
    eps = cfg.epsilon
    opp_move = opp.coupled_move(x, z, eps)
    our_move = our.coupled_move(x, z, eps, opp_move if (cfg.responder and our.responds) else None)
    mover = "our" if rng.random() < 0.5 else "opp"
    nu_x, nu_z = our_move if mover == "our" else opp_move

    a_x, a_z = (float(a) for a in cfg.alpha(np.stack([x, z])))
    swapped = a_x < a_z
    if swapped:
        x, z, nu_x, nu_z, a_x, a_z = z, x, nu_z, nu_x, a_z, a_x
    r = rng.random()
    zeta = None
    if r < a_z:
        branch = "det-det"
        x_new, z_new = x + eps * nu_x, z + eps * nu_z
    elif r < a_z + (1.0 - a_x):
        branch = "common-noise"
        if cfg.variant == FULLBALL:
            zeta = sample_ball(rng, len(x))
            x_new, z_new = x + eps * zeta, z + eps * zeta
        else:
            zeta = sample_flat_ball(rng, len(x))
            cr = coupled_rotation(nu_x, nu_z)
            x_new, z_new = x + eps * cr.p_x @ zeta, z + eps * cr.p_z @ zeta
    else:
        branch = "det-noise"
        if cfg.variant == FULLBALL:
            zeta = sample_ball(rng, len(x))
            z_new = z + eps * zeta
        else:
            zeta = sample_flat_ball(rng, len(x))
            z_new = z + eps * coupled_rotation(nu_x, nu_z).p_z @ zeta
        x_new = x + eps * nu_x
    if swapped:
        x_new, z_new, nu_x, nu_z = z_new, x_new, nu_z, nu_x
    rec = {
        "mover": mover,
        "nu_x": nu_x.tolist(),
        "nu_z": nu_z.tolist(),
        "branch": branch,
        "zeta": None if zeta is None else zeta.tolist(),
    }
    return x_new, z_new, rec


def step_coupled(x, z, our: Strategy, opp: Strategy, rng, cfg: GameConfig) -> tuple[np.ndarray, np.ndarray]:
    x_new, z_new, _ = step_coupled_record(x, z, our, opp, rng, cfg)
    return x_new, z_new


# --------------------------------------------------------------------------
# Episodes


@dataclass
class GameTrace:
    turns: list
    cause: str
    payoff: Optional[float]
    start: list

    def to_jsonl(self) -> str:
        lines = [json.dumps({"turn": i, **t}, sort_keys=True) for i, t in enumerate(self.turns)]
        lines.append(json.dumps({"end": self.cause, "payoff": self.payoff, "start": self.start}, sort_keys=True))
        return "\n".join(lines) + "\n"


def play_episode(cfg: GameConfig, our: Strategy, opp: Strategy, rng, start) -> GameTrace:
    """Play until the diagonal (doubled game), an exit, or the turn cap.

    Single game: ``start`` is a point, ``our`` is Player I (maximizer) and
    ``opp`` Player II; the payoff is g at the exit point. Doubled game:
    ``start`` is a pair (x, z); payoff 0 on reaching the diagonal and
    ``2 sup|g|`` on exit. Capped episodes carry payoff None.
    """
    eps = cfg.epsilon
    dom = cfg.domain
    turns = []
    if cfg.game == SINGLE:
        x = np.asarray(start, float)
        s0 = x.tolist()
        for _ in range(cfg.max_turns):
            if not dom.contains(x):
                return GameTrace(turns, EXIT, float(cfg.g(x)), s0)
            a = float(cfg.alpha(x))
            quad = None
            nu_I = our.single_moves(x[None], eps, np.array([a]), quad)[0]
            nu_II = opp.single_moves(x[None], eps, np.array([a]), quad)[0]
            x_new, winner, branch, step = step_single_record(x, nu_I, nu_II, rng, a, eps, cfg.variant)
            turns.append({"x": x.tolist(), "winner": winner, "branch": branch,
                          "noise": None if step is None else step.tolist()})
            x = x_new
        if not dom.contains(x):
            return GameTrace(turns, EXIT, float(cfg.g(x)), s0)
        return GameTrace(turns, CAP, None, s0)

    x, z = (np.asarray(p, float) for p in start)
    s0 = [x.tolist(), z.tolist()]
    exit_pay = cfg.doubled_payoff()
    for _ in range(cfg.max_turns + 1):
        if np.linalg.norm(x - z) <= cfg.stop_distance:
            return GameTrace(turns, DIAGONAL, 0.0, s0)
        if not (dom.contains(x) and dom.contains(z)):
            return GameTrace(turns, EXIT, exit_pay, s0)
        if len(turns) == cfg.max_turns:
            break
        x_new, z_new, rec = step_coupled_record(x, z, our, opp, rng, cfg)
        turns.append({"x": x.tolist(), "z": z.tolist(), **rec})
        x, z = x_new, z_new
    return GameTrace(turns, CAP, None, s0)


@dataclass
class ValueEstimate:
    mean: float
    std_error: float
    cap_fraction: float
    episodes: int
    reliable: bool
    config_hash: str

    def to_dict(self) -> dict:
        return asdict(self)


def _simulate_single_batch(cfg: GameConfig, our: Strategy, opp: Strategy, start, count: int, rng):
    """Vectorized single-game episodes from a common start; returns payoffs (NaN if capped)."""
    eps = cfg.epsilon
    n = cfg.domain.n
    X = np.tile(np.asarray(start, float), (count, 1))
    payoff = np.full(count, np.nan)
    active = np.arange(count)
    for _ in range(cfg.max_turns + 1):
        inside = cfg.domain.contains(X[active])
        done = active[~inside]
        if len(done):
            payoff[done] = cfg.g(X[done])
        active = active[inside]
        if len(active) == 0:
            break
        Xa = X[active]
        a = np.atleast_1d(cfg.alpha(Xa))
        need_moves = np.any(a > 0) or cfg.variant == ORTHOGONAL
        if need_moves:
            nu_I = our.single_moves(Xa, eps, a)
            nu_II = opp.single_moves(Xa, eps, a)
        k = len(active)
        win_I = rng.random(k) < 0.5
        det = rng.random(k) < a
        step = np.empty((k, n))
        if need_moves:
            nu = np.where(win_I[:, None], nu_I, nu_II)
            step[det] = nu[det]
        noisy = ~det
        m = int(noisy.sum())
        if m:
            if cfg.variant == FULLBALL:
                step[noisy] = sample_ball(rng, n, m)
            else:
                frames = frames_for(nu[noisy], 1)
                step[noisy] = np.einsum("kij,kj->ki", frames, sample_flat_ball(rng, n, m))
        X[active] = Xa + eps * step
    return payoff


def estimate_value(cfg: GameConfig, our: Strategy, opp: Strategy, start, episodes: int,
                   chunk: int = 20_000) -> ValueEstimate:
    """Sample mean and standard error of the payoff over independent seeded streams.

    Capped episodes are excluded from the mean; more than 10% capped marks the
    estimate unreliable.
    """
    if episodes < 100:
        raise ValueError("need at least 100 episodes")
    seeds = np.random.SeedSequence(cfg.seed).spawn((episodes + chunk - 1) // chunk)
    pays = []
    left = episodes
    for ss in seeds:
        k = min(chunk, left)
        left -= k
        rng = np.random.default_rng(ss)
        if cfg.game == SINGLE:
            pays.append(_simulate_single_batch(cfg, our, opp, start, k, rng))
        else:
            pays.append(np.array([
                np.nan if (t := play_episode(cfg, our, opp, rng, start)).payoff is None else t.payoff
                for _ in range(k)
            ]))
    pay = np.concatenate(pays)
    capped = np.isnan(pay)
    ok = pay[~capped]
    cap_fraction = float(capped.mean())
    mean = float(ok.mean()) if len(ok) else math.nan
    se = float(ok.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else math.nan
    return ValueEstimate(mean, se, cap_fraction, episodes, cap_fraction <= 0.10, cfg.config_hash())


# --------------------------------------------------------------------------
# Experiments on one-step transitions


def coupled_branch_frequencies(x, z, cfg: GameConfig, steps: int, seed: int = 0,
                               our: Strategy | None = None, opp: Strategy | None = None) -> dict:
    """Empirical branch frequencies of the coupled step at (x, z), with the exact ones."""
    our = our or Strategy("threshold_angle", {"s": cfg.field.s})
    opp = opp or Strategy("pull_together")
    rng = np.random.default_rng(seed)
    counts = {"det-det": 0, "common-noise": 0, "det-noise": 0}
    for _ in range(steps):
        _, _, rec = step_coupled_record(x, z, our, opp, rng, cfg)
        counts[rec["branch"]] += 1
    a = cfg.alpha(np.stack([np.asarray(x, float), np.asarray(z, float)]))
    hi, lo = float(max(a)), float(min(a))
    expected = {"det-det": lo, "common-noise": 1.0 - hi, "det-noise": hi - lo}
    return {"steps": steps, "counts": counts, "expected": expected}


def slight_turn_experiment(eps: float, theta: float | None = None, steps: int = 1_000_000,
                           seed: int = 0, n: int = 2, alpha: float = 1.0) -> dict:
    """Per-step radial loss and transversal gain of a slight-turn opponent.

    Our side pulls together, the opponent plays (T v, -T v) with T a rotation
    by theta (default eps**0.75) toward a perpendicular direction. Over
    ``steps`` independent coupled transitions from random configurations the
    opponent-moved deterministic steps are collected; for each the x token's
    shortfall along v, eps - <dx, v>, and its displacement orthogonal to v
    are averaged. Exact per-step values: eps(1 - cos theta), eps sin theta.
    """
    theta = eps ** 0.75 if theta is None else theta
    rng = np.random.default_rng(seed)
    x = rng.uniform(-0.5, 0.5, size=(steps, n))
    z = rng.uniform(-0.5, 0.5, size=(steps, n))
    d = x - z
    v = d / np.linalg.norm(d, axis=1, keepdims=True)
    w = np.zeros_like(v)
    w[:, 0], w[:, 1] = -v[:, 1], v[:, 0]
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    t = math.cos(theta) * v + math.sin(theta) * w
    opp_moves = rng.random(steps) >= 0.5
    det = rng.random(steps) < alpha
    sel = opp_moves & det
    dx = eps * t[sel]
    along = np.einsum("ij,ij->i", dx, v[sel])
    perp = np.linalg.norm(dx - along[:, None] * v[sel], axis=1)
    loss = eps - along
    return {
        "epsilon": eps,
        "theta": theta,
        "steps": steps,
        "samples": int(sel.sum()),
        "loss_mean": float(loss.mean()),
        "gain_mean": float(perp.mean()),
        "loss_expected": eps * (1 - math.cos(theta)),
        "gain_expected": eps * math.sin(theta),
        "loss_approx": 0.5 * eps * theta ** 2,
        "gain_approx": eps * theta,
    }
