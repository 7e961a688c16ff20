"""Command-line front end.

    tugwar {solve,simulate,verify,measure,sweep} CONFIG [--out DIR]

Exit status: 0 when every requested check passes, 1 when a check fails,
2 for configuration errors (nothing is written in that case).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .comparison import recipe_from_field, verify_suite
from .config import ConfigError, RunConfig, load_config
from .dpp import default_quadrature, solve_fixed_point
from .game import DOUBLED, SINGLE, GameConfig, Strategy, estimate_value, play_episode
from .io import config_hash, dumps, write_grid, write_report
from .regularity import gap_K, lipschitz_modulus, scale_sweep, scatter_rows, write_scatter_csv

SUBCOMMANDS = ("solve", "simulate", "verify", "measure", "sweep")


class CheckFailed(Exception):
    def __init__(self, reason: str, details: dict):
        super().__init__(reason)
        self.reason = reason
        self.details = details


def _diameter(cfg: RunConfig) -> float:
    lo, hi = cfg.domain.bounds
    return float(np.linalg.norm(hi - lo))


def _solve(cfg: RunConfig, out: Path, chash: str, eps: float | None = None, tag: str = ""):
    from . import plotting

    prob = cfg.problem(eps)
    res = solve_fixed_point(prob, **cfg.solve_kwargs())
    write_grid(res.field, out / f"grid{tag}.csv", out / f"grid{tag}.json", chash,
               {"problem": prob.to_dict()})
    write_report(out / f"solve_report{tag}.json", {
        "problem": prob.to_dict(),
        "iterations": res.iterations,
        "converged": res.converged,
        "residual_history": res.residual_history,
    }, chash)
    plotting.plot_field(res.field, out / f"field{tag}.png")
    plotting.plot_residuals(res.residual_history, out / f"residuals{tag}.png")
    return res


def cmd_solve(cfg: RunConfig, out: Path, chash: str) -> dict:
    res = _solve(cfg, out, chash)
    if not res.converged:
        raise CheckFailed("solver did not converge", {"iterations": res.iterations,
                                                       "last_residual": res.residual_history[-1]})
    return {"iterations": res.iterations}


def _strategy(spec: dict | None, default: dict, solved=None) -> Strategy:
    spec = dict(spec or default)
    kind = spec.pop("kind")
    if kind == "greedy":
        if solved is None:
            raise ConfigError("greedy strategies need a solved field")
        spec["field"] = solved
    return Strategy(kind, spec)


def cmd_simulate(cfg: RunConfig, out: Path, chash: str) -> dict:
    game = cfg.game
    kind = game.get("kind", SINGLE)
    solved = None
    needs_field = kind == SINGLE or game.get("compare_to_solver", False)
    if needs_field:
        solved = _solve(cfg, out, chash).field
    gcfg = GameConfig(cfg.variant, cfg.problem().domain, cfg.field, cfg.g, game=kind,
                      stop_distance=game.get("stop_distance"), max_turns=game.get("max_turns", 100_000),
                      seed=cfg.seed, responder=game.get("responder", True))
    if kind == SINGLE:
        our = _strategy(game.get("our"), {"kind": "greedy", "maximize": True}, solved)
        opp = _strategy(game.get("opp"), {"kind": "greedy", "maximize": False}, solved)
        start = np.asarray(game["start"], float)
    else:
        s = cfg.field.s if cfg.field.s < 1 else 0.5
        our = _strategy(game.get("our"), {"kind": "threshold_angle", "s": s})
        opp = _strategy(game.get("opp"), {"kind": "slight_turn"})
        start = tuple(np.asarray(p, float) for p in game["start"])
    est = estimate_value(gcfg, our, opp, start, game.get("episodes", 10_000))
    report = {"game": gcfg.to_dict(), "our": our.to_dict(), "opp": opp.to_dict(), **est.to_dict()}
    report["game_hash"] = report.pop("config_hash")
    failures = {}
    if not est.reliable:
        failures["reliability"] = f"cap_fraction {est.cap_fraction:.3f} exceeds 0.10"
    if kind == SINGLE and game.get("compare_to_solver", False):
        solved_value = float(solved.interpolate(start))
        diff = abs(est.mean - solved_value)
        report["solver_value"] = solved_value
        report["difference_in_se"] = diff / est.std_error if est.std_error > 0 else math.inf
        if diff > 3 * est.std_error:
            failures["agreement"] = f"|mean - solved| = {diff:.3g} exceeds 3 standard errors"
    n_traces = game.get("traces", 0)
    if n_traces:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        with open(out / "traces.jsonl", "w") as fh:
            for _ in range(n_traces):
                fh.write(play_episode(gcfg, our, opp, rng, start).to_jsonl())
    write_report(out / "value_report.json", report, chash)
    if failures:
        raise CheckFailed("simulation check failed", failures)
    return {"mean": est.mean, "std_error": est.std_error}


def cmd_verify(cfg: RunConfig, out: Path, chash: str) -> dict:
    v = cfg.verify
    r = float(v.get("r", 0.4))
    params = recipe_from_field(cfg.field, cfg.variant, r, float(v.get("sup_u", 1.0)),
                               float(v.get("C_u", 1.0)), _diameter(cfg))
    quad = default_quadrature(cfg.field.n, cfg.variant, cfg.numerics.get("quad_nodes"))
    checks = v.get("checks", ["taylor", "case1", "case2", "annular"])
    res = verify_suite(params, cfg.field, cfg.variant, quad, checks, v.get("samples", 1000),
                       cfg.seed, v.get("annuli", 200))
    report = {"params": params.to_dict(), "binding": params.binding_constraints(), "checks": res}
    write_report(out / "verify_report.json", report, chash)
    if not res["ok"]:
        raise CheckFailed("verifier failure", {k: val for k, val in res.items()
                                                if isinstance(val, dict) and not val["ok"]})
    return {"checks": checks}


def _measure_one(cfg: RunConfig, u, chash: str, out: Path, tag: str = ""):
    from . import plotting

    m = cfg.measure
    center = m.get("center", cfg.domain.center)
    r = float(m.get("r", 0.4))
    pairs = int(m.get("pairs", 20_000))
    s = cfg.field.s if cfg.field.s < 1 else 0.5
    rep = lipschitz_modulus(u, center, r, pairs=pairs, seed=cfg.seed, delta=2 * s)
    dist, du = scatter_rows(u, center, r, pairs, cfg.seed)
    write_scatter_csv(out / f"scatter{tag}.csv", dist, du)
    plotting.plot_scatter(dist, du, u.epsilon, rep.L_eps, out / f"scatter{tag}.png")
    if m.get("gap", True):
        sup_u = float(np.abs(u.interpolate(_ball_nodes(u, center, 2 * r))).max())
        params = recipe_from_field(cfg.field, cfg.variant, r, max(sup_u, 1e-12), max(rep.C_u, 1e-12),
                                   _diameter(cfg))
        gap = gap_K(u, params, center, r)
        rep.gap = {**gap.to_dict(), "params": params.to_dict()}
    return rep


def _ball_nodes(u, center, radius):
    pts = u.coords().reshape(-1, u.n)
    keep = np.linalg.norm(pts - np.asarray(center, float), axis=1) <= radius
    return pts[keep]


def cmd_measure(cfg: RunConfig, out: Path, chash: str) -> dict:
    res = _solve(cfg, out, chash)
    rep = _measure_one(cfg, res.field, chash, out)
    rep.converged, rep.iterations = res.converged, res.iterations
    write_report(out / "modulus_report.json", rep.to_dict(), chash)
    if rep.gap is not None and not rep.gap["passed"]:
        raise CheckFailed("gap check failed", {"gap": rep.gap})
    return {"L_eps": rep.L_eps}


def cmd_sweep(cfg: RunConfig, out: Path, chash: str) -> dict:
    from . import plotting

    m = cfg.measure
    center = m.get("center", cfg.domain.center)
    r = float(m.get("r", 0.4))
    s = cfg.field.s if cfg.field.s < 1 else 0.5
    sw, fields = scale_sweep(cfg.problem(cfg.eps_list[0]), cfg.eps_list, center, r,
                             int(m.get("pairs", 20_000)), cfg.seed, cfg.h_factor, 2 * s,
                             cfg.solve_kwargs(), keep_fields=True)
    gaps = []
    if m.get("gap", True):
        for rep, u in zip(sw.reports, fields):
            sup_u = float(np.abs(u.interpolate(_ball_nodes(u, center, 2 * r))).max())
            params = recipe_from_field(cfg.field, cfg.variant, r, max(sup_u, 1e-12),
                                       max(sw.reports[0].C_u, 1e-12), _diameter(cfg))
            gap = gap_K(u, params, center, r)
            rep.gap = {**gap.to_dict(), "params": params.to_dict()}
            gaps.append(gap.passed)
    rows = sw.table()
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    write_report(out / "sweep.json", {"reports": [r_.to_dict() for r_ in sw.reports],
                                      "ratios": sw.ratios, "table": rows}, chash)
    plotting.plot_sweep(cfg.eps_list, [r_.L_eps for r_ in sw.reports], out / "sweep.png")
    failures = {}
    if "max_ratio" in m and sw.max_ratio() > m["max_ratio"]:
        failures["ratio"] = {"max_ratio": sw.max_ratio(), "limit": m["max_ratio"]}
    if gaps and not all(gaps):
        failures["gap"] = [rep.epsilon for rep, ok in zip(sw.reports, gaps) if not ok]
    if not all(r_.converged for r_ in sw.reports):
        failures["convergence"] = [r_.epsilon for r_ in sw.reports if not r_.converged]
    if failures:
        raise CheckFailed("sweep check failed", failures)
    return {"ratios": sw.ratios}


def preflight(cfg: RunConfig, subcommand: str) -> None:
    """Semantic checks that must fail before any artifact is written."""
    if subcommand == "simulate":
        if not cfg.game:
            raise ConfigError("simulate needs a game section")
        kind = cfg.game.get("kind", SINGLE)
        for side in ("our", "opp"):
            spec = cfg.game.get(side)
            if spec is None:
                continue
            if kind == DOUBLED and spec["kind"] == "greedy":
                raise ConfigError("greedy strategies exist only in the single game")
            if kind == SINGLE and spec["kind"] not in ("greedy", "fixed_direction"):
                raise ConfigError(f"strategy {spec['kind']!r} has no single-game move")
            for key in ("nu", "nu_x", "nu_z"):
                if key in spec and len(spec[key]) != cfg.domain.n:
                    raise ConfigError(f"{side}.{key} dimension differs from the domain")
    if subcommand in ("measure", "sweep"):
        m = cfg.measure
        center = np.asarray(m.get("center", cfg.domain.center), float)
        r = float(m.get("r", 0.4))
        lo, hi = cfg.domain.bounds
        if len(center) != cfg.domain.n:
            raise ConfigError("measure.center dimension differs from the domain")
        if cfg.domain.kind == "box":
            inside = np.all(center - 2 * r > lo) and np.all(center + 2 * r < hi)
        else:
            inside = np.linalg.norm(center - np.asarray(cfg.domain.center)) + 2 * r < cfg.domain.size[0]
        if not inside:
            raise ConfigError("measure ball B_2r(center) must lie inside the domain")
    if subcommand == "verify" and cfg.variant == "fullball" and cfg.field.p_min <= 2.0:
        raise ConfigError("verify needs alpha_min > 0, i.e. p > 2 for the fullball variant")


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "verify": cmd_verify,
            "measure": cmd_measure, "sweep": cmd_sweep}


def run(subcommand: str, config_path, out_dir) -> int:
    try:
        cfg = load_config(config_path, subcommand)
        preflight(cfg, subcommand)
    except ConfigError as exc:
        sys.stderr.write(dumps({"status": "config_error", "exit_code": 2, "reason": str(exc)}))
        return 2
    chash = config_hash(cfg.raw)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_echo.json").write_text(dumps({"config_hash": chash, "config": cfg.raw}))
    (out / "run_meta.json").write_text(dumps({
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "version": __version__, "subcommand": subcommand, "config_hash": chash,
    }))
    try:
        summary = COMMANDS[subcommand](cfg, out, chash)
    except CheckFailed as exc:
        payload = {"status": "check_failed", "exit_code": 1, "reason": exc.reason, "details": exc.details}
        write_report(out / "failure.json", payload, chash)
        sys.stderr.write(dumps(payload))
        return 1
    sys.stdout.write(dumps({"status": "ok", "exit_code": 0, "config_hash": chash, **summary}))
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tugwar", description="Tug-of-war DPP laboratory")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("config", help="YAML or JSON run configuration")
    parser.add_argument("--out", default="tugwar_out", help="output directory (default: tugwar_out)")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
