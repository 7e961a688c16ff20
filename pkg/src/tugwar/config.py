"""Run configuration: load YAML/JSON, validate against the bundled schema, build objects."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from .boundary import BoundaryDatum, datum_from_spec
from .coefficients import FULLBALL, ExponentField, field_from_spec
from .dpp import Domain, Problem


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    text = resources.files("tugwar").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


@dataclass
class RunConfig:
    raw: dict
    domain: Domain
    field: ExponentField
    variant: str
    g: BoundaryDatum
    eps_list: list
    seed: int = 0
    numerics: dict = field(default_factory=dict)
    game: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)
    measure: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return self.domain.epsilon

    @property
    def h_factor(self) -> float:
        return float(self.numerics.get("h_factor", 0.5))

    def problem(self, eps: float | None = None) -> Problem:
        eps = self.epsilon if eps is None else eps
        dom = Domain(self.domain.kind, self.domain.center, self.domain.size, eps)
        return Problem(dom, self.field, self.variant, self.g, self.h_factor * eps,
                       self.numerics.get("directions"), self.numerics.get("quad_nodes"))

    def solve_kwargs(self) -> dict:
        out = {}
        if "tol" in self.numerics:
            out["tol"] = self.numerics["tol"]
        if "max_iter" in self.numerics:
            out["max_iter"] = self.numerics["max_iter"]
        return out


def _domain(spec: dict, eps: float) -> Domain:
    if spec["kind"] == "box":
        if len(spec["lo"]) != len(spec["hi"]):
            raise ConfigError("domain lo and hi differ in dimension")
        if any(h <= l for l, h in zip(spec["lo"], spec["hi"])):
            raise ConfigError("domain needs lo < hi in every coordinate")
        return Domain.box(spec["lo"], spec["hi"], eps)
    return Domain("ball", tuple(spec["center"]), (float(spec["radius"]),), eps)


def parse_config(raw: dict, subcommand: str | None = None) -> RunConfig:
    """Validate a config dictionary and build the run objects; raises ConfigError."""
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    if subcommand and raw.get("subcommand", subcommand) != subcommand:
        raise ConfigError(f"config is for {raw['subcommand']!r}, not {subcommand!r}")
    if "eps_list" in raw:
        eps_list = [float(e) for e in raw["eps_list"]]
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
            raise ConfigError("eps_list must be strictly decreasing")
    elif "epsilon" in raw:
        eps_list = [float(raw["epsilon"])]
    else:
        raise ConfigError("need epsilon or eps_list")
    if subcommand == "sweep" and len(eps_list) < 2:
        raise ConfigError("sweep needs eps_list with at least two entries")
    try:
        dom = _domain(raw["domain"], eps_list[0])
        n = dom.n
        fld = field_from_spec(raw["field"], n)
        g = datum_from_spec(raw["boundary"])
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    for e in eps_list[1:]:
        try:
            _domain(raw["domain"], e)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    variant = raw["variant"]
    if variant == FULLBALL and fld.p_min < 2.0:
        raise ConfigError("fullball variant needs p >= 2 everywhere")
    if not variant == FULLBALL and fld.p_min <= 1.0:
        raise ConfigError("orthogonal variant needs p > 1 everywhere")
    spec = raw["field"]
    if spec["kind"] == "affine" and len(spec["slope"]) != n:
        raise ConfigError("field slope dimension differs from the domain")
    if raw["boundary"]["kind"] == "affine" and len(raw["boundary"]["slope"]) != n:
        raise ConfigError("boundary slope dimension differs from the domain")
    if n < 2:
        raise ConfigError("dimension must be at least 2")
    game = dict(raw.get("game", {}))
    if game:
        kind = game.get("kind", "single")
        start = game["start"]
        pts = [start] if kind == "single" else start
        if kind == "single" and isinstance(start[0], list):
            raise ConfigError("single game start must be one point")
        if kind == "doubled" and not isinstance(start[0], list):
            raise ConfigError("doubled game start must be a pair of points")
        if any(len(p) != n for p in pts):
            raise ConfigError("game start dimension differs from the domain")
    return RunConfig(raw, dom, fld, variant, g, eps_list, int(raw.get("seed", 0)),
                     dict(raw.get("numerics", {})), game, dict(raw.get("verify", {})),
                     dict(raw.get("measure", {})))


def load_config(path, subcommand: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return parse_config(raw, subcommand)
