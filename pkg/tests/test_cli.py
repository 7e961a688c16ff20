import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from tugwar.cli import main
from tugwar.config import ConfigError, load_schema, parse_config
from tugwar.io import read_grid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "domain": {"kind": "box", "lo": [0, 0], "hi": [1, 1]},
    "field": {"kind": "constant", "p": 2},
    "variant": "fullball",
    "boundary": {"kind": "quadratic_harmonic"},
    "epsilon": 0.1,
}


def _write(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def _run(args, capsys):
    code = main(args)
    cap = capsys.readouterr()
    # summaries go to stdout on success, to stderr otherwise
    return code, json.loads(cap.out if code == 0 else cap.err)


def test_solve_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    code, summary = _run(["solve", str(_write(tmp_path, BASE)), "--out", str(out)], capsys)
    assert code == 0 and summary["status"] == "ok"
    names = {p.name for p in out.iterdir()}
    assert {"grid.csv", "grid.json", "solve_report.json", "field.png", "residuals.png",
            "config_echo.json", "run_meta.json"} <= names
    rep = json.loads((out / "solve_report.json").read_text())
    assert rep["schema_version"] == "1.0" and len(rep["config_hash"]) == 64
    with open(out / "grid.csv") as fh:
        header = next(csv.reader(fh))
    assert header == ["index", "x1", "x2", "region", "value"]
    u = read_grid(out / "grid.csv", out / "grid.json")
    exact = u.coords()[..., 0] ** 2 - u.coords()[..., 1] ** 2
    assert np.abs(u.values - exact).max() < 0.05


def test_artifacts_deterministic(tmp_path, capsys):
    cfg = _write(tmp_path, BASE)
    for tag in ("a", "b"):
        assert main(["solve", str(cfg), "--out", str(tmp_path / tag)]) == 0
    capsys.readouterr()
    for f in (tmp_path / "a").iterdir():
        if f.name != "run_meta.json":
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(bogus=1),
    lambda c: c.update(variant="sideways"),
    lambda c: c.update(field={"kind": "constant", "p": 1.5}),
    lambda c: c.pop("epsilon"),
    lambda c: c.update(epsilon=0.5),
    lambda c: c.update(boundary={"kind": "affine", "slope": [1, 2, 3]}),
])
def test_config_errors_exit_2_without_artifacts(tmp_path, capsys, mutate):
    cfg = json.loads(json.dumps(BASE))
    mutate(cfg)
    out = tmp_path / "out"
    code, summary = _run(["solve", str(_write(tmp_path, cfg)), "--out", str(out)], capsys)
    assert code == 2 and summary["status"] == "config_error"
    assert not out.exists()


def test_malformed_yaml_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("domain: [\n")
    code, _ = _run(["solve", str(bad), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and not (tmp_path / "o").exists()


def test_subcommand_mismatch(tmp_path, capsys):
    cfg = dict(BASE, subcommand="verify")
    code, _ = _run(["solve", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o")], capsys)
    assert code == 2


def test_failed_check_exits_1(tmp_path, capsys):
    cfg = dict(BASE, variant="orthogonal", field={"kind": "constant", "p": 4},
               domain={"kind": "box", "lo": [-1, -1], "hi": [1, 1]}, eps_list=[0.2, 0.1],
               measure={"center": [0, 0], "r": 0.4, "pairs": 1000, "max_ratio": 1.0})
    cfg.pop("epsilon")
    out = tmp_path / "o"
    code, summary = _run(["sweep", str(_write(tmp_path, cfg)), "--out", str(out)], capsys)
    assert code == 1 and summary["status"] == "check_failed"
    assert (out / "failure.json").exists() and (out / "sweep.csv").exists()


def test_simulate_compares_with_solver(tmp_path, capsys):
    cfg = dict(BASE, seed=3, game={"kind": "single", "start": [0.5, 0.3], "episodes": 400,
                                   "our": {"kind": "greedy"}, "opp": {"kind": "greedy"},
                                   "compare_to_solver": True})
    out = tmp_path / "o"
    code, _ = _run(["simulate", str(_write(tmp_path, cfg)), "--out", str(out)], capsys)
    rep = json.loads((out / "value_report.json").read_text())
    assert code in (0, 1)
    assert "solver_value" in rep and rep["episodes"] == 400


def test_verify_runs(tmp_path, capsys):
    cfg = dict(BASE, variant="orthogonal", field={"kind": "constant", "p": 3},
               domain={"kind": "box", "lo": [-1, -1], "hi": [1, 1]},
               verify={"samples": 50, "annuli": 20})
    code, _ = _run(["verify", str(_write(tmp_path, cfg)), "--out", str(tmp_path / "o")], capsys)
    rep = json.loads((tmp_path / "o" / "verify_report.json").read_text())
    assert code == 0 and rep["checks"]["ok"]


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.yaml")))
def test_shipped_configs_validate(path):
    raw = yaml.safe_load(path.read_text())
    parse_config(raw, raw["subcommand"])


def test_schema_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config(dict(BASE, numerics={"warp": 9}))
    assert load_schema()["additionalProperties"] is False
