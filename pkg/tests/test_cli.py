import csv
import json
import sys
from pathlib import Path

import pytest

from spotkit.cli import main
from spotkit.runconfig import apply_overrides, build, parse_value
from spotkit.optimize import ConfigError

HELPER = str(Path(__file__).parent / "helpers" / "ext_objective.py")

SPHERE_CFG = """
[spot]
fun_evals = {evals}
seed = {seed}

[design]
init_size = 10

[objective]
builtin = "fun_sphere"

[[space]]
name = "x0"
type = "num"
lower = -1.0
upper = 1.0

[output]
dir = "{out}"
"""


def write_cfg(tmp_path, evals=15, seed=123, out="run", text=None):
    p = tmp_path / f"cfg_{out}.toml"
    p.write_text(text if text is not None else SPHERE_CFG.format(evals=evals, seed=seed, out=out))
    return p


def test_run_writes_outputs(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert main(["run", "--config", str(cfg)]) == 0
    out = tmp_path / "run"
    for name in ("state.json", "run_log.jsonl", "progress.csv", "results.json"):
        assert (out / name).exists()
    rows = list(csv.reader((out / "progress.csv").open()))
    assert rows[0] == ["evals", "best_y"] and len(rows) == 16
    log = [json.loads(line) for line in (out / "run_log.jsonl").read_text().splitlines()]
    assert len(log) == 15
    assert {"iter", "phase", "x_coded", "x_natural", "y", "success", "best_y", "elapsed_s"} <= set(log[0])
    assert "min y:" in capsys.readouterr().out


def test_resume_zero_budget_is_noop(tmp_path):
    cfg = write_cfg(tmp_path, evals=12)
    assert main(["run", "--config", str(cfg)]) == 0
    state = tmp_path / "run" / "state.json"
    before = state.read_text()
    assert main(["resume", "--state", str(state), "--add-evals", "0"]) == 0
    after = json.loads(state.read_text())
    assert after["archive"] == json.loads(before)["archive"]


def test_resume_equivalence(tmp_path):
    assert main(["run", "--config", str(write_cfg(tmp_path, evals=20, out="full"))]) == 0
    assert main(["run", "--config", str(write_cfg(tmp_path, evals=12, out="part"))]) == 0
    st = tmp_path / "part" / "state.json"
    assert main(["resume", "--state", str(st), "--add-evals", "8"]) == 0
    assert st.read_bytes() == (tmp_path / "full" / "state.json").read_bytes()


def test_corrupted_state_exit_2(tmp_path):
    bad = tmp_path / "state.json"
    bad.write_text('{"schema_version": 1, "trunc')
    assert main(["resume", "--state", str(bad), "--add-evals", "3"]) == 2
    assert main(["export", "--state", str(bad), "--kind", "progress"]) == 2


@pytest.mark.parametrize(
    "override",
    ["spot.fun_evals=0", "spot.bogus=1", "spot.infill_criterion='all'", "surrogate.cod_type='zz'", "nosuch.x=1"],
)
def test_config_errors_exit_2(tmp_path, override):
    assert main(["run", "--config", str(write_cfg(tmp_path)), "--set", override]) == 2


def test_missing_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 2


def test_override_precedence_last_wins(tmp_path):
    doc = apply_overrides({"spot": {"fun_evals": 15}}, ["spot.fun_evals=20", "spot.fun_evals=11"])
    assert doc["spot"]["fun_evals"] == 11
    setup = build(doc | {"objective": {"builtin": "fun_sphere"}})
    assert setup.config.fun_evals == 11


def test_parse_value_types():
    assert parse_value("3") == 3
    assert parse_value("2.5") == 2.5
    assert parse_value("true") is True
    assert parse_value("inf") == float("inf")
    assert parse_value("[1, 2]") == [1, 2]
    assert parse_value("hello") == "hello"


def test_override_into_non_table():
    with pytest.raises(ConfigError):
        apply_overrides({"spot": 3}, ["spot.seed=1"])


def test_builtin_default_bounds():
    setup = build({"objective": {"builtin": "fun_branin"}})
    assert setup.space.k == 2
    assert setup.config.seed == 123
    assert setup.objective["fun_control"]["seed"] == 123


def test_objective_must_be_unique():
    with pytest.raises(ConfigError):
        build({"objective": {"builtin": "fun_sphere", "external": {"command": ["x"]}}})
    with pytest.raises(ConfigError):
        build({"objective": {}})


def ext_cfg(tmp_path, mode, timeout=5.0, evals=12):
    cmd = json.dumps([sys.executable, HELPER, mode])
    text = f"""
[spot]
fun_evals = {evals}
[design]
init_size = 3
[objective]
external = {{ command = {cmd}, timeout = {timeout} }}
[[space]]
name = "x"
lower = -1.0
upper = 1.0
[output]
dir = "ext_{mode}"
"""
    return write_cfg(tmp_path, out=mode, text=text)


def test_external_objective_run(tmp_path):
    assert main(["run", "--config", str(ext_cfg(tmp_path, "sphere"))]) == 0
    res = json.loads((tmp_path / "ext_sphere" / "results.json").read_text())
    assert res["success_count"] == 12 and res["best"]["y_min"] < 0.05


def test_external_garbage_exit_3(tmp_path):
    assert main(["run", "--config", str(ext_cfg(tmp_path, "garbage"))]) == 3
    state = json.loads((tmp_path / "ext_garbage" / "state.json").read_text())
    assert state["status"] == "aborted"


def test_external_always_timeout_exit_3_with_partial_state(tmp_path):
    assert main(["run", "--config", str(ext_cfg(tmp_path, "sleep", timeout=0.05))]) == 3
    state = json.loads((tmp_path / "ext_sleep" / "state.json").read_text())
    assert state["status"] == "aborted"
    assert state["counters"]["n_calls"] > 0
    assert "initial design" in state["error"]


def test_export_kinds(tmp_path, capsys):
    text = SPHERE_CFG.format(evals=14, seed=1, out="g").replace(
        '[[space]]', '[[space]]\nname = "x1"\ntype = "num"\nlower = -1.0\nupper = 1.0\n\n[[space]]', 1
    ).replace("[spot]", "[surrogate]\nn_theta = 2\n\n[spot]")
    cfg = write_cfg(tmp_path, out="g", text=text)
    assert main(["run", "--config", str(cfg)]) == 0
    st = str(tmp_path / "g" / "state.json")
    capsys.readouterr()
    assert main(["export", "--state", st, "--kind", "grid", "--i", "0", "--j", "1", "--res", "5"]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "xi,xj,mean,std" and len(rows) == 26
    assert main(["export", "--state", st, "--kind", "importance"]) == 0
    imp = json.loads(capsys.readouterr().out)
    assert max(v["importance"] for v in imp["variables"]) == 100.0
    assert main(["export", "--state", st, "--kind", "design-table"]) == 0
    table = capsys.readouterr().out
    header = [c.strip() for c in table.splitlines()[0].strip("|").split("|")]
    assert header[0] == "name" and header[-2:] == ["importance", "stars"]
    out = tmp_path / "p.csv"
    assert main(["export", "--state", st, "--kind", "progress", "--out", str(out)]) == 0
    assert out.read_text().startswith("evals,best_y")
    assert main(["export", "--state", st, "--kind", "grid"]) == 2


def test_list_functions(capsys):
    assert main(["list-functions"]) == 0
    text = capsys.readouterr().out
    assert "fun_branin" in text
    assert "fun_wingwt" in text and "unavailable" in text


def test_example_config_is_valid(tmp_path, capsys):
    assert main(["example-config"]) == 0
    cfg = tmp_path / "ex.toml"
    cfg.write_text(capsys.readouterr().out.replace('dir = "runs/sphere"', 'dir = "ex"'))
    assert main(["run", "--config", str(cfg), "--set", "spot.fun_evals=12"]) == 0


def test_log_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SPOTKIT_LOG", "DEBUG")
    assert main(["run", "--config", str(write_cfg(tmp_path, evals=11))]) == 0


def test_add_time_resume(tmp_path):
    assert main(["run", "--config", str(write_cfg(tmp_path, evals=11))]) == 0
    st = tmp_path / "run" / "state.json"
    assert main(["resume", "--state", str(st), "--add-time", "0.5"]) == 0
    assert json.loads((tmp_path / "run" / "results.json").read_text())["success_count"] > 11
