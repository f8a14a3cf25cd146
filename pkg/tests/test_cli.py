from __future__ import annotations

import csv
import json
import shutil
import subprocess
from dataclasses import replace
from pathlib import Path

import pytest

from gridswitch.cli import main
from gridswitch.fixtures import t3, t3x
from gridswitch.grid import Grid, grid_to_dict, save_grid


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_grid(t3(), tmp_path / "t3.json")
    save_grid(t3x(), tmp_path / "t3x.json")
    return tmp_path


def _json(path):
    return json.loads(Path(path).read_text())


def test_h2_report_and_manifest(work):
    assert main(["h2", "--grid", "t3.json", "--method", "all", "--quiet"]) == 0
    rep = _json("report.json")
    assert rep["h2_squared_closed"] == pytest.approx(1.75, abs=1e-8)
    assert rep["h2_squared_gramian"] == pytest.approx(1.75, abs=1e-8)
    man = _json("report.manifest.json")
    assert man["command"] == "h2"
    assert man["flags"]["method"] == "all"
    assert len(man["grid_sha256"]) == 64
    assert set(man) >= {"seed", "version", "duration_s"}


def test_switch_selects_stronger_corridor(work):
    assert main(["switch", "--grid", "t3x.json", "--n-on", "1", "--trace", "trace.csv", "--quiet"]) == 0
    assert _json("plan.json")["selected"] == ["l3-l4"]
    rows = list(csv.reader(open("trace.csv")))
    assert rows[0] == ["iteration", "line_id", "sensitivity", "selected", "h2_squared_after"]
    assert {r[1]: r[3] for r in rows[1:]} == {"l2-l4": "0", "l3-l4": "1"}
    assert Path("plan.manifest.json").exists()


def test_missing_grid_is_usage_error(work, capsys):
    assert main(["h2"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err and "--grid" in err


def test_unknown_subcommand_is_usage_error(work):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_bad_flag_value_is_usage_error(work):
    with pytest.raises(SystemExit) as exc:
        main(["h2", "--grid", "t3.json", "--method", "exact"])
    assert exc.value.code == 1


def test_invalid_grid_is_domain_error(work, capsys):
    data = grid_to_dict(t3())
    data["branches"].append({"from": "g1", "to": "g2", "susceptance": 1.0})
    Path("bad.json").write_text(json.dumps(data))
    assert main(["h2", "--grid", "bad.json"]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "GridValidation"
    assert "E_SF must connect SF to load" in err["message"]


def test_closed_form_on_heterogeneous_grid_is_domain_error(work, capsys):
    grid = t3()
    het = Grid(tuple(replace(b, disturbance=2.0) if b.id == "l2" else b for b in grid.buses), grid.branches)
    save_grid(het, "het.json")
    assert main(["h2", "--grid", "het.json", "--method", "closed"]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "AssumptionViolated"
    assert main(["h2", "--grid", "het.json", "--method", "closed", "--assume-uniform", "--quiet"]) == 0


def test_equilibrium_and_linearize_outputs(work):
    assert main(["equilibrium", "--grid", "t3x.json", "--quiet"]) == 0
    eq = _json("eq.json")
    assert set(eq) >= {"theta0", "wp", "flows", "slack_injection"}
    assert "l3-l4" not in eq["wp"]
    assert main(["linearize", "--grid", "t3.json", "--quiet"]) == 0
    ss = _json("ss.json")
    assert len(ss["A"]) == 4 and len(ss["A"][0]) == 4
    assert ss["states"] == ["alpha:g2", "alpha:l1", "alpha:l2", "omega:g2"]
    assert ss["hurwitz"] is True


def test_simulate_is_byte_deterministic(work):
    args = ["simulate", "--grid", "t3.json", "--tf", "40", "--quiet"]
    assert main(args) == 0
    first = Path("sim.csv").read_bytes()
    stats_first = Path("sim.stats.json").read_bytes()
    assert main(args + ["--threads", "1"]) == 0
    assert Path("sim.csv").read_bytes() == first
    assert Path("sim.stats.json").read_bytes() == stats_first
    header = first.decode().splitlines()[0].split(",")
    assert header == ["time", "dtheta:g1-l1", "dtheta:g2-l2", "dtheta:l1-l2", "df:g2"]
    stats = json.loads(stats_first)
    assert set(stats) == {"S_average", "S_accumulative", "E_abs_dtheta", "E_abs_df"}
    assert _json("sim.manifest.json")["seed"] == 42


def test_simulate_with_plan(work):
    assert main(["switch", "--grid", "t3x.json", "--n-on", "1", "--quiet"]) == 0
    assert main(["simulate", "--grid", "t3x.json", "--plan", "plan.json", "--tf", "40",
                 "--out", "after.csv", "--stats", "after.json", "--quiet"]) == 0
    assert main(["simulate", "--grid", "t3x.json", "--tf", "40", "--out", "before.csv", "--quiet"]) == 0
    after = _json("after.json")["E_abs_dtheta"]
    before = _json("before.stats.json")["E_abs_dtheta"]
    assert sum(after.values()) < sum(before.values())


def test_twelve_significant_digits(work):
    assert main(["switch", "--grid", "t3x.json", "--n-on", "2", "--quiet"]) == 0
    text = Path("plan.json").read_text()
    for token in text.replace(",", " ").split():
        token = token.strip("[]{}\"")
        try:
            float(token)
        except ValueError:
            continue
        digits = token.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(digits) <= 12


def test_selfcheck_passes(work, capsys):
    assert main(["selfcheck"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert "SKIP random-heterogeneous/closed-vs-gramian" in out
    assert _json("selfcheck.json")["passed"] is True


@pytest.mark.skipif(shutil.which("gridswitch") is None, reason="console script not installed")
def test_console_script(work):
    proc = subprocess.run(["gridswitch", "h2", "--grid", "t3.json", "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run(["gridswitch", "h2"], capture_output=True, text=True)
    assert proc.returncode == 1
