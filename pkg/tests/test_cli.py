import copy
import json
import subprocess
import sys

import numpy as np
import pytest

from ncsroute.cli import main
from ncsroute.config import bundled_config_path, load_config
from ncsroute.h2 import impact
from ncsroute.report import ReportDocument, read_sweep_csv
from ncsroute.system import assemble_closed_loop

BASE = json.loads(bundled_config_path().read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def report(out):
    return ReportDocument.from_json(out)


def write_cfg(tmp_path, doc, name="c.cfg"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_analyze_identity(capsys):
    code, out, _ = run(capsys, "analyze", "--config", "paper_sec5.cfg", "--R", "1,0;0,1")
    assert code == 0
    cfg = load_config("paper_sec5.cfg")
    rep = report(out)
    assert rep.command == "analyze" and rep.config_digest == cfg.digest
    ref = impact(assemble_closed_loop(cfg.plant, cfg.controller, np.eye(2))).ratio
    assert rep.results["ratio"] == ref


def test_analyze_unstable(capsys):
    code, out, err = run(capsys, "analyze", "--R", "-1,0;0,-1")
    assert code == 2
    assert report(out).results["stable"] is False
    assert "spectral abscissa" in err


@pytest.mark.parametrize("cmd", ["bounds", "certify", "trajectory", "montecarlo"])
def test_unstable_routing_exit_code(capsys, cmd):
    code, _, err = run(capsys, cmd, "--R", "0,0;0,0")
    assert code == 2 and "abscissa" in err


def test_sweep_csv(capsys, tmp_path):
    out_path = tmp_path / "surface.csv"
    code, out, _ = run(capsys, "sweep", "--grid", "0:1.5:0.25", "--format", "csv", "--out", str(out_path))
    assert code == 0
    grid = read_sweep_csv(out_path.read_text())
    assert len(grid.cells) == 49
    assert out_path.read_text().splitlines()[0] == "R11,R22,stable,ratio,h2_perf_sq,h2_resid_sq"
    assert report(out).results["cells"] == 49
    code, out, _ = run(capsys, "sweep", "--grid", "0:1.5:0.25", "--format", "csv")
    assert out == out_path.read_text()


def test_search_and_stealthy(capsys):
    code, out, _ = run(capsys, "search", "--restarts", "3", "--max-evals", "200", "--seed", "4")
    assert code == 0 and report(out).results["restarts"] == 3
    code, out, _ = run(capsys, "stealthy", "--eps-tr", "2", "--restarts", "3", "--max-evals", "200")
    res = report(out).results
    assert code == 0 and res["residual_energy"] <= 2 + 1e-9
    assert res["constraint"] == {"ResidualCap": {"epsilon_tr": 2.0}}


def test_stealthy_unattainable(capsys):
    code, _, err = run(capsys, "stealthy", "--eps-tr", "1e-9", "--restarts", "2", "--max-evals", "50")
    assert code == 4 and "unattainable" in err


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--R", "0.9,0;0,0.9", "--alpha-star", "0.2")
    res = report(out).results
    assert code == 0
    assert res["theorem2"]["bound"] >= res["impact"]["ratio"]
    assert res["theorem2"]["alpha_star"] == 0.2
    assert res["stealth"]["modes"]


def test_bounds_margin_violation(capsys):
    code, _, err = run(capsys, "bounds", "--alpha-star", "0.9")
    assert code == 4 and "margin" in err


def test_bounds_rank_deficient(capsys, tmp_path):
    doc = copy.deepcopy(BASE)
    doc["controller"]["B_what_sigma"] = 0.0
    code, _, err = run(capsys, "bounds", "--config", write_cfg(tmp_path, doc))
    assert code == 4 and "full column rank" in err


def test_certify(capsys):
    code, out, _ = run(capsys, "certify", "--alpha", "1.0")
    res = report(out).results
    assert code == 0
    assert res["performance"]["passed"] and res["residual"]["passed"]
    assert res["alpha"]["feasible"]
    assert res["ratio_bisection"] == pytest.approx(res["ratio_impact"], rel=1e-6)


def test_trajectory_csv(capsys):
    code, out, _ = run(capsys, "trajectory", "--format", "csv", "--points", "5", "--t-max", "10")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "T,ratio" and len(lines) == 6


def test_montecarlo(capsys):
    code, out, _ = run(capsys, "montecarlo", "--paths", "50", "--t-end", "2", "--step", "0.005")
    res = report(out).results
    assert code == 0 and res["paths"] == 50 and res["performance_energy"] > 0


@pytest.mark.parametrize("argv", [
    ["analyze", "--R", "1,0;0"],
    ["analyze", "--R", "a,b;c,d"],
    ["frobnicate"],
    ["analyze", "--format", "xml"],
    ["analyze", "--config", "/nonexistent/none.cfg"],
    ["analyze", "--format", "csv"],
])
def test_usage_and_config_errors(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 3 and err.startswith("ncsroute:")


def test_wrong_routing_size(capsys):
    code, _, err = run(capsys, "analyze", "--R", "1")
    assert code == 4 and "R" in err


def test_bad_design_fails_fast(capsys, tmp_path):
    doc = copy.deepcopy(BASE)
    doc["controller"]["K"] = [[0.0, 0.0]] * 3
    code, _, err = run(capsys, "analyze", "--config", write_cfg(tmp_path, doc))
    assert code == 3 and "controller" in err


def test_deterministic_output(capsys):
    argv = ["search", "--restarts", "3", "--max-evals", "150"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    da, db = json.loads(a), json.loads(b)
    da.pop("wall_time"), db.pop("wall_time")
    assert da == db


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "ncsroute.cli", "analyze"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["stable"] is True


def test_run_command_matches_main(capsys):
    from ncsroute.cli import run_command
    assert run_command(["analyze", "--R", "10,0;0,10"]) == 0
    assert report(capsys.readouterr().out).results["stable"] is True
