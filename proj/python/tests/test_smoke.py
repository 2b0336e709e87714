import json
import math
import os
import shutil
import subprocess

import numpy as np
import pytest

import loopamdp

SOURCE_DIR = os.environ.get("LOOP_SOURCE_DIR", os.path.join(os.path.dirname(__file__), "..", ".."))
CLI = os.environ.get("LOOP_CLI") or shutil.which("loopamdp")

SMALL_CONFIG = """
run.name = smoke
run.T = 2048
run.seeds = 1-2
instance.kind = tabular-random
instance.states = 2
instance.actions = 2
instance.seed = 4
agent.name = loop
class.rho = 0.5
"""


def two_state_cycle():
    p = np.array([[0.0, 1.0], [1.0, 0.0]])
    r = np.array([[1.0], [0.0]])
    return loopamdp.TabularAMDP(2, 1, p, r, 1.0)


def test_evi_on_cycle():
    sol = loopamdp.evi_solve(two_state_cycle())
    assert sol.j_star == pytest.approx(0.5, abs=1e-7)
    assert sol.v_star.max() + sol.v_star.min() == pytest.approx(0.0, abs=1e-9)
    assert sol.q_star.shape == (2, 1)


def test_model_json_round_trip():
    m = loopamdp.generate_instance("tabular-random", states=3, actions=2, seed=5)
    back = loopamdp.TabularAMDP.from_json(m.to_json())
    assert np.array_equal(back.transition, m.transition)
    assert np.array_equal(back.reward, m.reward)


def test_invalid_model_raises_value_error():
    with pytest.raises(ValueError):
        loopamdp.TabularAMDP(2, 1, np.array([[0.5, 0.4], [1.0, 0.0]]), np.zeros((2, 1)), 1.0)


def test_oracle_gain_matches_evi():
    m = loopamdp.generate_instance("tabular-random", states=6, actions=3, seed=2)
    sol = loopamdp.evi_solve(m)
    gain = loopamdp.stationary_average_reward(m, loopamdp.greedy_policy(sol.q_star))
    assert gain == pytest.approx(sol.j_star, abs=1e-6)
    errs = loopamdp.bellman_error_table(m, sol.q_star, sol.j_star)
    assert np.abs(errs).max() < 1e-6


def test_dimensions():
    binary = [[(mask >> x) & 1 for x in range(3)] for mask in range(8)]
    assert loopamdp.eluder_dim(np.array(binary, dtype=float), 0.5)["dimension"] == 3
    constant = [[0.1 * i] * 3 for i in range(11)]
    assert loopamdp.eluder_dim(np.array(constant), 0.3)["dimension"] == 1
    dirac = np.eye(3)
    assert loopamdp.de_dim(np.array(binary, dtype=float), dirac, 0.5)["dimension"] >= 1
    w = loopamdp.effective_dim(np.array([[1.0, 0.0]]), 1.0)
    assert w["dimension"] >= 1


def test_slope_and_tv():
    cum = [math.sqrt(t) for t in range(1, 4097)]
    assert loopamdp.fit_slope(cum, 64, 4096)["slope"] == pytest.approx(0.5, abs=1e-9)
    assert loopamdp.tv_distance([0.5, 0.5], [1.0, 0.0]) == pytest.approx(0.5)


def test_run_and_report(tmp_path):
    summary = loopamdp.run_experiment(SMALL_CONFIG, output_dir=str(tmp_path))
    assert summary["n_ok"] == 2
    assert summary["agent"] == "loop"
    for seed in summary["seeds"]:
        assert seed["decomposition"]["residual"] <= 1e-9
        assert (tmp_path / seed["trace_file"]).exists()
    table = loopamdp.report(str(tmp_path))
    assert "smoke" in table
    again = loopamdp.run_experiment(SMALL_CONFIG, output_dir=str(tmp_path / "again"))
    assert (tmp_path / "smoke.summary.json").read_bytes() == (tmp_path / "again" / "smoke.summary.json").read_bytes()
    assert again == summary


def test_bad_config_raises_value_error():
    with pytest.raises(ValueError):
        loopamdp.run_experiment("run.unknown = 3")


@pytest.mark.skipif(CLI is None, reason="command line tool not built")
def test_cli_exit_codes(tmp_path):
    cfg = tmp_path / "smoke.cfg"
    cfg.write_text(SMALL_CONFIG + "run.output_dir = " + str(tmp_path / "out") + "\n")
    assert subprocess.run([CLI, "run", str(cfg)], capture_output=True).returncode == 0
    report = subprocess.run([CLI, "report", str(tmp_path / "out")], capture_output=True, text=True)
    assert report.returncode == 0 and "smoke" in report.stdout

    bad = tmp_path / "bad.cfg"
    bad.write_text("run.T = 10\n")
    assert subprocess.run([CLI, "run", str(bad)], capture_output=True).returncode == 1
    assert subprocess.run([CLI, "report", str(tmp_path / "empty")], capture_output=True).returncode == 2
    assert subprocess.run([CLI, "sweep", str(tmp_path / "*.cfg")], capture_output=True).returncode == 1

    inst = tmp_path / "cycle.json"
    inst.write_text(two_state_cycle().to_json())
    evi = subprocess.run([CLI, "evi", str(inst)], capture_output=True, text=True)
    assert evi.returncode == 0
    assert json.loads(evi.stdout)["j_star"] == pytest.approx(0.5, abs=1e-7)

    cls = tmp_path / "binary.json"
    cls.write_text(json.dumps({"table": [[(m >> x) & 1 for x in range(3)] for m in range(8)]}))
    out = subprocess.run([CLI, "complexity", "eluder", str(cls), "--eps", "0.5"], capture_output=True, text=True)
    assert out.returncode == 0 and json.loads(out.stdout)["dimension"] == 3

    trace = tmp_path / "out" / "smoke.seed1.csv"
    audit = subprocess.run([CLI, "complexity", "audit", str(cfg), str(trace)], capture_output=True, text=True)
    assert audit.returncode == 0
    assert json.loads(audit.stdout)["residual"] <= 1e-9
