import csv
import json

import pytest

from pinlab.cli import main

VOTER = {
    "model": {"voter": {"rho": 0.5}},
    "graph": {"family": "complete", "n": 30},
    "run": {"seed": 3, "replicas": 2, "samples": 50},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_simulate_writes_stats(tmp_path):
    cfg = write_cfg(tmp_path, {**VOTER, "output": {"trajectory": True}})
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "a") == 0
    stats = json.loads((tmp_path / "a" / "stats.json").read_text())
    assert 0 <= stats["theta_time_average"][1] <= 1
    assert stats["config"]["model"] == VOTER["model"]
    header = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,theta_0,theta_1"


def test_simulate_is_byte_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, VOTER)
    run_cli("simulate", "--config", cfg, "--out", tmp_path / "a")
    run_cli("simulate", "--config", cfg, "--out", tmp_path / "b", "--threads", 2)
    assert (tmp_path / "a" / "stats.json").read_bytes() == (tmp_path / "b" / "stats.json").read_bytes()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write_cfg(tmp_path, VOTER)
    run_cli("simulate", "--config", cfg, "--out", tmp_path / "a")
    run_cli("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 99)
    a = json.loads((tmp_path / "a" / "stats.json").read_text())
    b = json.loads((tmp_path / "b" / "stats.json").read_text())
    assert b["config"]["run"]["seed"] == 99 and a != b


def test_summary_round_trip(tmp_path):
    cfg = write_cfg(tmp_path, VOTER)
    run_cli("simulate", "--config", cfg, "--out", tmp_path / "a")
    summary = str(tmp_path / "a" / "stats.json")
    assert run_cli("simulate", "--config", summary, "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "stats.json").read_bytes() == (tmp_path / "b" / "stats.json").read_bytes()


def test_missing_graph_file(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    cfg = write_cfg(tmp_path, {**VOTER, "graph": {"file": str(missing)}})
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "a") == 2
    assert str(missing) in capsys.readouterr().err


def test_graph_file_input(tmp_path):
    (tmp_path / "g.txt").write_text("3 4\n0 1\n1 0\n1 2\n2 1\n")
    cfg = write_cfg(tmp_path, {**VOTER, "graph": {"file": str(tmp_path / "g.txt")}})
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "a") == 0


@pytest.mark.parametrize("run,field", [({"samples": 0}, "run.samples"),
                                       ({"replicas": 1.5}, "run.replicas"),
                                       ({"seed": "x"}, "run.seed")])
def test_config_errors_name_the_field(tmp_path, capsys, run, field):
    cfg = write_cfg(tmp_path, {**VOTER, "run": {**VOTER["run"], **run}})
    assert run_cli("simulate", "--config", cfg) == 2
    assert field in capsys.readouterr().err


def test_bad_model_is_config_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {**VOTER, "model": {"sis": {"b": 0.6, "c": 0.6}}})
    assert run_cli("simulate", "--config", cfg) == 2
    assert "model" in capsys.readouterr().err


def test_nonergodic_needs_acknowledgement(tmp_path):
    cfg = write_cfg(tmp_path, {**VOTER, "model": {"antivoter": {}}})
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "a") == 2
    assert run_cli("simulate", "--config", cfg, "--out", tmp_path / "a",
                   "--allow-nonergodic") == 0


def test_missing_config_file(tmp_path):
    assert run_cli("simulate", "--config", tmp_path / "none.json") == 2


def test_mixing_gap_complete_exact(capsys):
    assert run_cli("mixing-gap", "--family", "complete", "--n", 6, "--exact") == 0
    out = capsys.readouterr().out
    assert "W = 0.0 (0)" in out and "exact = True" in out


def test_mixing_gap_star_witnesses(tmp_path, capsys):
    assert run_cli("mixing-gap", "--family", "star", "--n", 10, "--exact",
                   "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "S = [" in out and "U = [" in out
    res = json.loads((tmp_path / "mixing_gap.json").read_text())
    assert res["exact"] and res["value"] >= 0.4


def test_mixing_gap_exact_cap(capsys):
    assert run_cli("mixing-gap", "--family", "complete", "--n", 30, "--exact") == 2
    assert "--search" in capsys.readouterr().err


def test_mixing_gap_search(capsys):
    assert run_cli("mixing-gap", "--family", "star", "--n", 30, "--search") == 0
    assert "exact = False" in capsys.readouterr().out


def test_drift_check(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"sis": {"b": 0.6, "c": 0.3, "alpha": 0.01}},
                               "graph": {"family": "er", "n": 10, "p": 0.5},
                               "analysis": {"configs": 5}})
    assert run_cli("drift-check", "--config", cfg, "--out", tmp_path / "d") == 0
    rows = list(csv.DictReader((tmp_path / "d" / "drift.csv").open()))
    assert len(rows) == 5
    summary = json.loads((tmp_path / "d" / "drift.json").read_text())
    assert summary["W_exact"] and summary["pairwise_bound_holds"]


def test_concentration_sis_sweep_rows(tmp_path):
    cfg = write_cfg(tmp_path, {
        "model": {"sis": {"b": 0.6, "c": 0.3, "alpha": 0.01}},
        "run": {"samples": 20, "replicas": 2},
        "analysis": {"mode": "atm", "family": "er", "p": "10*log(n)/n", "ns": [40, 60],
                     "seeds": [1, 2], "delta": 0.02}})
    assert run_cli("concentration", "--config", cfg, "--out", tmp_path / "c") == 0
    rows = list(csv.DictReader((tmp_path / "c" / "concentration.csv").open()))
    assert [(r["n"], r["seed"]) for r in rows] == [("40", "1"), ("40", "2"), ("60", "1"),
                                                   ("60", "2")]


def test_concentration_sirs_double_sweep(tmp_path):
    cfg = write_cfg(tmp_path, {
        "model": {"sirs": {"b": 0.6, "c": 0.2, "d": 0.1, "alpha": 0.05}},
        "run": {"samples": 20, "replicas": 2},
        "analysis": {"mode": "vanishing_alpha", "alphas": [0.05, 0.01], "ns": [30, 50],
                     "p": 0.3, "delta": 0.05}})
    assert run_cli("concentration", "--config", cfg, "--out", tmp_path / "c") == 0
    rows = list(csv.DictReader((tmp_path / "c" / "concentration.csv").open()))
    assert [(float(r["alpha"]), int(r["n"])) for r in rows] == [(0.05, 30), (0.05, 50),
                                                                (0.01, 30), (0.01, 50)]


def test_concentration_delta_below_slack(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "model": {"sirs": {"b": 0.6, "c": 0.2, "d": 0.1, "alpha": 0.1}},
        "graph": {"family": "complete", "n": 20},
        "analysis": {"delta": 0.01}})
    assert run_cli("concentration", "--config", cfg, "--out", tmp_path / "c") == 2
    assert "delta > zeta" in capsys.readouterr().err


def test_concentration_unknown_certificate(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {
        "model": {"alphabet": 3, "rho": 0.5, "P": [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]],
                  "phi": {"0": [[1, 0, 0], [0, 0, 1], [0, 1, 0]],
                          "1": [[0, 1, 0], [0, 1, 0], [1, 0, 0]],
                          "2": [[0, 0, 1], [1, 0, 0], [0, 0, 1]]}},
        "graph": {"family": "complete", "n": 20},
        "analysis": {"delta": 0.05}})
    assert run_cli("concentration", "--config", cfg, "--out", tmp_path / "c") == 2
    assert "no known certificate" in capsys.readouterr().err


def test_concentration_single_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, {**VOTER, "analysis": {"delta": 0.05}})
    for d in ("a", "b"):
        assert run_cli("concentration", "--config", cfg, "--out", tmp_path / d) == 0
    for f in ("concentration.csv", "concentration.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_ode_command(tmp_path):
    cfg = write_cfg(tmp_path, {"model": {"sis": {"b": 0.6, "c": 0.3}},
                               "analysis": {"theta0": [0.9, 0.1], "t_end": 100, "dt": 0.01}})
    assert run_cli("ode", "--config", cfg, "--out", tmp_path / "o") == 0
    final = json.loads((tmp_path / "o" / "ode.json").read_text())["final"]
    assert final[1] == pytest.approx(0.5, abs=1e-4)


def test_ode_bad_initial_condition(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"model": {"voter": {}}, "analysis": {"theta0": [0.7, 0.7]}})
    assert run_cli("ode", "--config", cfg) == 2
    assert "analysis.theta0" in capsys.readouterr().err
