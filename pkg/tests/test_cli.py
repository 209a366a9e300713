import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

from tmpc.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_TRIALS,
    ConfigError,
    RunConfig,
    cell_values,
    default_config_dict,
    main,
    read_trials,
    recompute_summary,
    run_batch,
)
from tmpc.sim import ScenarioTemplate, sample_scenario
from tmpc.stats import MissingCell

POLICIES = Path(__file__).parent / "policies"


def write_config(tmp_path, **kw):
    d = {"policies": ["CV"], "scenarios": ["three"], "trials": 2, "timeout": 12.0, "out": str(tmp_path / "out")}
    d.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    return p


def test_defaults_round_trip(tmp_path, capsys):
    assert main(["defaults"]) == EXIT_OK
    d = json.loads(capsys.readouterr().out)
    assert d == json.loads(json.dumps(default_config_dict()))
    cfg = RunConfig.from_dict(d)
    cfg.validate()
    assert cfg.costs["a_t"] == 5.0 and cfg.ballbot["T"] == 0.1


@pytest.mark.parametrize(
    "bad",
    [
        {"policies": ["NOPE"]},
        {"world": "Gazebo"},
        {"scenarios": ["seven"]},
        {"trials": 0},
        {"colour": "red"},
        {"world": "external"},
        {"orca": {"max_speed": -1.0}},
        {"ballbot": {"discretization": "paper"}},
    ],
)
def test_config_errors_exit_2(tmp_path, bad):
    assert main(["run", "--config", str(write_config(tmp_path, **bad))]) == EXIT_CONFIG


def test_unreadable_config_exit_2(tmp_path):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    p = tmp_path / "x.json"
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.load(p)


def test_empty_world_smoke(tmp_path):
    cfg = RunConfig.from_dict({"policies": ["T-MPC-CV"], "scenarios": ["empty"], "trials": 1, "out": str(tmp_path)})
    batch = run_batch(cfg)
    (row,) = batch.summary
    assert row.n == 1 and row.mean_D == math.inf
    nominal = math.hypot(3.6, 4.5) / 0.8
    assert nominal <= row.mean_T <= 1.3 * nominal


def test_run_writes_outputs_and_is_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, policies=["CV", "ORCA"], scenarios=["three", "four"])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "a"), "--dump-model"]) == EXIT_OK
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("summary.csv", "trials.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert json.loads((tmp_path / "a" / "model.json").read_text())["closed_loop_spectral_radius"] < 1
    rows = read_trials(tmp_path / "a" / "trials.csv")
    assert len(rows) == 8
    assert list(rows[0]) == ["trial_id", "policy", "scenario", "D", "T", "collided", "seed"]
    traj = tmp_path / "a" / "trajectories" / "ORCA" / "four" / "1.jsonl"
    agents = {json.loads(l)["agent"] for l in traj.read_text().splitlines()}
    assert agents == {"robot", "human0", "human1", "human2", "human3"}


def test_cli_overrides(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "ov"
    code = main(["run", "--config", str(cfg), "--policy", "ORCA", "--scenario", "five", "--trials", "1",
                 "--seed", "9", "--out", str(out)])
    assert code == EXIT_OK
    (row,) = read_trials(out / "trials.csv")
    assert (row["policy"], row["scenario"], row["seed"]) == ("ORCA", "five", "9")


def test_summary_matches_offline_recompute(tmp_path):
    cfg = RunConfig.from_dict({"policies": ["CV", "ORCA"], "scenarios": ["four"], "trials": 4, "timeout": 12.0,
                               "out": str(tmp_path)})
    batch = run_batch(cfg)
    again = recompute_summary(tmp_path / "trials.csv", world="ORCA")
    assert len(again) == len(batch.summary)
    for a, b in zip(batch.summary, again):
        assert a == b
    # and against an independent read of the CSV
    with open(tmp_path / "trials.csv") as fh:
        D = [float(r["D"]) for r in csv.DictReader(fh) if r["policy"] == "ORCA"]
    assert batch.summary[1].mean_D == pytest.approx(np.mean(D), abs=1e-15)
    assert batch.summary[1].std_D == pytest.approx(np.std(D, ddof=1), abs=1e-15)


def test_parallel_matches_serial(tmp_path):
    base = {"policies": ["CV", "T-MPC-CV"], "scenarios": ["three"], "trials": 3, "timeout": 12.0}
    serial = run_batch(RunConfig.from_dict({**base, "out": str(tmp_path / "s")}))
    par = run_batch(RunConfig.from_dict({**base, "workers": 2, "out": str(tmp_path / "p")}))
    assert (tmp_path / "s" / "trials.csv").read_bytes() == (tmp_path / "p" / "trials.csv").read_bytes()
    assert serial.summary == par.summary


def test_policies_share_human_endpoints(tmp_path):
    cfg = RunConfig.from_dict({"policies": ["CV", "ORCA"], "scenarios": ["five"], "trials": 3, "timeout": 12.0,
                               "out": str(tmp_path), "stop_on_collision": False})
    batch = run_batch(cfg)
    by_policy = {}
    for r in batch.records:
        by_policy.setdefault(r.policy, []).append(r.result.human_trajs)
    t = ScenarioTemplate.named("five")
    for k in range(3):
        sc = sample_scenario(t, k, 0)
        for p in ("CV", "ORCA"):
            starts = [tuple(h.samples[0]) for h in by_policy[p][k]]
            assert starts == [tuple(s) for s in sc.starts]


def test_failed_trials_exit_3(tmp_path):
    cfg = write_config(tmp_path, world="external",
                       external={"command": f"{sys.executable} {POLICIES / 'broken.py'}"}, trials=1)
    assert main(["run", "--config", str(cfg)]) == EXIT_TRIALS
    out = tmp_path / "out"
    assert "ExternalPolicyError" in (out / "errors.txt").read_text()
    (row,) = read_trials(out / "trials.csv")
    assert math.isnan(row["D"])


def test_external_world_runs(tmp_path):
    cfg = write_config(tmp_path, world="external", policies=["CV"], trials=1, timeout=3.0,
                       external={"command": f"{sys.executable} {POLICIES / 'goal_seeker.py'}"})
    assert main(["run", "--config", str(cfg)]) == EXIT_OK


def test_compare_and_stats(tmp_path, capsys):
    cfg = RunConfig.from_dict({"policies": ["CV", "ORCA"], "scenarios": ["three"], "trials": 4, "timeout": 12.0,
                               "out": str(tmp_path)})
    run_batch(cfg)
    path = tmp_path / "trials.csv"
    capsys.readouterr()
    assert main(["compare", "--a", f"{path}:ORCA", "--b", f"{path}:CV", "--metric", "T"]) == EXIT_OK
    report = json.loads((tmp_path / "comparison.json").read_text())
    assert report["metric"] == "T" and report["n_a"] == 4
    assert 0 <= report["p_one"] <= report["p_two"] <= 1
    assert main(["compare", "--a", str(path), "--b", f"{path}:CV"]) == EXIT_CONFIG
    assert main(["compare", "--a", f"{path}:NOPE", "--b", f"{path}:CV"]) == EXIT_CONFIG
    with pytest.raises(MissingCell):
        cell_values(f"{path}:CV:five", "D")
    capsys.readouterr()
    assert main(["stats", "--file", str(path)]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("policy,scenario,world,mean_D") and len(lines) == 3


def test_log_plans_written(tmp_path):
    cfg = write_config(tmp_path, policies=["V-MPC-CV"], scenarios=["three"], trials=1, timeout=1.0)
    assert main(["run", "--config", str(cfg), "--log-plans"]) == EXIT_OK
    plan = tmp_path / "out" / "plans" / "V-MPC-CV" / "three" / "0.jsonl"
    recs = [json.loads(l) for l in plan.read_text().splitlines()]
    assert len(recs) == 10 and all(len(r["costs"]) == 10 for r in recs)
