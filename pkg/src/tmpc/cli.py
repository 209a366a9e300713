"""Batch runner and command-line entry point.

    tmpc run --config cfg.json [--policy ID] [--scenario ID] [--trials N]
             [--seed S] [--out DIR] [--log-plans] [--dump-model]
    tmpc compare --a trials.csv:POLICY[:SCENARIO] --b ... --metric D|T
    tmpc stats --file trials.csv

Exit codes: 0 success, 2 configuration error, 3 some trial failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .ballbot import DEFAULT_Q, DEFAULT_R, BallbotParams, DiscreteModel, NonConvergence, Unstabilizable, synthesize
from .costs import DEFAULT_QG_SCALE, CostWeights, PersonalSpaceParams
from .external import ExternalPolicy
from .mpc import MpcConfig
from .orca import OrcaConfig
from .rollouts import ExternalRolloutPolicy
from .sim import (
    GOAL_TOLERANCE,
    SCENARIO_ZONES,
    TIMEOUT,
    CVController,
    ExternalController,
    ExternalHumans,
    MpcController,
    OrcaController,
    OrcaHumans,
    ScenarioTemplate,
    TrialResult,
    run_trial,
    sample_scenario,
)
from .stats import MissingCell, compare, sample_std
from .topology import AgentFilterConfig

POLICIES = ("V-MPC-CV", "V-MPC-ORCA", "T-MPC-CV", "T-MPC-ORCA", "V-MPC-EXTERNAL", "T-MPC-EXTERNAL", "ORCA", "CV", "external")
WORLDS = ("ORCA", "external")
TRIAL_FIELDS = ("trial_id", "policy", "scenario", "D", "T", "collided", "seed")
SUMMARY_FIELDS = ("policy", "scenario", "world", "mean_D", "std_D", "mean_T", "std_T", "n")

EXIT_OK, EXIT_CONFIG, EXIT_TRIALS = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    policies: list[str] = field(default_factory=lambda: ["T-MPC-CV"])
    scenarios: list[str] = field(default_factory=lambda: ["three"])
    world: str = "ORCA"
    trials: int = 100
    master_seed: int = 0
    out: str = "runs/default"
    workers: int = 1
    timeout: float = TIMEOUT
    goal_tolerance: float = GOAL_TOLERANCE
    stop_on_collision: bool = True
    log_plans: bool = False
    dump_model: bool = False
    dump_trajectories: bool = True
    # per-module blocks; missing keys take the library defaults
    mpc: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)
    topology: dict = field(default_factory=dict)
    ballbot: dict = field(default_factory=dict)
    orca: dict = field(default_factory=dict)
    humans: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)

    def validate(self) -> None:
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError(f"unknown policy {p!r}; choose from {', '.join(POLICIES)}")
        for s in self.scenarios:
            if s not in SCENARIO_ZONES:
                raise ConfigError(f"unknown scenario {s!r}; choose from {', '.join(SCENARIO_ZONES)}")
        if self.world not in WORLDS:
            raise ConfigError(f"unknown world {self.world!r}; choose from {', '.join(WORLDS)}")
        if not self.policies or not self.scenarios:
            raise ConfigError("need at least one policy and one scenario")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        needs_ext = self.world == "external" or any("EXTERNAL" in p.upper() for p in self.policies)
        if needs_ext and not self.external.get("command"):
            raise ConfigError("external policy or world needs external.command")
        # building every component surfaces bad module parameters now
        try:
            build_components(self)
        except (TypeError, ValueError, KeyError, NonConvergence, Unstabilizable) as exc:
            raise ConfigError(f"bad module parameters: {exc}") from exc

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if isinstance(cfg.policies, str):
            cfg.policies = [cfg.policies]
        if isinstance(cfg.scenarios, str):
            cfg.scenarios = [cfg.scenarios]
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            with open(path) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


def default_config_dict() -> dict:
    """Every tunable with its default, as a starting config file."""
    return {
        **{k: v for k, v in asdict(RunConfig()).items() if not isinstance(v, dict)},
        "mpc": {k: getattr(MpcConfig(), k) for k in ("N", "dt", "m", "subgoal_radius", "v_pref", "robot_radius",
                                                       "sign_convention", "winding_history")},
        "costs": {
            "a_g": 5.0,
            "a_d": 1.0,
            "a_t": 5.0,
            "Q_g": (DEFAULT_QG_SCALE * np.eye(2)).tolist(),
            **asdict(PersonalSpaceParams()),
        },
        "topology": asdict(AgentFilterConfig()),
        "ballbot": {
            **asdict(BallbotParams()),
            "Q": np.diag(DEFAULT_Q).tolist(),
            "R": np.diag(DEFAULT_R).tolist(),
            "discretization": "zoh",
            "verbatim_a": False,
            "ki": 0.0,
        },
        "orca": asdict(OrcaConfig()),
        "humans": {"see_robot": True},
        "scenario": {"preferred_speed": 0.8, "human_radius": 0.3, "robot_radius": 0.2, "spawn_margin": 0.1},
        "external": {"command": None},
    }


@dataclass(frozen=True, eq=False)
class Components:
    model: DiscreteModel
    mpc: MpcConfig
    orca: OrcaConfig
    ki: float


def build_components(cfg: RunConfig) -> Components:
    b = dict(cfg.ballbot)
    Q = np.diag(b.pop("Q", np.diag(DEFAULT_Q)))
    R = np.diag(b.pop("R", np.diag(DEFAULT_R)))
    mode = b.pop("discretization", "zoh")
    verbatim = bool(b.pop("verbatim_a", False))
    ki = float(b.pop("ki", 0.0))
    if ki < 0:
        raise ValueError("ballbot.ki must be >= 0")
    model = synthesize(BallbotParams(**b), Q, R, mode, verbatim)

    c = dict(cfg.costs)
    sig = {k: c.pop(k) for k in ("sigma_front", "sigma_side", "sigma_rear") if k in c}
    if "Q_g" in c:
        c["Q_g"] = np.asarray(c["Q_g"], dtype=float)
    weights = CostWeights(**c)
    orca = OrcaConfig(**cfg.orca)
    mpc = MpcConfig(
        weights=weights,
        personal_params=PersonalSpaceParams(**sig),
        filter=AgentFilterConfig(**cfg.topology),
        orca=orca,
        **cfg.mpc,
    )
    if not math.isclose(mpc.dt, model.T, rel_tol=1e-9):
        raise ValueError(f"mpc.dt {mpc.dt} must equal ballbot.T {model.T}")
    return Components(model, mpc, orca, ki)


def make_controller(policy: str, comp: Components, cfg: RunConfig, ext: ExternalPolicy | None):
    mpc = comp.mpc
    if policy == "ORCA":
        return OrcaController(comp.orca, mpc.v_pref, mpc.robot_radius)
    if policy == "CV":
        return CVController(mpc.v_pref)
    if policy == "external":
        return ExternalController(ext, mpc.v_pref, mpc.robot_radius)
    variant, _, rollout = policy.rpartition("-")
    if rollout == "EXTERNAL":
        mcfg = replace(mpc, variant=variant, rollout_policy="external")
        rp = ExternalRolloutPolicy(ext, mpc.v_pref, mpc.robot_radius)
    else:
        mcfg = replace(mpc, variant=variant, rollout_policy=rollout)
        rp = mcfg.default_policy()
    return MpcController(mcfg, comp.model, rp, log_plans=cfg.log_plans)


def make_humans(comp: Components, cfg: RunConfig, ext: ExternalPolicy | None):
    see = bool(cfg.humans.get("see_robot", True))
    if cfg.world == "external":
        return ExternalHumans(ext, see, comp.mpc.robot_radius)
    return OrcaHumans(comp.orca, see, comp.mpc.robot_radius)


def template_for(cfg: RunConfig, name: str) -> ScenarioTemplate:
    return ScenarioTemplate.named(name, **cfg.scenario)


@dataclass(frozen=True, eq=False)
class TrialRecord:
    policy: str
    scenario: str
    result: TrialResult | None
    trial_id: int
    seed: int
    error: str = ""

    @property
    def failed(self) -> bool:
        return self.result is None or self.result.failed


_WORKER: dict[str, Any] = {}


def _worker_setup(cfg_dict: dict) -> None:
    cfg = RunConfig.from_dict(cfg_dict)
    comp = build_components(cfg)
    cmd = cfg.external.get("command")
    _WORKER.update(cfg=cfg, comp=comp, ext=ExternalPolicy(cmd) if cmd else None)


def _run_one(job: tuple[str, str, int]) -> TrialRecord:
    policy, scen, trial_id = job
    cfg: RunConfig = _WORKER["cfg"]
    comp: Components = _WORKER["comp"]
    ext = _WORKER["ext"]
    seed = int(cfg.master_seed)
    try:
        scenario = sample_scenario(template_for(cfg, scen), trial_id, seed)
        res = run_trial(
            scenario,
            make_controller(policy, comp, cfg, ext),
            make_humans(comp, cfg, ext),
            comp.model,
            timeout=cfg.timeout,
            goal_tolerance=cfg.goal_tolerance,
            stop_on_collision=cfg.stop_on_collision,
            ki=comp.ki,
        )
        return TrialRecord(policy, scen, res, trial_id, seed, res.error)
    except Exception as exc:  # recorded; the batch carries on
        return TrialRecord(policy, scen, None, trial_id, seed, f"{type(exc).__name__}: {exc}")


def _fmt(x: float) -> str:
    return repr(float(x))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def trials_csv(records: Sequence[TrialRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    for r in records:
        if r.failed:
            w.writerow([r.trial_id, r.policy, r.scenario, "nan", "nan", "", r.seed])
        else:
            res = r.result
            w.writerow([r.trial_id, r.policy, r.scenario, _fmt(res.safety_D), _fmt(res.efficiency_T),
                        int(res.collided), r.seed])
    return buf.getvalue()


@dataclass(frozen=True)
class SummaryRow:
    policy: str
    scenario: str
    world: str
    mean_D: float
    std_D: float
    mean_T: float
    std_T: float
    n: int


def summarize(records: Sequence[TrialRecord], world: str) -> list[SummaryRow]:
    cells: dict[tuple[str, str], list[TrialResult]] = {}
    for r in records:
        cells.setdefault((r.policy, r.scenario), [])
        if not r.failed:
            cells[(r.policy, r.scenario)].append(r.result)
    rows = []
    for (policy, scen), res in cells.items():
        D = np.array([x.safety_D for x in res])
        T = np.array([x.efficiency_T for x in res])
        rows.append(_summary_row(policy, scen, world, D, T))
    return rows


def _summary_row(policy: str, scen: str, world: str, D: np.ndarray, T: np.ndarray) -> SummaryRow:
    def mean(x):
        return float(np.mean(x)) if len(x) else math.nan

    def std(x):
        # spread of an all-infinite sample (empty world) is reported as 0
        if len(x) and np.all(np.isinf(x)):
            return 0.0
        return sample_std(x) if len(x) else math.nan

    return SummaryRow(policy, scen, world, mean(D), std(D), mean(T), std(T), len(D))


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_FIELDS)
    for r in rows:
        w.writerow([r.policy, r.scenario, r.world, _fmt(r.mean_D), _fmt(r.std_D), _fmt(r.mean_T), _fmt(r.std_T), r.n])
    return buf.getvalue()


def trajectory_jsonl(res: TrialResult) -> str:
    parts = [res.robot_traj.to_jsonl(agent="robot")]
    parts += [t.to_jsonl(agent=f"human{i}") for i, t in enumerate(res.human_trajs)]
    return "".join(parts)


@dataclass(frozen=True, eq=False)
class BatchResult:
    records: list[TrialRecord]
    summary: list[SummaryRow]
    out: Path

    @property
    def any_failed(self) -> bool:
        return any(r.failed for r in self.records)


def run_batch(cfg: RunConfig, write: bool = True) -> BatchResult:
    """Run every (policy, scenario, trial) cell; trial ``i`` shares its humans across policies."""
    cfg.validate()
    jobs = [(p, s, i) for p in cfg.policies for s in cfg.scenarios for i in range(int(cfg.trials))]
    cfg_dict = cfg.to_dict()
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers, initializer=_worker_setup, initargs=(cfg_dict,)) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * cfg.workers))))
    else:
        _worker_setup(cfg_dict)
        records = [_run_one(j) for j in jobs]
    ext = _WORKER.get("ext")
    if ext is not None:
        ext.close()
    order = {(p, s): k for k, (p, s) in enumerate((p, s) for p in cfg.policies for s in cfg.scenarios)}
    records.sort(key=lambda r: (order[(r.policy, r.scenario)], r.trial_id))
    summary = summarize(records, cfg.world)
    out = Path(cfg.out)
    if write:
        _write_outputs(cfg, records, summary, out)
    return BatchResult(records, summary, out)


def _write_outputs(cfg: RunConfig, records: list[TrialRecord], summary: list[SummaryRow], out: Path) -> None:
    _atomic_write(out / "trials.csv", trials_csv(records))
    _atomic_write(out / "summary.csv", summary_csv(summary))
    for r in records:
        if r.failed:
            continue
        sub = Path(r.policy) / r.scenario / f"{r.trial_id}.jsonl"
        if cfg.dump_trajectories:
            _atomic_write(out / "trajectories" / sub, trajectory_jsonl(r.result))
        if cfg.log_plans and r.result.plan_log:
            _atomic_write(out / "plans" / sub, "".join(json.dumps(x) + "\n" for x in r.result.plan_log))
    errors = [f"{r.policy},{r.scenario},{r.trial_id}: {r.error}" for r in records if r.failed]
    if errors:
        _atomic_write(out / "errors.txt", "\n".join(errors) + "\n")
    if cfg.dump_model:
        _atomic_write(out / "model.json", build_components(cfg).model.to_json() + "\n")


# --- trial CSV reading ------------------------------------------------------


def read_trials(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["D"] = float(r["D"])
        r["T"] = float(r["T"])
    return rows


def cell_values(spec: str, metric: str) -> tuple[np.ndarray, str]:
    """Values of ``metric`` for ``path[:policy[:scenario]]``, completed trials only."""
    path, *sel = spec.split(":")
    rows = read_trials(path)
    policy = sel[0] if sel else None
    scen = sel[1] if len(sel) > 1 else None
    picked = [r for r in rows if (policy is None or r["policy"] == policy) and (scen is None or r["scenario"] == scen)]
    if policy is None and len({r["policy"] for r in picked}) > 1:
        raise MissingCell(f"{path} holds several policies; name one as {path}:POLICY")
    if scen is None and len({r["scenario"] for r in picked}) > 1:
        raise MissingCell(f"{path} holds several scenarios; name one as {path}:POLICY:SCENARIO")
    vals = np.array([r[metric] for r in picked if not math.isnan(r[metric])])
    if len(vals) == 0:
        raise MissingCell(f"no completed trials for {spec}")
    return vals, path


def recompute_summary(path: str | Path, world: str = "") -> list[SummaryRow]:
    rows = read_trials(path)
    cells: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        cells.setdefault((r["policy"], r["scenario"]), [])
        if not math.isnan(r["D"]):
            cells[(r["policy"], r["scenario"])].append(r)
    return [
        _summary_row(p, s, world, np.array([x["D"] for x in v]), np.array([x["T"] for x in v]))
        for (p, s), v in cells.items()
    ]


# --- entry point ------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tmpc", description="Topology-informed MPC crowd-navigation experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a batch of trials")
    r.add_argument("--config", required=True)
    r.add_argument("--policy", action="append", help="override policies (repeatable)")
    r.add_argument("--scenario", action="append", help="override scenarios (repeatable)")
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--log-plans", action="store_true")
    r.add_argument("--dump-model", action="store_true")
    c = sub.add_parser("compare", help="U test between two cells of trials CSVs")
    c.add_argument("--a", required=True, help="trials.csv[:POLICY[:SCENARIO]]")
    c.add_argument("--b", required=True, help="baseline, same format")
    c.add_argument("--metric", choices=("D", "T"), default="D")
    c.add_argument("--out", help="where to write comparison.json (default: next to --a)")
    s = sub.add_parser("stats", help="summary table recomputed from a trials CSV")
    s.add_argument("--file", required=True)
    sub.add_parser("defaults", help="print a config file with every default")
    return ap


def _cmd_run(args) -> int:
    try:
        cfg = RunConfig.load(args.config)
        if args.policy:
            cfg.policies = args.policy
        if args.scenario:
            cfg.scenarios = args.scenario
        for name in ("trials", "out", "workers"):
            if getattr(args, name) is not None:
                setattr(cfg, name, getattr(args, name))
        if args.seed is not None:
            cfg.master_seed = args.seed
        cfg.log_plans = cfg.log_plans or args.log_plans
        cfg.dump_model = cfg.dump_model or args.dump_model
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    batch = run_batch(cfg)
    sys.stdout.write(summary_csv(batch.summary))
    if batch.any_failed:
        n = sum(r.failed for r in batch.records)
        print(f"{n} trial(s) failed; see {batch.out / 'errors.txt'}", file=sys.stderr)
        return EXIT_TRIALS
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        a, path_a = cell_values(args.a, args.metric)
        b, _ = cell_values(args.b, args.metric)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = {"a": args.a, "b": args.b, **compare(a, b, args.metric).to_dict()}
    text = json.dumps(report, indent=2) + "\n"
    out = Path(args.out) if args.out else Path(path_a).parent / "comparison.json"
    _atomic_write(out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_stats(args) -> int:
    try:
        rows = recompute_summary(args.file)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(summary_csv(rows))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.cmd == "run":
        return _cmd_run(args)
    if args.cmd == "compare":
        return _cmd_compare(args)
    if args.cmd == "stats":
        return _cmd_stats(args)
    json.dump(default_config_dict(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
