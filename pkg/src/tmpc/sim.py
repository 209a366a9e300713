"""Scenario sampling, world stepping and single-trial execution.

The workspace is a 3.6 m x 4.5 m rectangle split into six 1.8 m x 1.5 m
zones, two columns by three rows, numbered row-major from the bottom-left:

    4 5
    2 3
    0 1

The robot always crosses diagonally from zone 0's corner (0, 0) to zone 5's
corner (3.6, 4.5). The zone pairings for the human scenarios are a
best-effort reading of the evaluation figure: humans travel between
opposing corners, with extra humans crossing the middle band.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .ballbot import BallbotState, DiscreteModel, IntegratorState, ReferenceCommand, full_state_step
from .core import AgentState, Trajectory, Vec2, WorldState, check_aligned
from .external import ExternalPolicy
from .mpc import History, MpcConfig, PlanResult, control_cycle, plan_log_record
from .orca import OrcaConfig, preferred_velocities, step_velocities
from .rollouts import RolloutPolicy

GOAL_TOLERANCE = 0.3
TIMEOUT = 30.0


@dataclass(frozen=True)
class Zone:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, p: Vec2) -> bool:
        return self.x0 <= p.x <= self.x1 and self.y0 <= p.y <= self.y1

    @property
    def centre(self) -> Vec2:
        return Vec2(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def sample(self, rng: np.random.Generator) -> Vec2:
        return Vec2(rng.uniform(self.x0, self.x1), rng.uniform(self.y0, self.y1))


def workspace_zones(width: float = 3.6, height: float = 4.5, cols: int = 2, rows: int = 3) -> tuple[Zone, ...]:
    w, h = width / cols, height / rows
    return tuple(Zone(c * w, r * h, (c + 1) * w, (r + 1) * h) for r in range(rows) for c in range(cols))


# (start zone, goal zone) per human
SCENARIO_ZONES: dict[str, tuple[tuple[int, int], ...]] = {
    "empty": (),
    "three": ((5, 0), (1, 4), (4, 1)),
    "four": ((5, 0), (1, 4), (4, 1), (2, 3)),
    "five": ((5, 0), (1, 4), (4, 1), (2, 3), (3, 2)),
}


@dataclass(frozen=True)
class ScenarioTemplate:
    name: str = "three"
    assignments: tuple[tuple[int, int], ...] = SCENARIO_ZONES["three"]
    width: float = 3.6
    height: float = 4.5
    robot_start: Vec2 = Vec2(0.0, 0.0)
    robot_goal: Vec2 = Vec2(3.6, 4.5)
    preferred_speed: float = 0.8
    human_radius: float = 0.3
    robot_radius: float = 0.2
    # extra clearance demanded between sampled endpoints
    spawn_margin: float = 0.1

    @property
    def zones(self) -> tuple[Zone, ...]:
        return workspace_zones(self.width, self.height)

    @classmethod
    def named(cls, name: str, **overrides) -> ScenarioTemplate:
        if name not in SCENARIO_ZONES:
            raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIO_ZONES)}")
        return cls(name=name, assignments=SCENARIO_ZONES[name], **overrides)


@dataclass(frozen=True)
class ScenarioSpec:
    template: ScenarioTemplate
    starts: tuple[Vec2, ...]
    goals: tuple[Vec2, ...]
    trial_id: int
    seed: int

    @property
    def human_count(self) -> int:
        return len(self.starts)

    def humans(self) -> tuple[AgentState, ...]:
        t = self.template
        return tuple(
            AgentState(s, Vec2(0.0, 0.0), t.human_radius, g, t.preferred_speed) for s, g in zip(self.starts, self.goals)
        )

    def initial_world(self) -> WorldState:
        return WorldState(BallbotState.at(self.template.robot_start), self.humans(), 0.0, self.template.robot_goal)


def trial_rng(master_seed: int, trial_id: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(master_seed, trial_id)``."""
    return np.random.Generator(np.random.Philox(key=[master_seed & (2**64 - 1), trial_id & (2**64 - 1)]))


def _place(rng, zone: Zone, taken: Sequence[tuple[Vec2, float]], radius: float, margin: float) -> Vec2:
    p = zone.sample(rng)
    for _ in range(1000):
        if all((p - q).norm() >= radius + r + margin for q, r in taken):
            return p
        p = zone.sample(rng)
    return p


def sample_scenario(template: ScenarioTemplate, trial_id: int, master_seed: int) -> ScenarioSpec:
    """Uniform endpoints in each human's assigned zones.

    Endpoints that would overlap an earlier human (or the robot's start) are
    redrawn from the same stream, so the result depends only on the template
    and ``(master_seed, trial_id)``.
    """
    rng = trial_rng(master_seed, trial_id)
    zones = template.zones
    r = template.human_radius
    starts: list[Vec2] = []
    goals: list[Vec2] = []
    start_taken = [(template.robot_start, template.robot_radius)]
    goal_taken: list[tuple[Vec2, float]] = []
    for zs, zg in template.assignments:
        s = _place(rng, zones[zs], start_taken, r, template.spawn_margin)
        g = _place(rng, zones[zg], goal_taken, r, template.spawn_margin)
        starts.append(s)
        goals.append(g)
        start_taken.append((s, r))
        goal_taken.append((g, r))
    return ScenarioSpec(template, tuple(starts), tuple(goals), trial_id, master_seed)


# --- human policies --------------------------------------------------------


class HumanPolicy(Protocol):
    def velocities(self, world: WorldState, dt: float) -> np.ndarray:
        """``(n_humans, 2)`` velocities chosen from the snapshot ``world``."""
        ...


@dataclass(frozen=True)
class OrcaHumans:
    """Humans as ORCA agents heading for their own goals.

    With ``see_robot`` the robot takes part as a neighbour (using its actual
    velocity), so humans also make room for it.
    """

    cfg: OrcaConfig = OrcaConfig()
    see_robot: bool = True
    robot_radius: float = 0.2

    def velocities(self, world: WorldState, dt: float) -> np.ndarray:
        hs = world.humans
        if not hs:
            return np.zeros((0, 2))
        pos = [[h.position.x, h.position.y] for h in hs]
        vel = [[h.velocity.x, h.velocity.y] for h in hs]
        rad = [h.radius for h in hs]
        goals = [[h.goal.x, h.goal.y] for h in hs]
        speeds = [h.preferred_speed for h in hs]
        active = [True] * len(hs)
        if self.see_robot:
            r = world.robot
            pos.append([r.position.x, r.position.y])
            vel.append([r.velocity.x, r.velocity.y])
            rad.append(self.robot_radius)
            goals.append([r.position.x, r.position.y])
            speeds.append(0.0)
            active.append(False)
        pos_a = np.array(pos)
        pref = preferred_velocities(pos_a, np.array(goals), np.array(speeds), self.cfg)
        max_speeds = np.maximum(self.cfg.max_speed, np.array(speeds))
        out = step_velocities(pos_a, np.array(vel), np.array(rad), pref, max_speeds, self.cfg, np.array(active))
        return out[: len(hs)]


class ExternalHumans:
    """Each human asks an out-of-process policy for its velocity."""

    def __init__(self, policy: ExternalPolicy, see_robot: bool = True, robot_radius: float = 0.2):
        self.policy = policy
        self.see_robot = see_robot
        self.robot_radius = robot_radius

    def velocities(self, world: WorldState, dt: float) -> np.ndarray:
        out = np.zeros((len(world.humans), 2))
        robot = AgentState(world.robot.position, world.robot.velocity, self.robot_radius, world.robot_goal, 0.8)
        for i, h in enumerate(world.humans):
            others = [o for j, o in enumerate(world.humans) if j != i]
            if self.see_robot:
                others.append(robot)
            v = self.policy.act(h, others, role="human", dt=dt)
            out[i] = v.x, v.y
        return out


# --- robot controllers -----------------------------------------------------


class RobotController(Protocol):
    def act(self, world: WorldState) -> ReferenceCommand: ...


class ZeroController:
    def act(self, world: WorldState) -> ReferenceCommand:
        return ReferenceCommand(0.0, 0.0)


@dataclass
class CVController:
    """Drive straight at the goal at the preferred speed, ignoring everyone."""

    v_pref: float = 0.8

    def act(self, world: WorldState) -> ReferenceCommand:
        d = world.robot_goal - world.robot.position
        n = d.norm()
        if n == 0.0:
            return ReferenceCommand(0.0, 0.0)
        return ReferenceCommand(self.v_pref * d.x / n, self.v_pref * d.y / n)


@dataclass
class OrcaController:
    """The robot's planar projection runs ORCA towards the goal."""

    cfg: OrcaConfig = OrcaConfig()
    v_pref: float = 0.8
    robot_radius: float = 0.2

    def act(self, world: WorldState) -> ReferenceCommand:
        r = world.robot
        pos = [[r.position.x, r.position.y]] + [[h.position.x, h.position.y] for h in world.humans]
        vel = [[r.velocity.x, r.velocity.y]] + [[h.velocity.x, h.velocity.y] for h in world.humans]
        rad = [self.robot_radius] + [h.radius for h in world.humans]
        pos_a = np.array(pos)
        pref = preferred_velocities(
            pos_a[:1], np.array([[world.robot_goal.x, world.robot_goal.y]]), np.array([self.v_pref]), self.cfg
        )
        full_pref = np.zeros_like(pos_a)
        full_pref[0] = pref[0]
        active = np.zeros(len(pos), dtype=bool)
        active[0] = True
        out = step_velocities(
            pos_a, np.array(vel), np.array(rad), full_pref, np.full(len(pos), self.cfg.max_speed), self.cfg, active
        )
        return ReferenceCommand(float(out[0, 0]), float(out[0, 1]))


class ExternalController:
    def __init__(self, policy: ExternalPolicy, v_pref: float = 0.8, robot_radius: float = 0.2):
        self.policy = policy
        self.v_pref = v_pref
        self.robot_radius = robot_radius

    def act(self, world: WorldState) -> ReferenceCommand:
        r = world.robot
        ego = AgentState(r.position, r.velocity, self.robot_radius, world.robot_goal, self.v_pref)
        v = self.policy.act(ego, world.humans, role="robot", theta=r.inclination)
        return ReferenceCommand(v.x, v.y)


class MpcController:
    """Receding-horizon MPC; remembers past positions and optionally logs plans."""

    def __init__(
        self,
        cfg: MpcConfig,
        model: DiscreteModel,
        policy: RolloutPolicy | None = None,
        log_plans: bool = False,
    ):
        self.cfg = cfg
        self.model = model
        self.policy = policy or cfg.default_policy()
        self.log: list[dict] | None = [] if log_plans else None
        self._robot_hist: list[tuple[float, float]] = []
        self._human_hist: list[list[tuple[float, float]]] = []
        self.last: PlanResult | None = None

    def _history(self, now: float) -> History | None:
        """Past samples ending one period before ``now``, so rollouts continue them."""
        if not self.cfg.winding_history or not self._robot_hist:
            return None
        dt = self.cfg.dt
        t0 = now - dt * len(self._robot_hist)
        robot = Trajectory(np.array(self._robot_hist), dt, t0)
        humans = tuple(Trajectory(np.array(h), dt, t0) for h in self._human_hist)
        return History(robot, humans)

    def act(self, world: WorldState) -> ReferenceCommand:
        hist = self._history(world.time)
        action, result = control_cycle(world, self.cfg, self.model, self.policy, hist)
        self.last = result
        if self.log is not None:
            self.log.append(plan_log_record(world, result))
        if self.cfg.winding_history:
            self._robot_hist.append((world.robot.position.x, world.robot.position.y))
            if not self._human_hist:
                self._human_hist = [[] for _ in world.humans]
            for hh, h in zip(self._human_hist, world.humans):
                hh.append((h.position.x, h.position.y))
        return action


# --- stepping and trials ---------------------------------------------------


def step_world(
    world: WorldState,
    robot_action: ReferenceCommand,
    human_policy: HumanPolicy,
    model: DiscreteModel,
    integ: IntegratorState | None = None,
    ki: float = 0.0,
    step_index: int | None = None,
) -> WorldState | tuple[WorldState, IntegratorState]:
    """Advance every agent by one controller period from the same snapshot.

    Time advances by exactly ``model.T``; pass ``step_index`` to set it to
    ``step_index * T`` instead of accumulating.
    """
    dt = model.T
    vels = human_policy.velocities(world, dt)
    humans = tuple(
        h.with_motion(Vec2(h.position.x + dt * v[0], h.position.y + dt * v[1]), Vec2(v[0], v[1]))
        for h, v in zip(world.humans, vels)
    )
    if integ is None:
        robot = full_state_step(world.robot, robot_action, model)
    else:
        robot, integ = full_state_step(world.robot, robot_action, model, integ, ki)
    t = world.time + dt if step_index is None else step_index * dt
    nxt = WorldState(robot, humans, t, world.robot_goal)
    return nxt if integ is None else (nxt, integ)


@dataclass(frozen=True, eq=False)
class TrialResult:
    safety_D: float
    efficiency_T: float
    collided: bool
    timed_out: bool
    robot_traj: Trajectory
    human_trajs: tuple[Trajectory, ...]
    seed: int
    trial_id: int = 0
    reached: bool = False
    failed: bool = False
    error: str = ""
    plan_log: tuple[dict, ...] = field(default=())


def safety_metric(robot_traj: Trajectory, human_trajs: Sequence[Trajectory]) -> float:
    """Smallest centre-to-centre robot-human distance over all samples; inf with no humans."""
    if not human_trajs:
        return math.inf
    check_aligned(robot_traj, *human_trajs)
    h = np.stack([t.samples for t in human_trajs], axis=1)
    d = np.hypot(*(h - robot_traj.samples[:, None, :]).transpose(2, 0, 1))
    return float(d.min())


def efficiency_metric(result: TrialResult) -> float:
    return result.efficiency_T


def run_trial(
    scenario: ScenarioSpec,
    controller: RobotController,
    human_policy: HumanPolicy,
    model: DiscreteModel,
    timeout: float = TIMEOUT,
    goal_tolerance: float = GOAL_TOLERANCE,
    stop_on_collision: bool = True,
    ki: float = 0.0,
) -> TrialResult:
    """Close the loop until the robot arrives, collides or runs out of time."""
    world = scenario.initial_world()
    dt = model.T
    r_col = scenario.template.robot_radius + scenario.template.human_radius
    max_steps = int(round(timeout / dt))
    robot_pts = [(world.robot.position.x, world.robot.position.y)]
    human_pts = [[(h.position.x, h.position.y)] for h in world.humans]
    integ = IntegratorState() if ki > 0 else None
    collided = reached = failed = False
    error = ""
    step = 0

    def min_dist(w: WorldState) -> float:
        p = w.robot.position
        return min(((h.position - p).norm() for h in w.humans), default=math.inf)

    D = min_dist(world)
    collided = D < r_col
    while not collided or not stop_on_collision:
        if (world.robot.position - world.robot_goal).norm() <= goal_tolerance:
            reached = True
            break
        if step >= max_steps:
            break
        try:
            action = controller.act(world)
        except Exception as exc:  # controller failure ends the trial, recorded
            failed = True
            error = f"{type(exc).__name__}: {exc}"
            break
        step += 1
        if integ is None:
            world = step_world(world, action, human_policy, model, step_index=step)
        else:
            world, integ = step_world(world, action, human_policy, model, integ, ki, step_index=step)
        robot_pts.append((world.robot.position.x, world.robot.position.y))
        for pts, h in zip(human_pts, world.humans):
            pts.append((h.position.x, h.position.y))
        d = min_dist(world)
        D = min(D, d)
        if d < r_col:
            collided = True
    T = step * dt if reached else timeout
    log = getattr(controller, "log", None)
    return TrialResult(
        safety_D=D,
        efficiency_T=T,
        collided=collided,
        timed_out=not reached and not failed and not (collided and stop_on_collision),
        robot_traj=Trajectory(np.array(robot_pts), dt),
        human_trajs=tuple(Trajectory(np.array(p), dt) for p in human_pts),
        seed=scenario.seed,
        trial_id=scenario.trial_id,
        reached=reached,
        failed=failed,
        error=error,
        plan_log=tuple(log) if log else (),
    )

