"""Subgoals, constant-velocity human prediction and candidate rollouts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .ballbot import DiscreteModel, ReferenceCommand, propagate_positions
from .core import AgentState, Trajectory, Vec2, WorldState
from .external import ExternalPolicy
from .orca import OrcaConfig, cosimulate


@dataclass(frozen=True)
class Subgoal:
    position: Vec2
    index: int


@dataclass(frozen=True, eq=False)
class Rollout:
    subgoal: Subgoal
    controls: tuple[ReferenceCommand, ...]
    robot_traj: Trajectory
    policy_tag: str


class RolloutPolicy(Protocol):
    """Produces the ego's velocity references over the horizon."""

    tag: str

    def controls(self, world: WorldState, subgoal: Subgoal, N: int, dt: float) -> np.ndarray:
        """``(N, 2)`` array of planar velocity references."""
        ...


def generate_subgoals(robot_pos: Vec2, m: int = 10, radius: float = 8.0) -> list[Subgoal]:
    if m < 1:
        raise ValueError("m must be >= 1")
    if not radius > 0:
        raise ValueError("radius must be positive")
    out = []
    for k in range(m):
        a = 2.0 * math.pi * k / m
        out.append(Subgoal(Vec2(robot_pos.x + radius * math.cos(a), robot_pos.y + radius * math.sin(a)), k))
    return out


def predict_humans_cv(
    humans: Sequence[AgentState], N: int, dt: float, start_time: float = 0.0
) -> list[Trajectory]:
    """Straight-line extrapolation of each human, ``N + 1`` samples from now."""
    if N < 1:
        raise ValueError("N must be >= 1")
    k = np.arange(N + 1)[:, None] * dt
    return [
        Trajectory(np.array([h.position.x, h.position.y]) + k * np.array([h.velocity.x, h.velocity.y]), dt, start_time)
        for h in humans
    ]


def cv_rollout(world: WorldState, subgoal: Subgoal, N: int, dt: float, v_pref: float = 0.8) -> np.ndarray:
    """Constant velocity at ``v_pref`` straight at the subgoal for every step."""
    direction = (subgoal.position - world.robot.position).unit()
    return np.tile([v_pref * direction.x, v_pref * direction.y], (N, 1))


def orca_rollout(
    world: WorldState,
    subgoal: Subgoal,
    N: int,
    dt: float,
    cfg: OrcaConfig = OrcaConfig(),
    v_pref: float = 0.8,
    robot_radius: float = 0.2,
) -> np.ndarray:
    """Ego velocities from an ORCA co-simulation of the robot and the humans.

    The robot's true goals for humans are unknown, so each human heads for
    the endpoint of its constant-velocity extrapolation at its current
    speed, while still reacting to the ego and each other.
    """
    robot = world.robot
    humans = world.humans
    pos = [[robot.position.x, robot.position.y]]
    vel = [[robot.velocity.x, robot.velocity.y]]
    rad = [robot_radius]
    goals = [[subgoal.position.x, subgoal.position.y]]
    speeds = [v_pref]
    max_speeds = [cfg.max_speed]
    horizon = N * dt
    for h in humans:
        pos.append([h.position.x, h.position.y])
        vel.append([h.velocity.x, h.velocity.y])
        rad.append(h.radius)
        goals.append([h.position.x + h.velocity.x * horizon, h.position.y + h.velocity.y * horizon])
        speeds.append(h.speed)
        max_speeds.append(max(cfg.max_speed, h.speed))
    vels = cosimulate(
        np.array(pos), np.array(vel), np.array(rad), np.array(goals), np.array(speeds), np.array(max_speeds), cfg, N, dt
    )
    return vels[:, 0, :].copy()


@dataclass(frozen=True)
class CVPolicy:
    v_pref: float = 0.8
    tag: str = "CV"

    def controls(self, world: WorldState, subgoal: Subgoal, N: int, dt: float) -> np.ndarray:
        return cv_rollout(world, subgoal, N, dt, self.v_pref)


@dataclass(frozen=True)
class OrcaPolicy:
    cfg: OrcaConfig = OrcaConfig()
    v_pref: float = 0.8
    robot_radius: float = 0.2
    tag: str = "ORCA"

    def controls(self, world: WorldState, subgoal: Subgoal, N: int, dt: float) -> np.ndarray:
        return orca_rollout(world, subgoal, N, dt, self.cfg, self.v_pref, self.robot_radius)


class ExternalRolloutPolicy:
    """Rollouts from an out-of-process policy.

    The ego moves kinematically with the returned velocities; humans follow
    their constant-velocity prediction.
    """

    tag = "external"

    def __init__(self, policy: ExternalPolicy, v_pref: float = 0.8, robot_radius: float = 0.2):
        self.policy = policy
        self.v_pref = v_pref
        self.robot_radius = robot_radius

    def controls(self, world: WorldState, subgoal: Subgoal, N: int, dt: float) -> np.ndarray:
        preds = predict_humans_cv(world.humans, N, dt)
        ego = AgentState(world.robot.position, world.robot.velocity, self.robot_radius, subgoal.position, self.v_pref)
        out = np.empty((N, 2))
        for k in range(N):
            others = [h.with_motion(p[k], h.velocity) for h, p in zip(world.humans, preds)]
            v = self.policy.act(ego, others, role="rollout", theta=world.robot.inclination)
            out[k] = v.x, v.y
            ego = ego.with_motion(ego.position + v * dt, v)
        return out


def build_rollout(
    policy: RolloutPolicy, world: WorldState, subgoal: Subgoal, N: int, dt: float, model: DiscreteModel
) -> Rollout:
    """Run ``policy`` for its controls and push them through the closed-loop ballbot."""
    if not math.isclose(dt, model.T, rel_tol=1e-9):
        raise ValueError(f"rollout dt {dt} must equal the controller period {model.T}")
    controls = np.asarray(policy.controls(world, subgoal, N, dt), dtype=float).reshape(N, 2)
    positions = propagate_positions(world.robot, controls, model)
    return Rollout(
        subgoal,
        tuple(ReferenceCommand(float(vx), float(vy)) for vx, vy in controls),
        Trajectory(positions, dt, world.time),
        policy.tag,
    )

