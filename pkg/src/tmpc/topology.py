"""Pairwise winding numbers between the robot and surrounding agents.

A winding number measures how far the vector from the robot to an agent
turns over a time window, in full turns. Its sign tells which side the two
passed on and its magnitude how far the mutual avoidance has progressed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import (
    TWO_PI,
    AgentState,
    DegenerateVector,
    ShapeMismatch,
    Trajectory,
    Vec2,
    angle_of,
    check_aligned,
    wrap_angle,
)

SignConvention = Literal["ccw", "cw"]


@dataclass(frozen=True)
class WindingProfile:
    values: tuple[float, ...] = ()
    agent_ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "agent_ids", tuple(int(i) for i in self.agent_ids))
        if len(self.values) != len(self.agent_ids):
            raise ShapeMismatch("values and agent_ids must have equal length")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("winding values must be finite")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class AgentFilterConfig:
    """Which agents count towards the topology cost.

    Agents slower than ``stationary_speed_threshold`` are treated as
    disengaged; agents whose bearing from the robot's heading exceeds
    ``field_of_view_half_angle`` are out of view.
    """

    stationary_speed_threshold: float = 0.05
    field_of_view_half_angle: float = math.pi

    def __post_init__(self) -> None:
        if not self.stationary_speed_threshold >= 0:
            raise ValueError("stationary_speed_threshold must be >= 0")
        if not 0 < self.field_of_view_half_angle <= math.pi:
            raise ValueError("field_of_view_half_angle must lie in (0, pi]")


def winding_number(
    robot: Trajectory, agent: Trajectory, sign_convention: SignConvention = "ccw"
) -> float:
    """Net turning of the robot-to-agent vector, in turns.

    With the default ``"ccw"`` convention counterclockwise relative rotation
    is positive, so passing with the agent on the robot's left gives a
    positive value. ``"cw"`` flips the sign.
    """
    check_aligned(robot, agent)
    if len(robot) < 2:
        raise ShapeMismatch("winding number needs at least two samples")
    rel = agent.samples - robot.samples
    if np.any((rel[:, 0] == 0.0) & (rel[:, 1] == 0.0)):
        raise DegenerateVector("robot and agent coincide at a sample")
    # each step's turn straight from consecutive vectors: equals the wrapped
    # difference of their angles, and is bitwise unchanged if both are negated
    a, b = rel[:-1], rel[1:]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1]
    step = np.arctan2(cross, dot)
    step[step == -math.pi] = math.pi
    lam = float(np.sum(step)) / TWO_PI
    return -lam if sign_convention == "cw" else lam


def _in_view(robot_pos: Vec2, heading: Vec2 | None, agent: AgentState, half_angle: float) -> bool:
    if half_angle >= math.pi or heading is None:
        return True
    if heading.norm() == 0.0:
        return True
    rel = agent.position - robot_pos
    if rel.norm() == 0.0:
        return True
    bearing = wrap_angle(angle_of(rel) - angle_of(heading))
    return abs(bearing) <= half_angle


def winding_profile(
    robot: Trajectory,
    agents: Sequence[tuple[AgentState, Trajectory]],
    filt: AgentFilterConfig = AgentFilterConfig(),
    robot_velocity: Vec2 | None = None,
    sign_convention: SignConvention = "ccw",
    robot_history: Trajectory | None = None,
    agent_histories: Sequence[Trajectory] | None = None,
) -> WindingProfile:
    """Winding numbers of the robot against every engaged agent.

    The robot's heading for the field-of-view test is ``robot_velocity`` if
    given, otherwise its first displacement along ``robot``. When histories
    are supplied, each pair's past samples are prepended before winding.
    """
    if robot_velocity is None and len(robot) > 1:
        robot_velocity = robot[1] - robot[0]
    robot_pos = robot[0]
    if robot_history is not None:
        robot = robot_history.concat(robot)
    values, ids = [], []
    for i, (state, traj) in enumerate(agents):
        if state.speed < filt.stationary_speed_threshold:
            continue
        if not _in_view(robot_pos, robot_velocity, state, filt.field_of_view_half_angle):
            continue
        if agent_histories is not None:
            traj = agent_histories[i].concat(traj)
        values.append(winding_number(robot, traj, sign_convention))
        ids.append(i)
    return WindingProfile(tuple(values), tuple(ids))


def topology_cost(profile: WindingProfile) -> float:
    """Negative mean squared winding number; zero for an empty profile."""
    n = len(profile.values)
    if n == 0:
        return 0.0
    return -sum(v * v for v in profile.values) / n
