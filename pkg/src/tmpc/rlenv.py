"""Observation, action and reward surface for CADRL-style learned policies.

Nothing here trains a network. The functions let an externally trained
policy be driven by the simulator through the JSON-lines protocol in
:mod:`tmpc.external`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .core import AgentState, Vec2, WorldState

THETA_MAX = 0.25
DEFAULT_HISTORY = 8


@dataclass(frozen=True)
class RobotObservation:
    d_g: float
    v_pref: float
    psi: float
    r: float
    theta: float
    dbar_g: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AgentObservation:
    position: Vec2
    velocity: Vec2
    radius: float
    d_i: float
    combined_radius: float

    def to_dict(self) -> dict:
        return {
            "x": self.position.x,
            "y": self.position.y,
            "vx": self.velocity.x,
            "vy": self.velocity.y,
            "radius": self.radius,
            "d_i": self.d_i,
            "combined_radius": self.combined_radius,
        }


@dataclass(frozen=True)
class DiscreteAction:
    speed: float
    heading_change: float

    def velocity(self, psi: float) -> Vec2:
        a = psi + self.heading_change
        return Vec2(self.speed * math.cos(a), self.speed * math.sin(a))


def heading(velocity: Vec2, last_psi: float = 0.0) -> float:
    if velocity.norm() < 1e-9:
        return last_psi
    return math.atan2(velocity.y, velocity.x)


def mean_goal_distance(history: Sequence[Vec2], current: Vec2, goal: Vec2, t_prime: int = DEFAULT_HISTORY) -> float:
    """Mean distance to goal over the last ``t_prime`` positions, padded with ``current``."""
    recent = list(history)[-t_prime:]
    recent += [current] * (t_prime - len(recent))
    return float(np.mean([(p - goal).norm() for p in recent]))


def observe(
    ego: AgentState,
    others: Sequence[AgentState],
    theta: float = 0.0,
    history: Sequence[Vec2] = (),
    t_prime: int = DEFAULT_HISTORY,
    last_psi: float = 0.0,
) -> tuple[RobotObservation, list[AgentObservation]]:
    """Observation from the point of view of any ego agent."""
    d_g = (ego.goal - ego.position).norm()
    robot = RobotObservation(
        d_g=d_g,
        v_pref=ego.preferred_speed,
        psi=heading(ego.velocity, last_psi),
        r=ego.radius,
        theta=theta,
        dbar_g=mean_goal_distance(history, ego.position, ego.goal, t_prime),
    )
    agents = [
        AgentObservation(
            o.position, o.velocity, o.radius, (o.goal - o.position).norm(), o.radius + ego.radius
        )
        for o in others
    ]
    return robot, agents


def build_observation(
    world: WorldState,
    history: Sequence[Vec2] = (),
    v_pref: float = 0.8,
    radius: float = 0.2,
    t_prime: int = DEFAULT_HISTORY,
    last_psi: float = 0.0,
) -> tuple[RobotObservation, list[AgentObservation]]:
    """The robot's observation of ``world``.

    ``history`` holds past robot positions, oldest first. Human goal
    distances use whatever goal each :class:`AgentState` carries.
    """
    robot = world.robot
    ego = AgentState(robot.position, robot.velocity, radius, world.robot_goal, v_pref)
    return observe(ego, world.humans, robot.inclination, history, t_prime, last_psi)


def observation_message(robot: RobotObservation, agents: Sequence[AgentObservation], **extra) -> dict:
    msg = {"robot": robot.to_dict(), "agents": [a.to_dict() for a in agents]}
    msg.update(extra)
    return msg


def action_space(
    v_pref: float,
    dedupe_zero_heading: bool = False,
    random_headings: bool = False,
    rng: np.random.Generator | None = None,
) -> list[DiscreteAction]:
    """The discrete action set.

    Six full-speed headings spread evenly over [-pi/6, pi/6] (endpoints
    included), three half-speed and three zero-speed headings at -pi/6, 0 and
    pi/6: twelve actions. ``dedupe_zero_heading`` drops the zero-speed,
    zero-heading action, leaving eleven. ``random_headings`` draws the six
    full-speed headings uniformly instead.
    """
    if v_pref < 0:
        raise ValueError("v_pref must be >= 0")
    lim = math.pi / 6
    if random_headings:
        rng = rng or np.random.default_rng()
        full = np.sort(rng.uniform(-lim, lim, 6))
    else:
        full = np.linspace(-lim, lim, 6)
    acts = [DiscreteAction(v_pref, float(h)) for h in full]
    acts += [DiscreteAction(0.5 * v_pref, h) for h in (-lim, 0.0, lim)]
    zero = (-lim, lim) if dedupe_zero_heading else (-lim, 0.0, lim)
    acts += [DiscreteAction(0.0, h) for h in zero]
    return acts


def reward_col(d_min: float, at_goal: bool = False) -> float:
    """Collision reward from the surface distance to the closest agent."""
    if at_goal:
        return 1.0
    if d_min <= 0.0:
        return -0.25
    if d_min <= 0.2:
        return -0.1 + 0.05 * d_min
    return 0.0


def reward_lean(theta: float, theta_max: float = THETA_MAX) -> tuple[float, bool]:
    """Inclination penalty; the episode terminates past ``theta_max``."""
    if theta > theta_max:
        return -1.0, True
    return -0.1 * theta / theta_max, False


def reward_prog(dbar_g: float, d_g: float) -> float:
    return 0.1 * (dbar_g - d_g)


def surface_distance(ego: AgentState, others: Sequence[AgentState]) -> float:
    if not others:
        return math.inf
    return min((o.position - ego.position).norm() - o.radius - ego.radius for o in others)
