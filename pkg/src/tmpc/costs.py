"""Goal-tracking, personal-space and composite MPC costs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import AgentState, ShapeMismatch, Trajectory, Vec2, check_aligned
from .topology import AgentFilterConfig, SignConvention, topology_cost, winding_profile

STATIC_SPEED = 1e-6


DEFAULT_QG_SCALE = 0.02


@dataclass
class CostWeights:
    # Q_g scale: with the identity, goal progress swamps the personal-space
    # term and the robot walks through people; 0.02 keeps arrival times and
    # clearances in the intended range for the default scenarios.
    a_g: float = 5.0
    a_d: float = 1.0
    a_t: float = 5.0
    Q_g: np.ndarray = field(default_factory=lambda: DEFAULT_QG_SCALE * np.eye(2))

    def __post_init__(self) -> None:
        self.Q_g = np.asarray(self.Q_g, dtype=float)
        for name in ("a_g", "a_d", "a_t"):
            w = getattr(self, name)
            if not (math.isfinite(w) and w >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {w}")
        if self.Q_g.shape != (2, 2) or not np.allclose(self.Q_g, self.Q_g.T):
            raise ValueError("Q_g must be a symmetric 2x2 matrix")
        if np.min(np.linalg.eigvalsh(self.Q_g)) < -1e-12:
            raise ValueError("Q_g must be positive semidefinite")

    def scaled(self, c: float) -> CostWeights:
        return CostWeights(self.a_g * c, self.a_d * c, self.a_t * c, self.Q_g)


@dataclass(frozen=True)
class PersonalSpaceParams:
    sigma_front: float = 1.0
    sigma_side: float = 2.0 / 3.0
    sigma_rear: float = 0.5

    def __post_init__(self) -> None:
        if min(self.sigma_front, self.sigma_side, self.sigma_rear) <= 0:
            raise ValueError("personal-space sigmas must be positive")


@dataclass(frozen=True)
class CostBreakdown:
    goal: float
    personal_space: float
    topology: float
    total: float


def goal_cost(robot_traj: Trajectory, goal: Vec2, Q_g: np.ndarray | None = None) -> float:
    """Sum of quadratic goal errors over every sample of ``robot_traj``."""
    Q = np.eye(2) if Q_g is None else np.asarray(Q_g, dtype=float)
    err = robot_traj.samples - np.array([goal.x, goal.y])
    return float(np.einsum("ki,ij,kj->", err, Q, err))


def asymmetric_gaussian(query: Vec2, agent: AgentState, params: PersonalSpaceParams) -> float:
    """Heading-aligned Gaussian with a longer reach ahead of the agent than behind.

    Slower than 1e-6 m/s the agent has no heading and an isotropic Gaussian of
    width ``sigma_front`` is used.
    """
    dx = query.x - agent.position.x
    dy = query.y - agent.position.y
    speed = agent.velocity.norm()
    if speed < STATIC_SPEED:
        s = params.sigma_front
        return math.exp(-(dx * dx + dy * dy) / (2.0 * s * s))
    hx, hy = agent.velocity.x / speed, agent.velocity.y / speed
    d_h = dx * hx + dy * hy
    d_s = -dx * hy + dy * hx
    s_h = params.sigma_front if d_h >= 0 else params.sigma_rear
    s_s = params.sigma_side
    return math.exp(-(d_h * d_h / (2.0 * s_h * s_h) + d_s * d_s / (2.0 * s_s * s_s)))


def gaussian_field(
    queries: np.ndarray, centres: np.ndarray, velocities: np.ndarray, params: PersonalSpaceParams
) -> np.ndarray:
    """Array form of :func:`asymmetric_gaussian`.

    ``queries`` and ``centres`` broadcast against each other with a trailing
    axis of 2; ``velocities`` broadcasts with ``centres``.
    """
    d = np.asarray(queries, dtype=float) - np.asarray(centres, dtype=float)
    v = np.broadcast_to(np.asarray(velocities, dtype=float), np.broadcast(d, velocities).shape)
    speed = np.hypot(v[..., 0], v[..., 1])
    moving = speed >= STATIC_SPEED
    safe = np.where(moving, speed, 1.0)
    hx = np.where(moving, v[..., 0] / safe, 1.0)
    hy = np.where(moving, v[..., 1] / safe, 0.0)
    d_h = d[..., 0] * hx + d[..., 1] * hy
    d_s = -d[..., 0] * hy + d[..., 1] * hx
    s_h = np.where(d_h >= 0, params.sigma_front, params.sigma_rear)
    s_h = np.where(moving, s_h, params.sigma_front)
    s_s = np.where(moving, params.sigma_side, params.sigma_front)
    return np.exp(-(d_h**2 / (2.0 * s_h**2) + d_s**2 / (2.0 * s_s**2)))


def personal_space_cost(
    robot_traj: Trajectory,
    human_trajs: Sequence[Trajectory],
    agents: Sequence[AgentState],
    params: PersonalSpaceParams = PersonalSpaceParams(),
) -> float:
    """Squared personal-space intrusion summed over samples and humans.

    Each human's Gaussian is oriented by the matching entry of ``agents``.
    """
    if len(human_trajs) != len(agents):
        raise ShapeMismatch("one AgentState is needed per human trajectory")
    if not human_trajs:
        return 0.0
    check_aligned(robot_traj, *human_trajs)
    centres = np.stack([t.samples for t in human_trajs], axis=1)  # (N, n, 2)
    vels = np.array([[a.velocity.x, a.velocity.y] for a in agents])  # (n, 2)
    vals = gaussian_field(robot_traj.samples[:, None, :], centres, vels[None, :, :], params)
    return float(np.sum(vals**2))


def composite_cost(
    robot_traj: Trajectory,
    human_trajs: Sequence[Trajectory],
    agents: Sequence[AgentState],
    goal: Vec2,
    weights: CostWeights = CostWeights(),
    personal_params: PersonalSpaceParams = PersonalSpaceParams(),
    filt: AgentFilterConfig = AgentFilterConfig(),
    robot_velocity: Vec2 | None = None,
    sign_convention: SignConvention = "ccw",
    robot_history: Trajectory | None = None,
    agent_histories: Sequence[Trajectory] | None = None,
) -> CostBreakdown:
    """Weighted goal + personal-space + topology cost of one rollout.

    Trajectories include the current instant as sample 0. The goal and
    personal-space terms are summed over the future samples 1..N only; the
    winding numbers use all samples, since they measure turning from now.
    With ``weights.a_t == 0`` the total is exactly the vanilla
    goal + personal-space functional.
    """
    check_aligned(robot_traj, *human_trajs)
    future = robot_traj[1:] if len(robot_traj) > 1 else robot_traj
    j_g = goal_cost(future, goal, weights.Q_g)
    if human_trajs:
        h_future = [t[1:] if len(t) > 1 else t for t in human_trajs]
        j_d = personal_space_cost(future, h_future, agents, personal_params)
    else:
        j_d = 0.0
    j_t = 0.0
    if len(robot_traj) > 1 and human_trajs:
        profile = winding_profile(
            robot_traj,
            list(zip(agents, human_trajs)),
            filt,
            robot_velocity=robot_velocity,
            sign_convention=sign_convention,
            robot_history=robot_history,
            agent_histories=agent_histories,
        )
        j_t = topology_cost(profile)
    total = weights.a_g * j_g + weights.a_d * j_d
    if weights.a_t != 0.0:
        total += weights.a_t * j_t
    return CostBreakdown(j_g, j_d, j_t, total)
