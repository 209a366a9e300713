"""Receding-horizon controller that scores subgoal rollouts and executes the best."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

from .ballbot import DiscreteModel, ReferenceCommand
from .core import DegenerateVector, ShapeMismatch, Trajectory, WorldState
from .costs import CostBreakdown, CostWeights, PersonalSpaceParams, composite_cost
from .orca import OrcaConfig
from .rollouts import (
    CVPolicy,
    OrcaPolicy,
    Rollout,
    RolloutPolicy,
    build_rollout,
    generate_subgoals,
    predict_humans_cv,
)
from .topology import AgentFilterConfig, SignConvention

Variant = Literal["V-MPC", "T-MPC"]

FAILED = CostBreakdown(math.nan, math.nan, math.nan, math.inf)


class PlanningFailed(RuntimeError):
    pass


@dataclass
class MpcConfig:
    weights: CostWeights = field(default_factory=CostWeights)
    N: int = 10
    dt: float = 0.1
    m: int = 10
    subgoal_radius: float = 8.0
    rollout_policy: str = "CV"
    variant: Variant = "T-MPC"
    filter: AgentFilterConfig = field(default_factory=AgentFilterConfig)
    personal_params: PersonalSpaceParams = field(default_factory=PersonalSpaceParams)
    orca: OrcaConfig = field(default_factory=OrcaConfig)
    v_pref: float = 0.8
    robot_radius: float = 0.2
    sign_convention: SignConvention = "ccw"
    winding_history: bool = False

    def __post_init__(self) -> None:
        if self.N < 1 or self.m < 1:
            raise ValueError("N and m must be >= 1")
        if self.variant not in ("V-MPC", "T-MPC"):
            raise ValueError(f"unknown MPC variant {self.variant!r}")

    @property
    def effective_weights(self) -> CostWeights:
        if self.variant == "V-MPC":
            return replace(self.weights, a_t=0.0)
        return self.weights

    def default_policy(self) -> RolloutPolicy:
        tag = self.rollout_policy.upper()
        if tag == "CV":
            return CVPolicy(self.v_pref)
        if tag == "ORCA":
            return OrcaPolicy(self.orca, self.v_pref, self.robot_radius)
        raise ValueError(f"rollout policy {self.rollout_policy!r} needs an explicit policy object")


@dataclass(frozen=True, eq=False)
class PlanResult:
    chosen: Rollout
    all_costs: tuple[CostBreakdown, ...]
    first_action: ReferenceCommand
    rollouts: tuple[Rollout | None, ...] = ()

    @property
    def chosen_index(self) -> int:
        return self.chosen.subgoal.index


@dataclass(frozen=True, eq=False)
class History:
    """Past robot and human positions, for winding over elapsed time as well."""

    robot: Trajectory
    humans: tuple[Trajectory, ...]


def plan(
    world: WorldState,
    cfg: MpcConfig,
    model: DiscreteModel,
    policy: RolloutPolicy | None = None,
    history: History | None = None,
) -> PlanResult:
    """Score one rollout per subgoal and pick the cheapest (lowest index on ties)."""
    policy = policy or cfg.default_policy()
    weights = cfg.effective_weights
    preds = predict_humans_cv(world.humans, cfg.N, cfg.dt, world.time)
    use_history = cfg.winding_history and history is not None and len(history.humans) == len(world.humans)
    rollouts: list[Rollout | None] = []
    costs: list[CostBreakdown] = []
    best = None
    for sg in generate_subgoals(world.robot.position, cfg.m, cfg.subgoal_radius):
        try:
            ro = build_rollout(policy, world, sg, cfg.N, cfg.dt, model)
            cb = composite_cost(
                ro.robot_traj,
                preds,
                world.humans,
                world.robot_goal,
                weights,
                cfg.personal_params,
                cfg.filter,
                robot_velocity=world.robot.velocity,
                sign_convention=cfg.sign_convention,
                robot_history=history.robot if use_history else None,
                agent_histories=history.humans if use_history else None,
            )
        except (DegenerateVector, ShapeMismatch):
            rollouts.append(None)
            costs.append(FAILED)
            continue
        rollouts.append(ro)
        costs.append(cb)
        if best is None or cb.total < costs[best].total:
            best = sg.index
    if best is None:
        raise PlanningFailed("every rollout failed")
    chosen = rollouts[best]
    return PlanResult(chosen, tuple(costs), chosen.controls[0], tuple(rollouts))


def control_cycle(
    world: WorldState,
    cfg: MpcConfig,
    model: DiscreteModel,
    policy: RolloutPolicy | None = None,
    history: History | None = None,
) -> tuple[ReferenceCommand, PlanResult]:
    result = plan(world, cfg, model, policy, history)
    return result.first_action, result


def plan_log_record(world: WorldState, result: PlanResult) -> dict:
    return {
        "t": world.time,
        "chosen": result.chosen_index,
        "action": [result.first_action.vx, result.first_action.vy],
        "costs": [
            {k: _finite_or_none(getattr(c, k)) for k in ("goal", "personal_space", "topology", "total")}
            for c in result.all_costs
        ],
    }


def _finite_or_none(x: float) -> float | None:
    return x if math.isfinite(x) else None
