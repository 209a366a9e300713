"""Topology-informed model predictive control for a ballbot among simulated humans."""
from .core import AgentState, DegenerateVector, ShapeMismatch, Trajectory, Vec2, WorldState
from .topology import WindingProfile, topology_cost, winding_number, winding_profile
from .costs import CostBreakdown, CostWeights, PersonalSpaceParams, composite_cost
from .ballbot import BallbotParams, BallbotState, DiscreteModel, ReferenceCommand, synthesize
from .mpc import MpcConfig, PlanResult, plan
from .stats import mann_whitney_u

__all__ = [
    "AgentState",
    "BallbotParams",
    "BallbotState",
    "CostBreakdown",
    "CostWeights",
    "DegenerateVector",
    "DiscreteModel",
    "MpcConfig",
    "PersonalSpaceParams",
    "PlanResult",
    "ReferenceCommand",
    "ShapeMismatch",
    "Trajectory",
    "Vec2",
    "WindingProfile",
    "WorldState",
    "composite_cost",
    "mann_whitney_u",
    "plan",
    "synthesize",
    "topology_cost",
    "winding_number",
    "winding_profile",
]
