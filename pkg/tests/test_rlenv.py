import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tmpc.ballbot import BallbotState
from tmpc.core import AgentState, Vec2, WorldState
from tmpc.rlenv import (
    THETA_MAX,
    action_space,
    build_observation,
    heading,
    mean_goal_distance,
    observation_message,
    reward_col,
    reward_lean,
    reward_prog,
    surface_distance,
)


def robot_state(p=(0.0, 0.0), v=(0.0, 0.0), tilt=(0.0, 0.0)):
    s = np.zeros(8)
    s[:4] = [*p, *v]
    s[4], s[6] = tilt
    return BallbotState(s)


def test_observation_examples():
    w = WorldState(robot_state((2, 3)), (), 0.0, Vec2(2, 3))
    rob, agents = build_observation(w)
    assert rob.d_g == 0.0 and rob.theta == 0.0 and agents == []
    tilted = WorldState(robot_state(tilt=(0.3, 0.4)), (), 0.0, Vec2(1, 0))
    assert build_observation(tilted)[0].theta == pytest.approx(0.5)


def test_observation_agent_fields():
    h = AgentState(Vec2(1, 1), Vec2(0.5, 0), 0.3, goal=Vec2(4, 5))
    w = WorldState(robot_state(v=(0, 0.8)), (h,), 0.0, Vec2(0, 5))
    rob, (a,) = build_observation(w, radius=0.2)
    assert rob.psi == pytest.approx(math.pi / 2)
    assert rob.d_g == pytest.approx(5.0) and rob.r == 0.2 and rob.v_pref == 0.8
    assert a.d_i == pytest.approx(5.0) and a.combined_radius == pytest.approx(0.5)
    msg = observation_message(rob, [a], role="robot")
    assert msg["role"] == "robot" and msg["agents"][0]["vx"] == 0.5


def test_heading_keeps_last_valid_when_stopped():
    assert heading(Vec2(0, 0)) == 0.0
    assert heading(Vec2(0, 0), 1.2) == 1.2
    assert heading(Vec2(-1, 0), 1.2) == pytest.approx(math.pi)


def test_mean_goal_distance_pads_with_current():
    g = Vec2(0, 0)
    assert mean_goal_distance([], Vec2(3, 4), g, 8) == pytest.approx(5.0)
    hist = [Vec2(float(k), 0.0) for k in range(10)]
    # last 4 entries: 6, 7, 8, 9
    assert mean_goal_distance(hist, Vec2(0, 1), g, 4) == pytest.approx(7.5)
    assert mean_goal_distance(hist[:2], Vec2(4, 0), g, 4) == pytest.approx((0 + 1 + 4 + 4) / 4)


def test_action_space_enumeration():
    acts = action_space(0.8)
    assert len(acts) == 12
    full, half, zero = acts[:6], acts[6:9], acts[9:]
    assert all(a.speed == 0.8 for a in full)
    assert all(a.speed == pytest.approx(0.4) for a in half)
    assert all(a.speed == 0.0 for a in zero)
    assert [a.heading_change for a in full] == pytest.approx(np.linspace(-math.pi / 6, math.pi / 6, 6))
    assert [a.heading_change for a in half] == pytest.approx([-math.pi / 6, 0, math.pi / 6])
    assert len(action_space(0.8, dedupe_zero_heading=True)) == 11
    with pytest.raises(ValueError):
        action_space(-0.1)


@given(st.floats(0, 3), st.booleans(), st.booleans(), st.integers(0, 1000))
def test_action_invariants(v, dedupe, rand, seed):
    acts = action_space(v, dedupe, rand, np.random.default_rng(seed))
    for a in acts:
        assert a.speed in (v, 0.5 * v, 0.0)
        assert -math.pi / 6 <= a.heading_change <= math.pi / 6
    assert np.linalg.norm(list(acts[0].velocity(0.3))) == pytest.approx(v)


def test_reward_col_cases():
    assert reward_col(-1.0, at_goal=True) == 1.0
    assert reward_col(-0.01) == -0.25
    assert reward_col(0.0) == -0.25
    assert reward_col(0.1) == pytest.approx(-0.095)
    assert reward_col(0.5) == 0.0


def test_reward_col_jump_at_band_edge():
    # the middle branch ends at -0.09, not 0: the formula jumps at 0.2
    assert reward_col(0.2) == pytest.approx(-0.09)
    assert reward_col(0.2 + 1e-12) == 0.0


def test_reward_lean_cases():
    assert reward_lean(0.0) == (0.0, False)
    r, stop = reward_lean(0.125)
    assert r == pytest.approx(-0.05) and not stop
    assert reward_lean(0.3) == (-1.0, True)
    assert reward_lean(THETA_MAX) == (pytest.approx(-0.1), False)


@given(st.floats(0, THETA_MAX), st.floats(0, THETA_MAX))
def test_reward_lean_monotone(a, b):
    lo, hi = sorted((a, b))
    assert reward_lean(hi)[0] <= reward_lean(lo)[0]


def test_reward_prog_cases():
    assert reward_prog(2.0, 2.0) == 0.0
    assert reward_prog(2.5, 2.0) == pytest.approx(0.05)
    assert reward_prog(1.0, 2.0) < 0


def test_surface_distance():
    ego = AgentState(Vec2(0, 0), radius=0.2)
    assert surface_distance(ego, []) == math.inf
    assert surface_distance(ego, [AgentState(Vec2(1, 0), radius=0.3), AgentState(Vec2(0, 3), radius=0.3)]) == pytest.approx(0.5)
