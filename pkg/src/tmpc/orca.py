"""Optimal Reciprocal Collision Avoidance.

Used both as the simulated-human policy and as an interaction-aware
rollout generator for the MPC. The numerical core works on plain arrays and
is compiled with numba; the functions at the bottom of the module wrap it
in the library's value types.

Half-planes are stored internally as rows ``(px, py, dx, dy)``: a point on
the boundary and the boundary direction, with the admissible side on the
left of the direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .core import AgentState, DegenerateVector, Vec2

RVO_EPSILON = 1e-5


@dataclass(frozen=True)
class OrcaConfig:
    neighbor_dist: float = 10.0
    max_neighbors: int = 10
    time_horizon: float = 5.0
    time_step: float = 0.1
    max_speed: float = 1.0
    goal_tolerance: float = 0.05

    def __post_init__(self) -> None:
        if min(self.neighbor_dist, self.time_horizon, self.time_step, self.max_speed) <= 0:
            raise ValueError("ORCA distances, horizons and speeds must be positive")
        if self.max_neighbors < 0:
            raise ValueError("max_neighbors must be >= 0")
        if self.goal_tolerance < 0:
            raise ValueError("goal_tolerance must be >= 0")


@dataclass(frozen=True)
class HalfPlane:
    """Admissible velocities ``{v : (v - point) . normal >= 0}``."""

    point: Vec2
    normal: Vec2

    def __post_init__(self) -> None:
        if abs(self.normal.norm() - 1.0) > 1e-9:
            raise ValueError("half-plane normal must be a unit vector")

    @property
    def direction(self) -> Vec2:
        return Vec2(self.normal.y, -self.normal.x)

    def violation(self, v: Vec2) -> float:
        """Distance by which ``v`` lies outside; negative inside."""
        return -(v - self.point).dot(self.normal)

    def as_row(self) -> tuple[float, float, float, float]:
        d = self.direction
        return (self.point.x, self.point.y, d.x, d.y)

    @classmethod
    def from_row(cls, row) -> HalfPlane:
        px, py, dx, dy = (float(x) for x in row)
        return cls(Vec2(px, py), Vec2(-dy, dx))


# --- compiled core -------------------------------------------------------


@njit(cache=True)
def _det(ax, ay, bx, by):
    return ax * by - ay * bx


@njit(cache=True)
def _lp1(lines, n, line_no, radius, opt_x, opt_y, direction_opt, result):
    px, py, dx, dy = lines[line_no, 0], lines[line_no, 1], lines[line_no, 2], lines[line_no, 3]
    dot = px * dx + py * dy
    disc = dot * dot + radius * radius - (px * px + py * py)
    if disc < 0.0:
        return False
    sq = math.sqrt(disc)
    t_left = -dot - sq
    t_right = -dot + sq
    for i in range(line_no):
        denom = _det(dx, dy, lines[i, 2], lines[i, 3])
        numer = _det(lines[i, 2], lines[i, 3], px - lines[i, 0], py - lines[i, 1])
        if abs(denom) <= RVO_EPSILON:
            if numer < 0.0:
                return False
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return False
    if direction_opt:
        if opt_x * dx + opt_y * dy > 0.0:
            t = t_right
        else:
            t = t_left
    else:
        t = dx * (opt_x - px) + dy * (opt_y - py)
        if t < t_left:
            t = t_left
        elif t > t_right:
            t = t_right
    result[0] = px + t * dx
    result[1] = py + t * dy
    return True


@njit(cache=True)
def _lp2(lines, n, radius, opt_x, opt_y, direction_opt, result):
    if direction_opt:
        result[0] = opt_x * radius
        result[1] = opt_y * radius
    elif opt_x * opt_x + opt_y * opt_y > radius * radius:
        norm = math.sqrt(opt_x * opt_x + opt_y * opt_y)
        result[0] = opt_x / norm * radius
        result[1] = opt_y / norm * radius
    else:
        result[0] = opt_x
        result[1] = opt_y
    for i in range(n):
        if _det(lines[i, 2], lines[i, 3], lines[i, 0] - result[0], lines[i, 1] - result[1]) > 0.0:
            tx, ty = result[0], result[1]
            if not _lp1(lines, n, i, radius, opt_x, opt_y, direction_opt, result):
                result[0] = tx
                result[1] = ty
                return i
    return n


@njit(cache=True)
def _lp3(lines, n, begin, radius, result):
    distance = 0.0
    proj = np.empty((max(n, 1), 4))
    for i in range(begin, n):
        dix, diy = lines[i, 2], lines[i, 3]
        if _det(dix, diy, lines[i, 0] - result[0], lines[i, 1] - result[1]) > distance:
            m = 0
            for j in range(i):
                djx, djy = lines[j, 2], lines[j, 3]
                determinant = _det(dix, diy, djx, djy)
                if abs(determinant) <= RVO_EPSILON:
                    if dix * djx + diy * djy > 0.0:
                        continue
                    ppx = 0.5 * (lines[i, 0] + lines[j, 0])
                    ppy = 0.5 * (lines[i, 1] + lines[j, 1])
                else:
                    s = _det(djx, djy, lines[i, 0] - lines[j, 0], lines[i, 1] - lines[j, 1]) / determinant
                    ppx = lines[i, 0] + s * dix
                    ppy = lines[i, 1] + s * diy
                ddx, ddy = djx - dix, djy - diy
                dn = math.sqrt(ddx * ddx + ddy * ddy)
                proj[m, 0] = ppx
                proj[m, 1] = ppy
                proj[m, 2] = ddx / dn
                proj[m, 3] = ddy / dn
                m += 1
            tx, ty = result[0], result[1]
            if _lp2(proj, m, radius, -diy, dix, True, result) < m:
                result[0] = tx
                result[1] = ty
            distance = _det(dix, diy, lines[i, 0] - result[0], lines[i, 1] - result[1])


@njit(cache=True)
def _solve(lines, n, pref_x, pref_y, max_speed, result):
    fail = _lp2(lines, n, max_speed, pref_x, pref_y, False, result)
    if fail < n:
        _lp3(lines, n, fail, max_speed, result)


@njit(cache=True)
def _lines_for(i, pos, vel, rad, cfg_arr, lines):
    """Fill ``lines`` with agent ``i``'s constraints; returns count, or -1 on coincidence."""
    neighbor_dist, max_neighbors, time_horizon, time_step = cfg_arr[0], int(cfg_arr[1]), cfg_arr[2], cfg_arr[3]
    n_agents = pos.shape[0]
    # nearest neighbours, index tiebreak
    dists = np.empty(n_agents)
    for j in range(n_agents):
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dists[j] = dx * dx + dy * dy
    order = np.argsort(dists, kind="mergesort")
    inv_h = 1.0 / time_horizon
    count = 0
    for oj in range(n_agents):
        j = order[oj]
        if j == i:
            continue
        if count >= max_neighbors:
            break
        if not dists[j] < neighbor_dist * neighbor_dist:
            break
        rpx = pos[j, 0] - pos[i, 0]
        rpy = pos[j, 1] - pos[i, 1]
        rvx = vel[i, 0] - vel[j, 0]
        rvy = vel[i, 1] - vel[j, 1]
        dist_sq = rpx * rpx + rpy * rpy
        if dist_sq == 0.0:
            return -1
        cr = rad[i] + rad[j]
        cr_sq = cr * cr
        if dist_sq > cr_sq:
            wx = rvx - inv_h * rpx
            wy = rvy - inv_h * rpy
            w_sq = wx * wx + wy * wy
            dot1 = wx * rpx + wy * rpy
            if dot1 < 0.0 and dot1 * dot1 > cr_sq * w_sq:
                wl = math.sqrt(w_sq)
                ux_, uy_ = wx / wl, wy / wl
                dx, dy = uy_, -ux_
                ux = (cr * inv_h - wl) * ux_
                uy = (cr * inv_h - wl) * uy_
            else:
                leg = math.sqrt(dist_sq - cr_sq)
                if _det(rpx, rpy, wx, wy) > 0.0:
                    dx = (rpx * leg - rpy * cr) / dist_sq
                    dy = (rpx * cr + rpy * leg) / dist_sq
                else:
                    dx = -(rpx * leg + rpy * cr) / dist_sq
                    dy = -(-rpx * cr + rpy * leg) / dist_sq
                dot2 = rvx * dx + rvy * dy
                ux = dot2 * dx - rvx
                uy = dot2 * dy - rvy
        else:
            inv_s = 1.0 / time_step
            wx = rvx - inv_s * rpx
            wy = rvy - inv_s * rpy
            wl = math.sqrt(wx * wx + wy * wy)
            ux_, uy_ = wx / wl, wy / wl
            dx, dy = uy_, -ux_
            ux = (cr * inv_s - wl) * ux_
            uy = (cr * inv_s - wl) * uy_
        lines[count, 0] = vel[i, 0] + 0.5 * ux
        lines[count, 1] = vel[i, 1] + 0.5 * uy
        lines[count, 2] = dx
        lines[count, 3] = dy
        count += 1
    return count


@njit(cache=True)
def _step_all(pos, vel, rad, pref, max_speed, active, cfg_arr, out):
    """New velocity for every ``active`` agent from one shared snapshot.

    Returns the index of an agent whose centre coincides with a neighbour,
    or -1 when all went well. Inactive rows of ``out`` are left untouched.
    """
    n = pos.shape[0]
    lines = np.empty((max(n, 1), 4))
    res = np.empty(2)
    for i in range(n):
        if not active[i]:
            continue
        m = _lines_for(i, pos, vel, rad, cfg_arr, lines)
        if m < 0:
            return i
        _solve(lines, m, pref[i, 0], pref[i, 1], max_speed[i], res)
        out[i, 0] = res[0]
        out[i, 1] = res[1]
    return -1


@njit(cache=True)
def _preferred(pos, goals, speeds, time_step, goal_tol, out):
    for i in range(pos.shape[0]):
        dx = goals[i, 0] - pos[i, 0]
        dy = goals[i, 1] - pos[i, 1]
        dist = math.sqrt(dx * dx + dy * dy)
        if dist <= goal_tol:
            out[i, 0] = 0.0
            out[i, 1] = 0.0
        elif speeds[i] * time_step > dist:
            out[i, 0] = dx / time_step
            out[i, 1] = dy / time_step
        else:
            out[i, 0] = dx / dist * speeds[i]
            out[i, 1] = dy / dist * speeds[i]


@njit(cache=True)
def _cosimulate(pos, vel, rad, goals, speeds, max_speed, cfg_arr, goal_tol, n_steps, dt, out):
    n = pos.shape[0]
    pos = pos.copy()
    vel = vel.copy()
    pref = np.empty((n, 2))
    new = np.empty((n, 2))
    active = np.ones(n, dtype=np.bool_)
    for k in range(n_steps):
        _preferred(pos, goals, speeds, cfg_arr[3], goal_tol, pref)
        bad = _step_all(pos, vel, rad, pref, max_speed, active, cfg_arr, new)
        if bad >= 0:
            return bad
        for i in range(n):
            vel[i, 0] = new[i, 0]
            vel[i, 1] = new[i, 1]
            pos[i, 0] += dt * new[i, 0]
            pos[i, 1] += dt * new[i, 1]
            out[k, i, 0] = new[i, 0]
            out[k, i, 1] = new[i, 1]
    return -1


def _cfg_array(cfg: OrcaConfig) -> np.ndarray:
    return np.array([cfg.neighbor_dist, cfg.max_neighbors, cfg.time_horizon, cfg.time_step])


def preferred_velocities(
    pos: np.ndarray, goals: np.ndarray, speeds: np.ndarray, cfg: OrcaConfig
) -> np.ndarray:
    """Goal-directed preferred velocities.

    Zero inside ``cfg.goal_tolerance``; within one step of the goal the agent
    asks for exactly the velocity that lands on it.
    """
    d = np.asarray(goals, float) - np.asarray(pos, float)
    dist = np.hypot(d[:, 0], d[:, 1])
    speeds = np.asarray(speeds, float)
    safe = np.where(dist > 0, dist, 1.0)
    v = d / safe[:, None] * speeds[:, None]
    near = speeds * cfg.time_step > dist
    v = np.where(near[:, None], d / cfg.time_step, v)
    return np.where((dist <= cfg.goal_tolerance)[:, None], 0.0, v)


def step_velocities(
    pos: np.ndarray,
    vel: np.ndarray,
    radii: np.ndarray,
    pref: np.ndarray,
    max_speeds: np.ndarray,
    cfg: OrcaConfig,
    active: np.ndarray | None = None,
) -> np.ndarray:
    """ORCA velocities for a whole crowd, updated synchronously.

    Rows of inactive agents keep their current velocity; they still act as
    neighbours for everyone else.
    """
    pos = np.ascontiguousarray(pos, dtype=float)
    vel = np.ascontiguousarray(vel, dtype=float)
    n = len(pos)
    active = np.ones(n, dtype=np.bool_) if active is None else np.asarray(active, dtype=np.bool_)
    out = vel.copy()
    bad = _step_all(
        pos,
        vel,
        np.ascontiguousarray(radii, dtype=float),
        np.ascontiguousarray(pref, dtype=float),
        np.ascontiguousarray(max_speeds, dtype=float),
        active,
        _cfg_array(cfg),
        out,
    )
    if bad >= 0:
        raise DegenerateVector(f"agent {bad} coincides with a neighbour")
    return out


# --- value-type API ------------------------------------------------------


def _pack(agent: AgentState, neighbors: Sequence[AgentState]):
    agents = [agent, *neighbors]
    pos = np.array([[a.position.x, a.position.y] for a in agents])
    vel = np.array([[a.velocity.x, a.velocity.y] for a in agents])
    rad = np.array([a.radius for a in agents])
    return pos, vel, rad


def orca_lines(agent: AgentState, neighbors: Sequence[AgentState], cfg: OrcaConfig = OrcaConfig()) -> list[HalfPlane]:
    """ORCA half-planes imposed on ``agent`` by its nearest neighbours."""
    pos, vel, rad = _pack(agent, neighbors)
    lines = np.empty((max(len(pos), 1), 4))
    m = _lines_for(0, pos, vel, rad, _cfg_array(cfg), lines)
    if m < 0:
        raise DegenerateVector("agent coincides with a neighbour")
    return [HalfPlane.from_row(lines[k]) for k in range(m)]


def solve_velocity(pref: Vec2, lines: Sequence[HalfPlane], max_speed: float) -> Vec2:
    """Velocity closest to ``pref`` inside every half-plane and the speed disk.

    When the constraints cannot all be met, returns the velocity that
    minimises the largest violation.
    """
    rows = np.array([h.as_row() for h in lines], dtype=float).reshape(-1, 4)
    res = np.empty(2)
    _solve(rows, len(rows), pref.x, pref.y, float(max_speed), res)
    return Vec2(res[0], res[1])


def orca_step(agent: AgentState, neighbors: Sequence[AgentState], cfg: OrcaConfig = OrcaConfig()) -> Vec2:
    """New velocity for ``agent`` heading to its goal among ``neighbors``."""
    pos, vel, rad = _pack(agent, neighbors)
    pref = preferred_velocities(
        pos[:1], np.array([[agent.goal.x, agent.goal.y]]), np.array([agent.preferred_speed]), cfg
    )
    lines = np.empty((max(len(pos), 1), 4))
    m = _lines_for(0, pos, vel, rad, _cfg_array(cfg), lines)
    if m < 0:
        raise DegenerateVector("agent coincides with a neighbour")
    res = np.empty(2)
    _solve(lines, m, pref[0, 0], pref[0, 1], cfg.max_speed, res)
    return Vec2(res[0], res[1])


def cosimulate(
    pos: np.ndarray,
    vel: np.ndarray,
    radii: np.ndarray,
    goals: np.ndarray,
    speeds: np.ndarray,
    max_speeds: np.ndarray,
    cfg: OrcaConfig,
    n_steps: int,
    dt: float,
) -> np.ndarray:
    """Run every agent under ORCA for ``n_steps``; returns velocities ``(n_steps, n, 2)``."""
    pos = np.ascontiguousarray(pos, dtype=float)
    out = np.empty((n_steps, len(pos), 2))
    bad = _cosimulate(
        pos,
        np.ascontiguousarray(vel, dtype=float),
        np.ascontiguousarray(radii, dtype=float),
        np.ascontiguousarray(goals, dtype=float),
        np.ascontiguousarray(speeds, dtype=float),
        np.ascontiguousarray(max_speeds, dtype=float),
        _cfg_array(cfg),
        float(cfg.goal_tolerance),
        int(n_steps),
        float(dt),
        out,
    )
    if bad >= 0:
        raise DegenerateVector(f"agent {bad} coincides with a neighbour")
    return out
