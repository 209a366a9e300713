"""Shared planar types: vectors, agent states, trajectories and world snapshots."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .ballbot import BallbotState

TWO_PI = 2.0 * math.pi


class DegenerateVector(ValueError):
    """A direction was requested from a zero-length vector."""


class ShapeMismatch(ValueError):
    """Trajectories or arrays that must be aligned are not."""


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Vec2 components must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))

    def __add__(self, other: Vec2) -> Vec2:
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Vec2) -> Vec2:
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> Vec2:
        return Vec2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self) -> Vec2:
        return Vec2(-self.x, -self.y)

    def __iter__(self):
        yield self.x
        yield self.y

    def dot(self, other: Vec2) -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: Vec2) -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def unit(self) -> Vec2:
        n = self.norm()
        if n == 0.0:
            raise DegenerateVector("cannot normalise a zero vector")
        return Vec2(self.x / n, self.y / n)

    def rotated(self, phi: float) -> Vec2:
        c, s = math.cos(phi), math.sin(phi)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @classmethod
    def of(cls, v: Iterable[float]) -> Vec2:
        x, y = v
        return cls(float(x), float(y))


ZERO = Vec2(0.0, 0.0)


@dataclass(frozen=True)
class AgentState:
    """Planar kinematic state of a human (or the robot's planar projection)."""

    position: Vec2
    velocity: Vec2 = ZERO
    radius: float = 0.3
    goal: Vec2 = ZERO
    preferred_speed: float = 0.8

    def __post_init__(self) -> None:
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not (self.preferred_speed >= 0 and math.isfinite(self.preferred_speed)):
            raise ValueError(f"preferred_speed must be >= 0, got {self.preferred_speed}")

    @property
    def speed(self) -> float:
        return self.velocity.norm()

    def with_motion(self, position: Vec2, velocity: Vec2) -> AgentState:
        return AgentState(position, velocity, self.radius, self.goal, self.preferred_speed)


def angle_of(v: Vec2) -> float:
    """Counterclockwise angle of ``v`` from the +x axis, in (-pi, pi]."""
    if v.x == 0.0 and v.y == 0.0:
        raise DegenerateVector("angle of a zero vector is undefined")
    a = math.atan2(v.y, v.x)
    return math.pi if a == -math.pi else a


def wrap_angle(a: float) -> float:
    """Map ``a`` into the half-open interval (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a}")
    r = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
    # rounding can land a hair outside the interval
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def wrap_angles(a: np.ndarray) -> np.ndarray:
    """Vectorised :func:`wrap_angle`."""
    a = np.asarray(a, dtype=float)
    r = a - TWO_PI * np.ceil((a - math.pi) / TWO_PI)
    r = np.where(r <= -math.pi, r + TWO_PI, r)
    return np.where(r > math.pi, r - TWO_PI, r)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled planar positions.

    ``samples`` is stored as a read-only ``(n, 2)`` float array; sample ``k``
    is at time ``start_time + k * dt``.
    """

    samples: np.ndarray
    dt: float
    start_time: float = 0.0

    def __post_init__(self) -> None:
        pts = self.samples
        if not isinstance(pts, np.ndarray):
            pts = np.array([tuple(p) for p in pts], dtype=float)
        pts = np.array(pts, dtype=float).reshape(-1, 2) if np.size(pts) else np.empty((0, 2))
        if len(pts) < 1:
            raise ValueError("a trajectory needs at least one sample")
        if not np.all(np.isfinite(pts)):
            raise ValueError("trajectory samples must be finite")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        pts.setflags(write=False)
        object.__setattr__(self, "samples", pts)

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            start, _, step = idx.indices(len(self))
            step = 1 if idx.step is None else idx.step
            return Trajectory(self.samples[idx], self.dt * step, self.start_time + start * self.dt)
        return Vec2.of(self.samples[idx])

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(len(self))

    @property
    def end_time(self) -> float:
        return self.start_time + self.dt * (len(self) - 1)

    def points(self) -> list[Vec2]:
        return [Vec2.of(p) for p in self.samples]

    def resample(self, factor: int) -> Trajectory:
        """Linearly interpolate ``factor - 1`` extra samples between each pair."""
        if factor < 1:
            raise ValueError("factor must be >= 1")
        n = len(self)
        s = np.linspace(0.0, n - 1, (n - 1) * factor + 1)
        x = np.interp(s, np.arange(n), self.samples[:, 0])
        y = np.interp(s, np.arange(n), self.samples[:, 1])
        return Trajectory(np.column_stack([x, y]), self.dt / factor, self.start_time)

    def concat(self, later: Trajectory) -> Trajectory:
        """Join ``later`` onto this trajectory; a shared boundary sample is kept once."""
        if not math.isclose(self.dt, later.dt, rel_tol=1e-9):
            raise ShapeMismatch(f"dt mismatch {self.dt} vs {later.dt}")
        tail = later.samples
        if math.isclose(later.start_time, self.end_time, abs_tol=1e-9):
            tail = tail[1:]
        return Trajectory(np.vstack([self.samples, tail]), self.dt, self.start_time)

    # serialization: CSV rows `t,x,y` and JSONL records {"t","x","y"}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y"])
        for t, (x, y) in zip(self.times, self.samples):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])
        return buf.getvalue()

    def to_jsonl(self, **extra) -> str:
        lines = []
        for t, (x, y) in zip(self.times, self.samples):
            rec = dict(extra)
            rec.update(t=float(t), x=float(x), y=float(y))
            lines.append(json.dumps(rec))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str) -> Trajectory:
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls._from_records([(float(r["t"]), float(r["x"]), float(r["y"])) for r in rows])

    @classmethod
    def from_jsonl(cls, text: str) -> Trajectory:
        recs = [json.loads(line) for line in text.splitlines() if line.strip()]
        return cls._from_records([(r["t"], r["x"], r["y"]) for r in recs])

    @classmethod
    def _from_records(cls, recs: Sequence[tuple[float, float, float]]) -> Trajectory:
        if not recs:
            raise ValueError("no samples")
        ts = np.array([r[0] for r in recs])
        pts = np.array([(r[1], r[2]) for r in recs])
        if len(ts) == 1:
            return cls(pts, 1.0, float(ts[0]))
        steps = np.diff(ts)
        dt = float(steps.mean())
        if not np.allclose(steps, dt, rtol=1e-6, atol=1e-9):
            raise ValueError("samples are not uniformly spaced in time")
        return cls(pts, dt, float(ts[0]))


def check_aligned(*trajs: Trajectory) -> None:
    if not trajs:
        return
    n, dt = len(trajs[0]), trajs[0].dt
    for t in trajs[1:]:
        if len(t) != n:
            raise ShapeMismatch(f"trajectory lengths differ: {n} vs {len(t)}")
        if not math.isclose(t.dt, dt, rel_tol=1e-9):
            raise ShapeMismatch(f"trajectory timesteps differ: {dt} vs {t.dt}")


@dataclass(frozen=True)
class WorldState:
    """Joint snapshot of the robot and every human at one instant.

    ``robot_goal`` rides along so that controllers can be pure functions of
    the snapshot.
    """

    robot: BallbotState
    humans: tuple[AgentState, ...] = field(default_factory=tuple)
    time: float = 0.0
    robot_goal: Vec2 = ZERO

    def __post_init__(self) -> None:
        object.__setattr__(self, "humans", tuple(self.humans))
