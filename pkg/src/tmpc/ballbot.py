"""Linearised ballbot body dynamics and its LQR velocity controller.

Body state ``q`` per axis is (inclination, inclination rate, CoM velocity),
stacked x then y. The full planar state ``s`` adds the ball position:
``s = (x, y, vx, vy, theta_x, dtheta_x, theta_y, dtheta_y)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .core import Vec2

DiscretizationMode = Literal["zoh", "paper"]


class NonConvergence(RuntimeError):
    pass


class Unstabilizable(RuntimeError):
    pass


@dataclass(frozen=True)
class BallbotParams:
    """Physical constants. Defaults are engineering guesses for a 20 kg, 1 m tall robot."""

    M: float = 17.0
    m_ball: float = 3.0
    r: float = 0.11
    h: float = 0.5
    I0: float = 2.0
    g: float = 9.81
    T: float = 0.1

    def __post_init__(self) -> None:
        for k, v in asdict(self).items():
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{k} must be strictly positive, got {v}")


@dataclass(frozen=True)
class ReferenceCommand:
    vx: float = 0.0
    vy: float = 0.0

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def as_vec(self) -> Vec2:
        return Vec2(self.vx, self.vy)

    @classmethod
    def of(cls, v) -> ReferenceCommand:
        x, y = v
        return cls(float(x), float(y))


@dataclass(frozen=True, eq=False)
class BallbotState:
    """8-dim full state; see the module docstring for the ordering."""

    s: np.ndarray = field(default_factory=lambda: np.zeros(8))

    def __post_init__(self) -> None:
        s = np.array(self.s, dtype=float).reshape(8)
        if not np.all(np.isfinite(s)):
            raise ValueError("ballbot state must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @classmethod
    def at(cls, position: Vec2, velocity: Vec2 = Vec2(0.0, 0.0)) -> BallbotState:
        return cls(np.array([position.x, position.y, velocity.x, velocity.y, 0, 0, 0, 0], float))

    @property
    def position(self) -> Vec2:
        return Vec2(self.s[0], self.s[1])

    @property
    def velocity(self) -> Vec2:
        return Vec2(self.s[2], self.s[3])

    @property
    def inclination(self) -> float:
        return math.hypot(self.s[4], self.s[6])

    def body(self) -> np.ndarray:
        return state_to_body(self.s)


def state_to_body(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.array([s[4], s[5], s[2], s[6], s[7], s[3]])


def body_to_state(q: np.ndarray, position: tuple[float, float]) -> np.ndarray:
    return np.array([position[0], position[1], q[2], q[5], q[0], q[1], q[3], q[4]])


def model_scalars(params: BallbotParams, verbatim_a: bool = False) -> tuple[float, float]:
    """The scalars ``a`` (gravity gain) and ``b`` (ball-acceleration gain).

    ``verbatim_a`` puts the literal constant 2 in place of ``I0`` in the
    denominator of ``a``, reproducing the printed formula.
    """
    p = params
    rh = p.r + p.h
    tail = p.M * rh**2 + p.m_ball * p.r**2
    denom_a = (2.0 if verbatim_a else p.I0) + tail
    denom_b = p.I0 + tail
    a = p.M * p.g * p.h / denom_a
    b = (p.M * p.r * rh + p.m_ball * p.r**2) / denom_b
    return a, b


def continuous_matrices(params: BallbotParams, verbatim_a: bool = False) -> tuple[np.ndarray, np.ndarray]:
    a, b = model_scalars(params, verbatim_a)
    rh = params.r + params.h
    A0 = np.array([[0.0, 1.0, 0.0], [a, 0.0, 0.0], [a * rh, 0.0, 0.0]])
    B0 = np.array([[0.0], [-b], [params.r - rh * b]])
    A = np.zeros((6, 6))
    B = np.zeros((6, 2))
    A[:3, :3] = A0
    A[3:, 3:] = A0
    B[:3, :1] = B0
    B[3:, 1:] = B0
    return A, B


def expm(X: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Matrix exponential by scaling and squaring of a truncated Taylor series."""
    X = np.asarray(X, dtype=float)
    norm = np.linalg.norm(X, 1)
    s = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    Y = X / (2.0**s)
    n = X.shape[0]
    term = np.eye(n)
    out = np.eye(n)
    for k in range(1, 60):
        term = term @ Y / k
        out = out + term
        if np.linalg.norm(term, 1) <= tol * max(1.0, np.linalg.norm(out, 1)):
            break
    for _ in range(s):
        out = out @ out
    return out


def discretize(
    A: np.ndarray, B: np.ndarray, T: float, mode: DiscretizationMode = "zoh"
) -> tuple[np.ndarray, np.ndarray]:
    """Sampled-data model for sampling period ``T``.

    ``zoh`` integrates the input over the period (exact zero-order hold);
    ``paper`` uses ``(exp(AT) - I) B``, which collapses to zero when ``A`` is
    zero and is kept only for comparison.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    n, m = B.shape
    if mode == "paper":
        Ad = expm(A * T)
        return Ad, (Ad - np.eye(n)) @ B
    if mode != "zoh":
        raise ValueError(f"unknown discretization mode {mode!r}")
    # exp([[A, B], [0, 0]] T) = [[Ad, int_0^T e^{As} ds B], [0, I]]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = B
    E = expm(aug * T)
    return E[:n, :n], E[:n, n:]


def solve_dare(
    A: np.ndarray, B: np.ndarray, Q: np.ndarray, R: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000
) -> np.ndarray:
    """Discrete algebraic Riccati equation by value iteration from ``P = Q``."""
    A, B, Q, R = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (A, B, Q, R))
    P = Q.copy()
    for _ in range(max_iter):
        BtP = B.T @ P
        G = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ G
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) < tol:
            return P_next
        P = P_next
    raise NonConvergence(f"Riccati iteration did not converge in {max_iter} iterations")


def lqr_gain(
    Ad: np.ndarray, Bd: np.ndarray, Q: np.ndarray, R: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000
) -> np.ndarray:
    """Infinite-horizon discrete LQR gain ``K`` for the law ``u = -K x``."""
    Ad, Bd, Q, R = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (Ad, Bd, Q, R))
    P = solve_dare(Ad, Bd, Q, R, tol, max_iter)
    K = np.linalg.solve(R + Bd.T @ P @ Bd, Bd.T @ P @ Ad)
    rho = spectral_radius(Ad - Bd @ K)
    if not rho < 1.0:
        raise Unstabilizable(f"closed loop is not contractive (spectral radius {rho:.6f})")
    return K


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(M)))))


DEFAULT_Q = np.diag([100.0, 10.0, 1000.0, 100.0, 10.0, 1000.0])
DEFAULT_KI = 0.5
DEFAULT_R = np.eye(2)


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    A_d: np.ndarray
    B_d: np.ndarray
    C_d: np.ndarray
    K: np.ndarray
    params: BallbotParams = BallbotParams()
    # precomputed closed-loop matrices
    A_cl: np.ndarray = field(init=False, repr=False)
    BK: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        BK = self.B_d @ self.K
        object.__setattr__(self, "BK", BK)
        object.__setattr__(self, "A_cl", self.A_d - BK)

    @property
    def T(self) -> float:
        return self.params.T

    def to_json(self) -> str:
        return json.dumps(
            {
                "params": asdict(self.params),
                "A_d": self.A_d.tolist(),
                "B_d": self.B_d.tolist(),
                "C_d": self.C_d.tolist(),
                "K": self.K.tolist(),
                "closed_loop_spectral_radius": spectral_radius(self.A_cl),
            },
            indent=2,
        )


def synthesize(
    params: BallbotParams = BallbotParams(),
    Q: np.ndarray = DEFAULT_Q,
    R: np.ndarray = DEFAULT_R,
    mode: DiscretizationMode = "zoh",
    verbatim_a: bool = False,
) -> DiscreteModel:
    A, B = continuous_matrices(params, verbatim_a)
    Ad, Bd = discretize(A, B, params.T, mode)
    K = lqr_gain(Ad, Bd, Q, R)
    return DiscreteModel(Ad, Bd, np.eye(6), K, params)


def reference_body(ref: ReferenceCommand) -> np.ndarray:
    return np.array([0.0, 0.0, ref.vx, 0.0, 0.0, ref.vy])


def closed_loop_step(
    q: np.ndarray, ref: ReferenceCommand, model: DiscreteModel
) -> tuple[np.ndarray, np.ndarray]:
    """One step of ``q' = (A_d - B_d K) q + B_d K q_ref``; also returns ``u = K (q_ref - q)``."""
    q = np.asarray(q, dtype=float)
    q_ref = reference_body(ref)
    u = model.K @ (q_ref - q)
    return model.A_cl @ q + model.BK @ q_ref, u


@dataclass(frozen=True)
class IntegratorState:
    ix: float = 0.0
    iy: float = 0.0


def integral_velocity_step(
    q: np.ndarray,
    ref: ReferenceCommand,
    model: DiscreteModel,
    integ: IntegratorState = IntegratorState(),
    ki: float = 0.0,
    limit: float = 0.5,
    band: float = 0.05,
) -> tuple[np.ndarray, IntegratorState]:
    """State feedback with an integral term on the velocity error.

    The integrator accumulates ``(ref - v) * T`` clamped to ``[-limit, limit]``;
    ``ki`` times it is added to the velocity reference. Accumulation is
    paused while the error exceeds ``band`` so that the start-up transient
    does not wind it up.
    """
    if ki < 0:
        raise ValueError("ki must be >= 0")
    if ki == 0.0:
        q_next, _ = closed_loop_step(q, ref, model)
        return q_next, integ
    T = model.T
    ex, ey = ref.vx - q[2], ref.vy - q[5]
    ix, iy = integ.ix, integ.iy
    if abs(ex) < band:
        ix = min(max(ix + ex * T, -limit), limit)
    if abs(ey) < band:
        iy = min(max(iy + ey * T, -limit), limit)
    boosted = ReferenceCommand(ref.vx + ki * ix, ref.vy + ki * iy)
    q_next, _ = closed_loop_step(q, boosted, model)
    return q_next, IntegratorState(ix, iy)


def full_state_step(
    state: BallbotState,
    u: ReferenceCommand,
    model: DiscreteModel,
    integ: IntegratorState | None = None,
    ki: float = 0.0,
) -> BallbotState | tuple[BallbotState, IntegratorState]:
    """Advance the full planar state by one sample.

    Position is integrated with the post-step CoM velocity. When ``integ`` is
    given the integral controller is used and its new state is returned too.
    """
    s = state.s
    q = np.array([s[4], s[5], s[2], s[6], s[7], s[3]])
    if integ is None:
        q_next, _ = closed_loop_step(q, u, model)
    else:
        q_next, integ = integral_velocity_step(q, u, model, integ, ki)
    T = model.T
    pos = (s[0] + q_next[2] * T, s[1] + q_next[5] * T)
    nxt = BallbotState(body_to_state(q_next, pos))
    return nxt if integ is None else (nxt, integ)


def propagate_positions(
    state: BallbotState, controls: np.ndarray, model: DiscreteModel
) -> np.ndarray:
    """Planar positions after each of the ``len(controls)`` closed-loop steps.

    Equivalent to repeated :func:`full_state_step` without the integral term;
    returns an ``(N + 1, 2)`` array starting at the current position.
    """
    s = state.s
    q = np.array([s[4], s[5], s[2], s[6], s[7], s[3]])
    controls = np.asarray(controls, dtype=float).reshape(-1, 2)
    out = np.empty((len(controls) + 1, 2))
    out[0] = s[0], s[1]
    x, y = s[0], s[1]
    A_cl, BK, T = model.A_cl, model.BK, model.T
    for k, (vx, vy) in enumerate(controls):
        q = A_cl @ q + BK @ np.array([0.0, 0.0, vx, 0.0, 0.0, vy])
        x = x + q[2] * T
        y = y + q[5] * T
        out[k + 1] = x, y
    return out


def body_com_positions(
    q: np.ndarray, theta2: tuple[float, float], params: BallbotParams
) -> tuple[np.ndarray, np.ndarray]:
    """Ball centre ``c2`` and body CoM ``c1`` in the world frame."""
    th1x, th1y = float(q[0]), float(q[3])
    th2x, th2y = theta2
    c2 = params.r * np.array([th1x + th2x, th1y + th2y, 1.0])
    c1 = c2 + params.h * np.array([math.sin(th1x), math.sin(th1y), math.cos(th1x)])
    return c1, c2
