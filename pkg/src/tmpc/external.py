"""Line-oriented JSON bridge to an out-of-process policy.

The child reads one JSON observation per line on stdin and answers with
one JSON object ``{"vx": ..., "vy": ...}`` per line on stdout. Each
observation carries ``robot`` (ego fields of :class:`RobotObservation`
plus ``x``, ``y``, ``vx``, ``vy``, ``gx``, ``gy``), ``agents`` (list of
:class:`AgentObservation` dicts) and ``role`` (``"robot"``, ``"rollout"``
or ``"human"``). Units are metres, seconds and radians.
"""
from __future__ import annotations

import json
import shlex
import subprocess
import threading
from typing import Sequence

from .core import AgentState, Vec2
from .rlenv import observation_message, observe


class ExternalPolicyError(RuntimeError):
    pass


class ExternalPolicy:
    def __init__(self, command: str | Sequence[str]):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc: subprocess.Popen | None = None
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def query(self, message: dict) -> Vec2:
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(json.dumps(message) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalPolicyError(f"policy process failed: {exc}") from exc
        if not line:
            raise ExternalPolicyError("policy process closed its output")
        try:
            reply = json.loads(line)
            return Vec2(float(reply["vx"]), float(reply["vy"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ExternalPolicyError(f"bad reply from policy: {line!r}") from exc

    def act(self, ego: AgentState, others: Sequence[AgentState], role: str, theta: float = 0.0, **extra) -> Vec2:
        robot, agents = observe(ego, others, theta)
        msg = observation_message(robot, agents, role=role, **extra)
        msg["robot"].update(
            x=ego.position.x, y=ego.position.y, vx=ego.velocity.x, vy=ego.velocity.y, gx=ego.goal.x, gy=ego.goal.y
        )
        return self.query(msg)

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.stdin:
                self._proc.stdin.close()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
            self._proc = None

    def __getstate__(self):
        # a live pipe cannot cross process boundaries; workers respawn it
        return {"command": self.command}

    def __setstate__(self, state):
        self.__init__(state["command"])

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass
