"""Discrete-time vehicle models and horizon rollouts (explicit Euler)."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import Control, InvalidInputError, Plan, State

log = logging.getLogger(__name__)

DynamicsKind = Literal["unicycle", "double-integrator"]


@dataclass(frozen=True)
class DynamicsModel:
    """Unicycle or double-integrator model.

    The double integrator keeps its heading fixed and integrates position and
    velocity along that axis only; ``omega`` is ignored. Both models clamp speed
    into ``[0, v_max]`` (no reversing).
    """

    kind: DynamicsKind = "unicycle"
    dt: float = 0.1
    a_max: float = 2.0
    omega_max: float = 1.5
    v_max: float = 1.5

    def __post_init__(self) -> None:
        if self.kind not in ("unicycle", "double-integrator"):
            raise InvalidInputError(f"unknown dynamics kind {self.kind!r}")
        for name in ("dt", "a_max", "omega_max", "v_max"):
            if not getattr(self, name) > 0.0:
                raise InvalidInputError(f"{name} must be positive")

    @property
    def control_bounds(self) -> NDArray:
        return np.array([self.a_max, self.omega_max])

    def clamp(self, controls: NDArray) -> NDArray:
        b = self.control_bounds
        return np.clip(controls, -b, b)


def _advance(model: DynamicsModel, x, y, th, v, a, omega):
    """One Euler step on component arrays; controls must already be clamped."""
    dt = model.dt
    x_new = x + v * np.cos(th) * dt
    y_new = y + v * np.sin(th) * dt
    if model.kind == "unicycle":
        th_new = th + omega * dt
        # wrap to (-pi, pi]
        th_new = np.where(th_new > np.pi, th_new - 2.0 * np.pi, th_new)
        th_new = np.where(th_new <= -np.pi, th_new + 2.0 * np.pi, th_new)
    else:
        th_new = th
    v_new = np.minimum(np.maximum(v + a * dt, 0.0), model.v_max)
    return x_new, y_new, th_new, v_new


def step_batch(model: DynamicsModel, states: NDArray, controls: NDArray) -> NDArray:
    """Advance an (N, 4) state batch by one step under (N, 2) controls (clamped to bounds)."""
    u = model.clamp(controls)
    cols = _advance(model, states[:, 0], states[:, 1], states[:, 2], states[:, 3], u[:, 0], u[:, 1])
    return np.stack(cols, axis=1)


def rollout_batch(model: DynamicsModel, x0: NDArray, controls: NDArray) -> NDArray:
    """Roll out (M, K, 2) control sequences from a shared (4,) start; returns (M, K+1, 4)."""
    m, k_len, _ = controls.shape
    u = model.clamp(controls)
    traj = np.empty((m, k_len + 1, 4))
    traj[:, 0] = x0
    x, y, th, v = (np.full(m, float(c)) for c in x0)
    for k in range(k_len):
        x, y, th, v = _advance(model, x, y, th, v, u[:, k, 0], u[:, k, 1])
        traj[:, k + 1, 0] = x
        traj[:, k + 1, 1] = y
        traj[:, k + 1, 2] = th
        traj[:, k + 1, 3] = v
    return traj


def _check_finite(s: State, u: Control) -> None:
    if not (np.all(np.isfinite(s.as_array())) and np.all(np.isfinite(u.as_array()))):
        raise InvalidInputError("non-finite state or control")


def step(model: DynamicsModel, s: State, u: Control) -> State:
    _check_finite(s, u)
    if np.any(np.abs(u.as_array()) > model.control_bounds):
        log.debug("control %s clamped to bounds %s", u, model.control_bounds)
    nxt = step_batch(model, s.as_array()[None, :], u.as_array()[None, :])[0]
    return State.from_array(nxt)


def rollout_array(model: DynamicsModel, x0: NDArray, controls: NDArray) -> NDArray:
    """Single-sequence rollout on arrays; (K, 2) controls give (K+1, 4) states."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2 or controls.shape[0] < 1:
        raise InvalidInputError("rollout needs at least one control")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(controls))):
        raise InvalidInputError("non-finite rollout input")
    return rollout_batch(model, np.asarray(x0, dtype=float), controls[None])[0]


def rollout(model: DynamicsModel, x0: State, controls: Sequence[Control]) -> list[State]:
    if len(controls) < 1:
        raise InvalidInputError("rollout needs K >= 1")
    u = np.array([c.as_array() for c in controls])
    return [State.from_array(row) for row in rollout_array(model, x0.as_array(), u)]


def plan_is_consistent(plan: Plan, model: DynamicsModel, atol: float = 1e-9) -> bool:
    """True if every consecutive state pair of ``plan`` obeys one model step."""
    nxt = step_batch(model, np.asarray(plan.states[:-1]), np.asarray(plan.controls))
    diff = nxt - plan.states[1:]
    diff[:, 2] = (diff[:, 2] + np.pi) % (2.0 * np.pi) - np.pi
    return bool(np.all(np.abs(diff) <= atol))
