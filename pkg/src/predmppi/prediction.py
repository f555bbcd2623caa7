"""Shared prediction models mapping a world snapshot to per-agent Gaussian-mixture forecasts.

Every agent, including the one doing the planning, is predicted by the same
model, so an agent can look up what the others expect it to do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Literal, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import GaussianDist, GaussianMixtureDist, InvalidInputError, State

BELIEF_EVIDENCE_FLOOR = 1e-300


@dataclass(frozen=True)
class AgentView:
    state: State
    radius: float
    goal: NDArray
    prev_state: State | None = None

    def __post_init__(self) -> None:
        goal = np.array(self.goal, dtype=float).reshape(2)
        goal.setflags(write=False)
        object.__setattr__(self, "goal", goal)

    @property
    def position(self) -> NDArray:
        return self.state.position


@dataclass(frozen=True)
class WorldSnapshot:
    tick: int
    agents: Mapping[str, AgentView]
    dt: float = 0.1

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", dict(sorted(self.agents.items())))

    @property
    def ids(self) -> list[str]:
        return list(self.agents)

    def translated(self, offset: ArrayLike) -> "WorldSnapshot":
        dx, dy = np.asarray(offset, dtype=float)
        moved = {}
        for aid, a in self.agents.items():
            prev = a.prev_state
            if prev is not None:
                prev = State(prev.x + dx, prev.y + dy, prev.theta, prev.v)
            moved[aid] = AgentView(
                State(a.state.x + dx, a.state.y + dy, a.state.theta, a.state.v),
                a.radius,
                a.goal + np.array([dx, dy]),
                prev,
            )
        return WorldSnapshot(self.tick, moved, self.dt)


@dataclass(frozen=True)
class PredictionSet:
    """Per-agent list of K mixtures, index ``k - 1`` holding horizon step ``k``."""

    by_agent: Mapping[str, tuple[GaussianMixtureDist, ...]]

    def __post_init__(self) -> None:
        data = {aid: tuple(seq) for aid, seq in sorted(self.by_agent.items())}
        lengths = {len(seq) for seq in data.values()}
        if len(lengths) > 1:
            raise InvalidInputError(f"prediction horizons differ across agents: {sorted(lengths)}")
        object.__setattr__(self, "by_agent", data)

    @property
    def horizon(self) -> int:
        return len(next(iter(self.by_agent.values()))) if self.by_agent else 0

    def __getitem__(self, agent_id: str) -> tuple[GaussianMixtureDist, ...]:
        return self.by_agent[agent_id]

    def __contains__(self, agent_id: object) -> bool:
        return agent_id in self.by_agent

    def __iter__(self) -> Iterator[str]:
        return iter(self.by_agent)

    def ids(self) -> list[str]:
        return list(self.by_agent)


@dataclass(frozen=True)
class Belief:
    goals: tuple[str, ...]
    probs: NDArray = field(repr=True)

    def __post_init__(self) -> None:
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if len(self.goals) != probs.size or probs.size == 0:
            raise InvalidInputError("belief needs one probability per goal")
        if len(set(self.goals)) != len(self.goals):
            raise InvalidInputError(f"duplicate goal names {self.goals}")
        if np.any(~np.isfinite(probs)) or np.any(probs < 0.0) or abs(probs.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"belief {probs.tolist()} is not on the simplex")
        probs.setflags(write=False)
        object.__setattr__(self, "goals", tuple(self.goals))
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float]) -> "Belief":
        return cls(tuple(mapping), np.array(list(mapping.values()), dtype=float))

    def __getitem__(self, goal: str) -> float:
        return float(self.probs[self.goals.index(goal)])

    def as_dict(self) -> dict[str, float]:
        return {g: float(p) for g, p in zip(self.goals, self.probs)}


def _cv_means(pos: NDArray, velocity: NDArray, horizon: int, dt: float) -> NDArray:
    steps = np.arange(1, horizon + 1, dtype=float)[:, None]
    return pos + steps * dt * velocity


def goal_directed_means(pos: ArrayLike, goal: ArrayLike, speed: float, horizon: int, dt: float) -> NDArray:
    """Constant-speed motion toward ``goal`` that stops on arrival; (K, 2) means for k = 1..K."""
    pos = np.asarray(pos, dtype=float)
    delta = np.asarray(goal, dtype=float) - pos
    dist = math.hypot(delta[0], delta[1])
    if dist == 0.0:
        return np.repeat(pos[None, :], horizon, axis=0)
    travel = np.minimum(speed * dt * np.arange(1, horizon + 1, dtype=float), dist)
    return pos + travel[:, None] * (delta / dist)


def predict_constant_velocity(snap: WorldSnapshot, horizon: int, cov: ArrayLike) -> PredictionSet:
    """Extrapolate each agent's current velocity; covariance grows as ``cov * k``."""
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    base = GaussianDist(np.zeros(2), cov).cov
    out = {}
    for aid, a in snap.agents.items():
        s = a.state
        vel = s.v * np.array([math.cos(s.theta), math.sin(s.theta)])
        means = _cv_means(s.position, vel, horizon, snap.dt)
        out[aid] = tuple(
            GaussianMixtureDist.single(GaussianDist(means[k - 1], base * k)) for k in range(1, horizon + 1)
        )
    return PredictionSet(out)


def predict_goal_conditioned(
    belief: Belief,
    s: State,
    goals: Mapping[str, ArrayLike],
    horizon: int,
    cov: ArrayLike,
    nominal_speed: float,
    dt: float = 0.1,
) -> list[GaussianMixtureDist]:
    """One component per goal, weighted by the belief, each moving toward its goal at ``nominal_speed``."""
    if not goals:
        raise InvalidInputError("goal set is empty")
    if set(goals) != set(belief.goals):
        raise InvalidInputError(f"belief goals {belief.goals} do not match {sorted(goals)}")
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    means = {g: goal_directed_means(s.position, goals[g], nominal_speed, horizon, dt) for g in belief.goals}
    return [
        GaussianMixtureDist(tuple((belief[g], GaussianDist(means[g][k], cov)) for g in belief.goals))
        for k in range(horizon)
    ]


def goal_modes(mixture: GaussianMixtureDist, goals: Sequence[str]) -> dict[str, GaussianDist]:
    """Split a goal-conditioned mixture back into its per-goal components (same order as ``goals``)."""
    if len(mixture.components) != len(goals):
        raise InvalidInputError("mixture does not have one component per goal")
    return {g: comp for g, (_, comp) in zip(goals, mixture.components)}


def update_beliefs(prior: Belief, observed: ArrayLike, prev_modes: Mapping[str, GaussianDist]) -> Belief:
    """Bayes rule with the previous one-step-ahead mode densities as likelihoods.

    If the total evidence underflows below 1e-300 the prior is returned unchanged.
    """
    if set(prev_modes) != set(prior.goals):
        raise InvalidInputError(f"modes {sorted(prev_modes)} do not match belief goals {prior.goals}")
    x = np.asarray(observed, dtype=float)
    log_lik = np.array([float(prev_modes[g].log_density(x)) for g in prior.goals])
    with np.errstate(divide="ignore"):
        log_joint = log_lik + np.log(prior.probs)
    top = np.max(log_joint)
    if not np.isfinite(top):
        return prior
    log_evidence = top + math.log(float(np.exp(log_joint - top).sum()))
    if log_evidence < math.log(BELIEF_EVIDENCE_FLOOR):
        return prior
    post = np.exp(log_joint - log_evidence)
    return Belief(prior.goals, post / post.sum())


def _lateral_offsets(
    snap: WorldSnapshot,
    interaction_radius: float,
    saturation_radius: float,
) -> dict[str, float]:
    """Proximity factor in [0, 1] per agent from the nearest conflicting agent ahead of it."""
    factors = {}
    for aid, a in snap.agents.items():
        heading = a.goal - a.position
        norm = math.hypot(heading[0], heading[1])
        nearest = math.inf
        if norm > 0.0:
            for oid, o in snap.agents.items():
                if oid == aid:
                    continue
                rel = o.position - a.position
                dist = math.hypot(rel[0], rel[1])
                if dist < interaction_radius and rel @ heading > 0.0:
                    nearest = min(nearest, dist)
        if math.isinf(nearest):
            factors[aid] = 0.0
        else:
            span = max(interaction_radius - saturation_radius, 1e-12)
            factors[aid] = float(np.clip((interaction_radius - nearest) / span, 0.0, 1.0))
    return factors


def predict_convention_biased(
    snap: WorldSnapshot,
    horizon: int,
    cov: ArrayLike,
    side_gain: float,
    nominal_speed: float,
    interaction_radius: float = 4.0,
    saturation_radius: float = 1.5,
    side: Literal["right", "left"] = "right",
) -> PredictionSet:
    """Goal-directed constant-speed forecast with a shared passing-side bias.

    When another agent is within ``interaction_radius`` and ahead, the forecast
    bends to the chosen side of the goal axis. The lateral offset ramps linearly
    over the horizon and scales with proximity, reaching ``side_gain`` at step K
    once the nearest conflicting agent is inside ``saturation_radius``.
    """
    if side_gain < 0.0:
        raise InvalidInputError("side_gain must be >= 0")
    if horizon < 1:
        raise InvalidInputError("horizon must be >= 1")
    if side not in ("right", "left"):
        raise InvalidInputError(f"side must be 'right' or 'left', got {side!r}")
    base = GaussianDist(np.zeros(2), cov).cov
    factors = _lateral_offsets(snap, interaction_radius, saturation_radius) if side_gain > 0.0 else {}
    ramp = np.arange(1, horizon + 1, dtype=float) / horizon
    sign = 1.0 if side == "right" else -1.0
    out = {}
    for aid, a in snap.agents.items():
        means = goal_directed_means(a.position, a.goal, nominal_speed, horizon, snap.dt)
        heading = a.goal - a.position
        norm = math.hypot(heading[0], heading[1])
        gain = side_gain * factors.get(aid, 0.0)
        if gain > 0.0 and norm > 0.0:
            right = sign * np.array([heading[1], -heading[0]]) / norm
            means = means + (gain * ramp)[:, None] * right
        out[aid] = tuple(GaussianMixtureDist.single(GaussianDist(m, base)) for m in means)
    return PredictionSet(out)


def predict_goal_directed(snap: WorldSnapshot, horizon: int, cov: ArrayLike, nominal_speed: float) -> PredictionSet:
    """Convention predictor with the bias switched off."""
    return predict_convention_biased(snap, horizon, cov, 0.0, nominal_speed)
