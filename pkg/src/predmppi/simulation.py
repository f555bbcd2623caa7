"""Synchronous multi-agent closed loop: predict once per tick, plan every agent, step, check termination."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import Plan, RngStream, State
from .planner import PlanDiagnostics, agent_key, plan
from .prediction import (
    AgentView,
    Belief,
    PredictionSet,
    WorldSnapshot,
    goal_modes,
    predict_constant_velocity,
    predict_convention_biased,
    predict_goal_conditioned,
    update_beliefs,
)
from .scenario import ConfigurationError, Scenario, TerminationSpec

Terminal = Literal["collision", "deadlock", "all-goals-reached", "timeout"]
TERMINALS: tuple[Terminal, ...] = ("collision", "deadlock", "all-goals-reached", "timeout")

JITTER_STREAM = 0x4A17


@dataclass(frozen=True)
class TickRecord:
    tick: int
    snapshot: WorldSnapshot
    predictions: PredictionSet
    plans: dict[str, Plan]
    controls: dict[str, NDArray]
    diagnostics: dict[str, PlanDiagnostics]
    beliefs: dict[str, Belief] = field(default_factory=dict)


@dataclass
class EpisodeLog:
    scenario: str
    lam: float
    seed: int
    ticks: list[TickRecord]
    final: WorldSnapshot
    terminal: Terminal
    collision_pair: tuple[str, str] | None = None
    goal_names: tuple[str, ...] = ()

    @property
    def agent_ids(self) -> list[str]:
        return self.final.ids

    @property
    def terminal_flags(self) -> dict[str, bool]:
        return {t: t == self.terminal for t in TERMINALS}

    def trajectory(self, agent_id: str) -> NDArray:
        """(T+1, 2) positions: one per tick snapshot plus the final state."""
        pts = [rec.snapshot.agents[agent_id].position for rec in self.ticks]
        pts.append(self.final.agents[agent_id].position)
        return np.array(pts)

    def snapshots(self) -> list[WorldSnapshot]:
        return [rec.snapshot for rec in self.ticks] + [self.final]


def detect_collision(snap: WorldSnapshot, radii: Mapping[str, float] | None = None) -> tuple[str, str] | None:
    """First overlapping pair in id order, using strict ``distance < r_i + r_j``."""
    ids = snap.ids
    for i, a in enumerate(ids):
        for b in ids[i + 1 :]:
            ra = radii[a] if radii else snap.agents[a].radius
            rb = radii[b] if radii else snap.agents[b].radius
            d = snap.agents[a].position - snap.agents[b].position
            if math.hypot(d[0], d[1]) < ra + rb:
                return (a, b)
    return None


def at_goal(view: AgentView, tol: float) -> bool:
    d = view.position - view.goal
    return math.hypot(d[0], d[1]) <= tol


def detect_deadlock(history: Sequence[WorldSnapshot], spec: TerminationSpec) -> bool:
    """True when, for the last ``deadlock_dwell`` snapshots, every agent away from its goal
    moved slower than ``deadlock_speed`` (strictly) and at least one agent was away from its goal."""
    if len(history) < spec.deadlock_dwell:
        return False
    for snap in history[-spec.deadlock_dwell :]:
        away = [a for a in snap.agents.values() if not at_goal(a, spec.goal_tolerance)]
        if not away:
            return False
        if any(abs(a.state.v) >= spec.deadlock_speed for a in away):
            return False
    return True


def _predict(
    scenario: Scenario,
    snap: WorldSnapshot,
    beliefs: Mapping[str, Belief],
) -> PredictionSet:
    p = scenario.predictor
    horizon = scenario.planner.horizon
    if p.kind == "constant_velocity":
        return predict_constant_velocity(snap, horizon, p.cov)
    if p.kind == "convention_biased":
        return predict_convention_biased(
            snap,
            horizon,
            p.cov,
            p.side_gain,
            p.nominal_speed,
            p.interaction_radius,
            p.saturation_radius,
            p.side,
        )
    return PredictionSet(
        {
            aid: tuple(
                predict_goal_conditioned(beliefs[aid], a.state, p.goals, horizon, p.cov, p.nominal_speed, snap.dt)
            )
            for aid, a in snap.agents.items()
        }
    )


def initial_states(scenario: Scenario, seed: int) -> dict[str, State]:
    gen = RngStream(seed, (JITTER_STREAM,)).generator()
    out = {}
    for agent in scenario.agents:
        s = agent.start
        if scenario.jitter_sigma > 0.0:
            dx, dy = gen.normal(0.0, scenario.jitter_sigma, 2)
            s = State(s.x + dx, s.y + dy, s.theta, s.v)
        out[agent.id] = s
    return out


def check_scenario(scenario: Scenario) -> None:
    errors = []
    ids = [a.id for a in scenario.agents]
    if len(set(ids)) != len(ids):
        errors.append(f"duplicate agent ids {ids}")
    if scenario.predictor.kind == "goal_conditioned":
        if not scenario.predictor.goals:
            errors.append("goal_conditioned predictor needs goals")
        if set(scenario.predictor.goals) != set(scenario.predictor.prior):
            errors.append("goal_conditioned prior must cover exactly the goal set")
    if errors:
        raise ConfigurationError(errors)


def run_episode(scenario: Scenario, lam: float, seed: int, order: Iterable[str] | None = None) -> EpisodeLog:
    """Simulate one closed-loop episode; deterministic in ``(scenario, lam, seed)``.

    ``order`` only permutes the loop that calls the planner; every agent plans from
    the same tick snapshot with its own random stream, so the log never depends on it.
    """
    check_scenario(scenario)
    pcfg = scenario.predictability(lam)
    spec = scenario.termination
    agents = {a.id: a for a in scenario.agents}
    models = {aid: scenario.model_for(a) for aid, a in agents.items()}
    stages = {aid: scenario.stage_for(a) for aid, a in agents.items()}
    states = initial_states(scenario, seed)
    prev: dict[str, State | None] = {aid: None for aid in agents}
    nominal = {aid: np.zeros((scenario.planner.horizon, 2)) for aid in agents}
    arrived = {aid: False for aid in agents}
    goal_names = tuple(scenario.predictor.goals) if scenario.predictor.kind == "goal_conditioned" else ()
    beliefs: dict[str, Belief] = {}
    if goal_names:
        prior = Belief(goal_names, np.array([scenario.predictor.prior[g] for g in goal_names]))
        beliefs = {aid: prior for aid in agents}
    plan_order = list(order) if order is not None else sorted(agents)

    def snapshot(tick: int) -> WorldSnapshot:
        views = {
            aid: AgentView(states[aid], agents[aid].radius, agents[aid].goal, prev[aid]) for aid in agents
        }
        return WorldSnapshot(tick, views, scenario.dt)

    ticks: list[TickRecord] = []
    history: list[WorldSnapshot] = []
    terminal: Terminal = "timeout"
    pair = None
    last_preds: PredictionSet | None = None
    for t in range(spec.t_max):
        snap = snapshot(t)
        for aid in agents:
            if not arrived[aid] and at_goal(snap.agents[aid], spec.goal_tolerance):
                arrived[aid] = True
                s = states[aid]
                states[aid] = State(s.x, s.y, s.theta, 0.0)
        snap = snapshot(t)
        if all(arrived.values()):
            terminal = "all-goals-reached"
            break
        if goal_names and last_preds is not None:
            beliefs = {
                aid: update_beliefs(beliefs[aid], states[aid].position, goal_modes(last_preds[aid][0], goal_names))
                for aid in agents
            }
        preds = _predict(scenario, snap, beliefs)
        plans, controls, diags = {}, {}, {}
        for aid in plan_order:
            if arrived[aid]:
                continue
            rng = RngStream(seed, (t, agent_key(aid)))
            pl, nominal[aid], diags[aid] = plan(
                aid, snap, preds, nominal[aid], models[aid], stages[aid], scenario.planner, pcfg, rng
            )
            plans[aid] = pl
            controls[aid] = pl.controls[0].copy()
        ticks.append(
            TickRecord(
                t,
                snap,
                preds,
                dict(sorted(plans.items())),
                dict(sorted(controls.items())),
                dict(sorted(diags.items())),
                dict(beliefs),
            )
        )
        history.append(snap)
        last_preds = preds
        for aid in agents:
            prev[aid] = states[aid]
            if aid in plans:
                states[aid] = State.from_array(plans[aid].states[1])
        after = snapshot(t + 1)
        pair = detect_collision(after)
        if pair is not None:
            terminal = "collision"
            break
        if detect_deadlock(history + [after], spec):
            terminal = "deadlock"
            break
    else:
        snap = snapshot(spec.t_max)
        if all(arrived[aid] or at_goal(snap.agents[aid], spec.goal_tolerance) for aid in agents):
            terminal = "all-goals-reached"
    final = snapshot(len(ticks))
    return EpisodeLog(scenario.name, float(lam), int(seed), ticks, final, terminal, pair, goal_names)

