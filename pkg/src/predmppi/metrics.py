"""Post-hoc episode metrics and batch aggregation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .core import InvalidInputError, Plan
from .simulation import EpisodeLog

METRIC_FIELDS = ("planning_effort", "mean_abs_accel", "mean_abs_angular", "distance_traveled", "ticks_to_done")


@dataclass(frozen=True)
class EpisodeMetrics:
    planning_effort: float
    mean_abs_accel: float
    mean_abs_angular: float
    distance_traveled: float
    collided: bool
    deadlocked: bool
    ticks_to_done: int

    def as_dict(self) -> dict:
        return asdict(self)


def planning_effort(plans: Sequence[Plan] | Sequence[NDArray]) -> float:
    """Average per-tick plan update: ``1/(T-1) * sum_t sum_k |x_k^t - x_k^{t+1}|`` over positions.

    The norm is unsquared, i.e. a magnitude in metres.
    """
    pos = [np.asarray(p.positions if isinstance(p, Plan) else np.asarray(p)[:, :2], dtype=float) for p in plans]
    if len(pos) < 2:
        raise InvalidInputError("planning effort needs at least two plans")
    if len({p.shape for p in pos}) != 1:
        raise InvalidInputError("plans have mismatched horizons")
    stack = np.stack(pos)
    return float(np.linalg.norm(np.diff(stack, axis=0), axis=-1).sum() / (len(pos) - 1))


def aligned_plan_update(plans: Sequence[Plan] | Sequence[NDArray]) -> float:
    """Diagnostic companion to :func:`planning_effort` that compares states planned for the same time.

    Consecutive plans start one tick apart, so ``x_{k+1}^t`` is matched with ``x_k^{t+1}``
    (K terms per pair). Unlike the printed formula this does not grow with cruise speed.
    """
    pos = [np.asarray(p.positions if isinstance(p, Plan) else np.asarray(p)[:, :2], dtype=float) for p in plans]
    if len(pos) < 2:
        raise InvalidInputError("plan update needs at least two plans")
    if len({p.shape for p in pos}) != 1:
        raise InvalidInputError("plans have mismatched horizons")
    stack = np.stack(pos)
    return float(np.linalg.norm(stack[:-1, 1:] - stack[1:, :-1], axis=-1).sum() / (len(pos) - 1))


def _applied(log: EpisodeLog) -> NDArray:
    rows = [u for rec in log.ticks for u in rec.controls.values()]
    return np.array(rows) if rows else np.zeros((0, 2))


def mean_abs_accel(log: EpisodeLog) -> float:
    u = _applied(log)
    if u.shape[0] == 0:
        raise InvalidInputError("log has no applied controls")
    return float(np.mean(np.abs(u[:, 0])))


def mean_abs_angular(log: EpisodeLog) -> float:
    u = _applied(log)
    if u.shape[0] == 0:
        raise InvalidInputError("log has no applied controls")
    return float(np.mean(np.abs(u[:, 1])))


def agent_planning_efforts(log: EpisodeLog) -> dict[str, float]:
    """Per-agent planning effort over the ticks the agent planned (agents with < 2 plans are omitted)."""
    out = {}
    for aid in log.agent_ids:
        plans = [rec.plans[aid] for rec in log.ticks if aid in rec.plans]
        if len(plans) >= 2:
            out[aid] = planning_effort(plans)
    return out


def distance_traveled(log: EpisodeLog) -> float:
    """Path length per agent, averaged over agents."""
    lengths = [float(np.linalg.norm(np.diff(log.trajectory(aid), axis=0), axis=1).sum()) for aid in log.agent_ids]
    return float(np.mean(lengths)) if lengths else 0.0


def episode_metrics(log: EpisodeLog) -> EpisodeMetrics:
    pe = agent_planning_efforts(log)
    has_controls = any(rec.controls for rec in log.ticks)
    return EpisodeMetrics(
        planning_effort=float(np.mean(list(pe.values()))) if pe else 0.0,
        mean_abs_accel=mean_abs_accel(log) if has_controls else 0.0,
        mean_abs_angular=mean_abs_angular(log) if has_controls else 0.0,
        distance_traveled=distance_traveled(log),
        collided=log.terminal == "collision",
        deadlocked=log.terminal == "deadlock",
        ticks_to_done=len(log.ticks),
    )


@dataclass(frozen=True)
class Summary:
    n: int
    mean: dict[str, float]
    std: dict[str, float]
    col_pct: float
    dlk_pct: float


def _sample_std(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=float), ddof=1))


def aggregate(runs: Sequence[EpisodeMetrics]) -> Summary:
    """Mean and sample standard deviation (n - 1) per metric; collision/deadlock as percentages."""
    if not runs:
        raise InvalidInputError("aggregate needs at least one run")
    mean, std = {}, {}
    for name in METRIC_FIELDS:
        vals = [float(getattr(r, name)) for r in runs]
        mean[name] = float(math.fsum(vals) / len(vals))
        std[name] = _sample_std(vals)
    n = len(runs)
    return Summary(
        n=n,
        mean=mean,
        std=std,
        col_pct=100.0 * sum(r.collided for r in runs) / n,
        dlk_pct=100.0 * sum(r.deadlocked for r in runs) / n,
    )
