from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predmppi.core import InvalidInputError, State
from predmppi.metrics import (
    EpisodeMetrics,
    aggregate,
    aligned_plan_update,
    distance_traveled,
    episode_metrics,
    mean_abs_accel,
    mean_abs_angular,
    planning_effort,
)
from predmppi.prediction import AgentView, PredictionSet, WorldSnapshot
from predmppi.scenario import from_dict
from predmppi.simulation import EpisodeLog, TickRecord, run_episode

from .helpers import crossing, tiny


def control_log(controls):
    """EpisodeLog whose ticks apply the given (a, omega) pairs for a single agent."""
    view = AgentView(State(0.0, 0.0), 0.3, np.array([9.0, 0.0]))
    snap = WorldSnapshot(0, {"a": view}, 0.1)
    ticks = [
        TickRecord(t, snap, PredictionSet({}), {}, {"a": np.asarray(u, float)}, {}) for t, u in enumerate(controls)
    ]
    return EpisodeLog("synthetic", 0.0, 0, ticks, snap, "timeout")


# planning effort


def test_identical_plans_have_zero_effort():
    p = np.random.default_rng(0).normal(size=(6, 2))
    assert planning_effort([p, p, p]) == 0.0


def test_unit_shift_with_one_step_horizon():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert planning_effort([a, a + [0.0, 1.0]]) == pytest.approx(2.0)


def test_effort_averages_over_updates():
    a = np.zeros((3, 2))
    assert planning_effort([a, a + [1.0, 0.0], a + [1.0, 0.0]]) == pytest.approx(1.5)


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_effort_scales_with_positions(c, seed):
    plans = list(np.random.default_rng(seed).normal(size=(4, 5, 2)))
    assert planning_effort([c * p for p in plans]) == pytest.approx(c * planning_effort(plans), rel=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.integers(0, 1000))
def test_effort_translation_invariant(dx, dy, seed):
    plans = list(np.random.default_rng(seed).normal(size=(4, 5, 2)))
    moved = [p + [dx, dy] for p in plans]
    assert planning_effort(moved) == pytest.approx(planning_effort(plans), rel=1e-9, abs=1e-9)


def test_effort_input_errors():
    with pytest.raises(InvalidInputError):
        planning_effort([np.zeros((3, 2)), np.zeros((4, 2))])
    with pytest.raises(InvalidInputError):
        planning_effort([np.zeros((3, 2))])


def test_aligned_update_ignores_steady_motion():
    # a plan that is simply followed: each new plan is the old one advanced by one step
    path = np.stack([np.arange(30.0), np.zeros(30)], axis=1)
    plans = [path[t : t + 6] for t in range(10)]
    assert aligned_plan_update(plans) == 0.0
    assert planning_effort(plans) == pytest.approx(6.0)


# control statistics


def test_control_means():
    assert mean_abs_accel(control_log([[0.0, 0.0]] * 4)) == 0.0
    assert mean_abs_accel(control_log([[0.2, 0.0]] * 5)) == pytest.approx(0.2)
    alternating = control_log([[0.4 * (-1) ** t, -0.3 * (-1) ** t] for t in range(6)])
    assert mean_abs_accel(alternating) == pytest.approx(0.4)
    assert mean_abs_angular(alternating) == pytest.approx(0.3)


def test_control_means_need_controls():
    with pytest.raises(InvalidInputError):
        mean_abs_accel(control_log([]))


# aggregation


def em(pe=1.0, collided=False, deadlocked=False):
    return EpisodeMetrics(pe, 0.1, 0.2, 3.0, collided, deadlocked, 10)


def test_single_run_std_is_zero():
    s = aggregate([em(1.0)])
    assert s.n == 1 and s.std["planning_effort"] == 0.0


def test_two_run_mean_and_std():
    s = aggregate([em(1.0), em(3.0)])
    assert s.mean["planning_effort"] == 2.0
    assert s.std["planning_effort"] == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_deadlock_percentage():
    runs = [em(deadlocked=i < 9) for i in range(30)]
    s = aggregate(runs)
    assert s.dlk_pct == pytest.approx(30.0) and s.col_pct == 0.0


def test_aggregate_needs_runs():
    with pytest.raises(InvalidInputError):
        aggregate([])


# metrics from real episodes


def test_recomputation_is_exact():
    log = run_episode(from_dict(crossing(termination={"t_max": 40})), 1.0, 2)
    assert episode_metrics(log) == episode_metrics(log)
    m = episode_metrics(log)
    for v in (m.planning_effort, m.mean_abs_accel, m.mean_abs_angular, m.distance_traveled, m.ticks_to_done):
        assert v >= 0
    assert m.collided == (log.terminal == "collision") and m.deadlocked == (log.terminal == "deadlock")
    assert not (m.collided and m.deadlocked)


def test_distance_of_a_completed_run():
    log = run_episode(from_dict(tiny()), 0.0, 1)
    d = distance_traveled(log)
    straight = np.linalg.norm(log.trajectory("a")[-1] - log.trajectory("a")[0])
    assert straight <= d <= 2.0 * straight
