from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from predmppi import predictability as pm
from predmppi.core import GaussianDist, GaussianMixtureDist, InvalidInputError, Plan, RngStream
from predmppi.predictability import (
    PredictabilityConfig,
    free_energy_from_costs,
    free_energy_mc,
    kl_gaussian_gaussian,
    kl_gaussian_mixture_mc,
    kl_mc_terms,
    predictability_cost,
    predictability_costs_batch,
)

from .strategies import covariances, positions

I2 = np.eye(2)


def single(mean, cov=I2):
    return GaussianMixtureDist.single(GaussianDist(mean, cov))


def plan_through(points, cov=None):
    pts = np.asarray(points, dtype=float)
    states = np.zeros((len(pts), 4))
    states[:, :2] = pts
    kwargs = {} if cov is None else {"step_cov": cov}
    return Plan(states, np.zeros((len(pts) - 1, 2)), **kwargs)


# closed-form KL


def test_kl_identity_is_zero():
    g = GaussianDist([1.0, -2.0], [[2.0, 0.3], [0.3, 1.0]])
    assert kl_gaussian_gaussian(g, g) < 1e-12


def test_kl_unit_shift():
    assert kl_gaussian_gaussian(GaussianDist([0, 0], I2), GaussianDist([1, 0], I2)) == pytest.approx(0.5, abs=1e-12)


def test_kl_scale_mismatch():
    value = kl_gaussian_gaussian(GaussianDist([0, 0], 2 * I2), GaussianDist([0, 0], I2))
    assert value == pytest.approx(0.5 * (4.0 - 2.0 + math.log(0.25)), abs=1e-12)
    assert value == pytest.approx(0.3069, abs=1e-4)


@given(positions, covariances(), positions, covariances())
def test_kl_nonnegative(m1, c1, m2, c2):
    assert kl_gaussian_gaussian(GaussianDist(m1, c1), GaussianDist(m2, c2)) >= 0.0


@given(positions, covariances())
def test_kl_zero_for_matching_parameters(m, c):
    assert kl_gaussian_gaussian(GaussianDist(m, c), GaussianDist(m.copy(), c.copy())) <= 1e-9


# Monte-Carlo KL against mixtures


def test_mc_kl_identity_small_over_seeds():
    q = GaussianDist([0.5, 0.5], [[1.0, 0.2], [0.2, 0.5]])
    for seed in range(20):
        assert abs(kl_gaussian_mixture_mc(q, GaussianMixtureDist.single(q), 2048, RngStream(seed))) < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_mc_kl_matches_closed_form(seed):
    gen = np.random.default_rng(seed)
    q = GaussianDist(gen.normal(size=2), I2 * 0.5)
    p = GaussianDist(gen.normal(size=2), [[1.5, 0.4], [0.4, 0.8]])
    terms = kl_mc_terms(q, GaussianMixtureDist.single(p), 2048, RngStream(seed))
    se = terms.std(ddof=1) / math.sqrt(terms.size)
    assert abs(terms.mean() - kl_gaussian_gaussian(q, p)) <= 3.0 * se


def test_mc_kl_far_modes_is_log_two():
    q = GaussianDist([0.0, 0.0], I2)
    p = GaussianMixtureDist(((0.5, GaussianDist([0.0, 0.0], I2)), (0.5, GaussianDist([100.0, 0.0], I2))))
    assert kl_gaussian_mixture_mc(q, p, 2048, RngStream(3)) == pytest.approx(math.log(2.0), abs=0.05)


def test_mc_kl_is_deterministic_per_key():
    q = GaussianDist([0.0, 0.0], I2)
    p = single([1.0, 1.0], 2 * I2)
    assert kl_gaussian_mixture_mc(q, p, 64, RngStream(9, (1,))) == kl_gaussian_mixture_mc(q, p, 64, RngStream(9, (1,)))


# discounted predictability cost


def test_zero_lambda_costs_nothing():
    plan = plan_through([[0, 0], [5, 5], [9, 9]])
    pred = [single([0, 0]), single([0, 0])]
    assert predictability_cost(plan, pred, PredictabilityConfig(lam=0.0), RngStream(0)) == 0.0


def test_matching_plan_and_prediction_cost_nothing():
    cov = 0.3 * I2
    plan = plan_through([[0, 0], [1, 0], [2, 0]], cov=cov)
    pred = [single([1, 0], cov), single([2, 0], cov)]
    assert predictability_cost(plan, pred, PredictabilityConfig(lam=5.0), RngStream(0)) < 1e-12


def test_single_step_contribution():
    plan = plan_through([[0, 0], [0, 0]], cov=I2)
    pred = [single([1, 0])]  # KL = 0.5
    cfg = PredictabilityConfig(lam=2.0, gamma=0.6)
    assert predictability_cost(plan, pred, cfg, RngStream(0)) == pytest.approx(0.6, abs=1e-12)


def test_zero_discount_gives_zero():
    plan = plan_through([[0, 0], [3, 0], [6, 0]])
    pred = [single([0, 0]), single([0, 0])]
    assert predictability_cost(plan, pred, PredictabilityConfig(lam=4.0, gamma=0.0), RngStream(0)) == 0.0


@given(st.floats(0.01, 50.0), st.sampled_from(["closed-form", "monte-carlo", "delta"]))
def test_cost_is_linear_in_lambda(lam, mode):
    plan = plan_through([[0, 0], [1, 0.5], [2, 1.5], [3, 1.0]])
    pred = [single([1, 0]), single([2, 0], 2 * I2), single([2.5, 0.5])]
    a = predictability_cost(plan, pred, PredictabilityConfig(lam=lam, kl_mode=mode), RngStream(1))
    b = predictability_cost(plan, pred, PredictabilityConfig(lam=2 * lam, kl_mode=mode), RngStream(1))
    assert b == 2 * a


def test_horizon_mismatch_rejected():
    plan = plan_through([[0, 0], [1, 0], [2, 0]])
    with pytest.raises(InvalidInputError):
        predictability_cost(plan, [single([0, 0])], PredictabilityConfig(lam=1.0), RngStream(0))


def test_delta_mode_formula():
    cov = 0.05 * I2
    plan = plan_through([[0, 0], [0.3, 0.1]], cov=cov)
    p = single([0.0, 0.0], 0.5 * I2)
    q = plan.step_distribution(1)
    expected = 0.6 * 3.0 * (-float(p.log_density(q.mean)) - q.entropy())
    cfg = PredictabilityConfig(lam=3.0, gamma=0.6, kl_mode="delta")
    assert predictability_cost(plan, [p], cfg, RngStream(0)) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("mode", ["closed-form", "monte-carlo", "delta"])
def test_batch_matches_reference(mode):
    gen = np.random.default_rng(4)
    horizon = 6
    mixes = [
        GaussianMixtureDist(((0.7, GaussianDist(gen.normal(size=2), I2)), (0.3, GaussianDist(gen.normal(size=2), 0.5 * I2))))
        for _ in range(horizon)
    ]
    singles = [single(gen.normal(size=2), 0.4 * I2) for _ in range(horizon)]
    cfg = PredictabilityConfig(lam=2.5, gamma=0.8, kl_mode=mode, n_kl_samples=8)
    cov = 0.05 * I2
    positions_ = gen.normal(size=(7, horizon + 1, 2))
    for pred in (mixes, singles):
        batch = predictability_costs_batch(positions_, pred, cov, cfg, RngStream(11))
        for m in range(positions_.shape[0]):
            ref = predictability_cost(plan_through(positions_[m], cov), pred, cfg, RngStream(11))
            assert batch[m] == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_lambda_zero_never_evaluates_kl():
    pred = [single([0, 0])] * 3
    before = pm.KL_EVALUATIONS
    predictability_costs_batch(np.zeros((5, 4, 2)), pred, 0.05 * I2, PredictabilityConfig(lam=0.0), RngStream(0))
    predictability_cost(plan_through(np.zeros((4, 2))), pred, PredictabilityConfig(lam=0.0), RngStream(0))
    assert pm.KL_EVALUATIONS == before


def test_config_validation():
    for bad in ({"lam": -1.0}, {"gamma": 1.5}, {"n_kl_samples": 0}, {"kl_mode": "exact"}):
        with pytest.raises(InvalidInputError):
            PredictabilityConfig(**bad)


# free energy


def test_constant_cost_free_energy_is_exact():
    p = single([0, 0])
    for lam in (0.1, 1.0, 7.5):
        assert free_energy_mc(lambda x: np.full(len(x), 3.25), p, lam, 17, RngStream(2)) == 3.25


def test_high_temperature_limit_is_mean_cost():
    p = single([0, 0])
    s = lambda x: np.sum(x * x, axis=1)  # noqa: E731
    draws = p.sample(RngStream(5).generator(), 4096)
    f = free_energy_mc(s, p, 1e4, 4096, RngStream(5))
    assert f == pytest.approx(float(np.mean(s(draws))), rel=0.02)


def test_quadratic_cost_against_brute_force_oracle():
    p = single([0, 0])
    s = lambda x: 0.5 * np.sum(x * x, axis=1)  # noqa: E731
    oracle_draws = np.random.default_rng(123).standard_normal((1_000_000, 2))
    e = np.exp(-s(oracle_draws))
    oracle = -math.log(float(e.mean()))
    assert oracle == pytest.approx(math.log(2.0), abs=5e-3)
    draws = p.sample(RngStream(8).generator(), 4096)
    ed = np.exp(-s(draws))
    se = float(ed.std(ddof=1) / (math.sqrt(ed.size) * ed.mean()))
    f = free_energy_mc(s, p, 1.0, 4096, RngStream(8))
    assert abs(f - oracle) <= 3.0 * se


def test_free_energy_is_stable_for_large_costs():
    assert free_energy_from_costs(np.array([1e6, 1e6 + 1.0]), 0.01) == pytest.approx(1e6 + 0.01 * math.log(2.0))


def test_free_energy_rejects_zero_lambda():
    with pytest.raises(InvalidInputError):
        free_energy_mc(lambda x: np.zeros(len(x)), single([0, 0]), 0.0, 4, RngStream(0))
