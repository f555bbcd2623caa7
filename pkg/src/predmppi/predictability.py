"""KL divergences between a plan's narrow Gaussians and the shared prediction, plus free-energy estimates.

The predictability cost of a plan is

    sum_{k=1..K} gamma**k * lam * KL(N(x_k, plan_cov) || p_k)

where ``p_k`` is the shared model's mixture forecast for the planning agent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from .core import GaussianDist, GaussianMixtureDist, InvalidInputError, Plan, RngStream

KLMode = Literal["closed-form", "monte-carlo", "delta"]

# Incremented every time a KL term is evaluated; lets tests confirm lam == 0 skips the work.
KL_EVALUATIONS = 0


@dataclass(frozen=True)
class PredictabilityConfig:
    lam: float = 0.0
    gamma: float = 0.6
    n_kl_samples: int = 16
    kl_mode: KLMode = "closed-form"

    def __post_init__(self) -> None:
        if not (self.lam >= 0.0 and math.isfinite(self.lam)):
            raise InvalidInputError(f"lambda must be a finite value >= 0, got {self.lam}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidInputError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.n_kl_samples < 1:
            raise InvalidInputError("n_kl_samples must be >= 1")
        if self.kl_mode not in ("closed-form", "monte-carlo", "delta"):
            raise InvalidInputError(f"unknown kl_mode {self.kl_mode!r}")


def kl_gaussian_gaussian(q: GaussianDist, p: GaussianDist) -> float:
    """Closed-form KL(q || p) for bivariate Gaussians."""
    prec = p.precision
    diff = p.mean - q.mean
    trace = float(np.sum(prec * q.cov.T))
    quad = float(diff @ prec @ diff)
    return max(0.0, 0.5 * (trace + quad - 2.0 + p.log_det - q.log_det))


def kl_mc_terms(q: GaussianDist, p: GaussianMixtureDist, n: int, rng: RngStream) -> NDArray:
    """Per-draw log-ratios ``log q(x_i) - log p(x_i)`` with ``x_i ~ q``."""
    if n < 1:
        raise InvalidInputError("need at least one Monte-Carlo sample")
    x = q.sample(rng.generator(), n)
    return q.log_density(x) - p.log_density(x)


def kl_gaussian_mixture_mc(q: GaussianDist, p: GaussianMixtureDist, n: int, rng: RngStream) -> float:
    global KL_EVALUATIONS
    KL_EVALUATIONS += 1
    return float(np.mean(kl_mc_terms(q, p, n, rng)))


def _kl_step(q: GaussianDist, p: GaussianMixtureDist, cfg: PredictabilityConfig, rng: RngStream) -> float:
    global KL_EVALUATIONS
    if cfg.kl_mode == "delta":
        KL_EVALUATIONS += 1
        return -float(p.log_density(q.mean)) - q.entropy()
    if cfg.kl_mode == "closed-form" and len(p.components) == 1:
        KL_EVALUATIONS += 1
        return kl_gaussian_gaussian(q, p.components[0][1])
    # common random numbers: draws depend only on the step key, never on the plan
    z = rng.generator().standard_normal((cfg.n_kl_samples, 2))
    x = q.mean + z @ q.chol.T
    KL_EVALUATIONS += 1
    return float(np.mean(q.log_density(x) - p.log_density(x)))


def predictability_cost(
    plan: Plan,
    pred: Sequence[GaussianMixtureDist],
    cfg: PredictabilityConfig,
    rng: RngStream,
) -> float:
    """Discounted, weighted KL between the plan's step distributions and the forecast (k = 1..K)."""
    if len(pred) != plan.horizon:
        raise InvalidInputError(f"plan horizon {plan.horizon} does not match prediction length {len(pred)}")
    if cfg.lam == 0.0:
        return 0.0
    total = 0.0
    for k in range(1, plan.horizon + 1):
        disc = cfg.gamma**k
        if disc == 0.0:
            continue
        kl = _kl_step(plan.step_distribution(k), pred[k - 1], cfg, rng.child(k))
        total += disc * cfg.lam * kl
    return total


def predictability_costs_batch(
    positions: NDArray,
    pred: Sequence[GaussianMixtureDist],
    plan_cov: NDArray,
    cfg: PredictabilityConfig,
    rng: RngStream,
) -> NDArray:
    """Vectorised :func:`predictability_cost` over (M, K+1, 2) rollout positions; returns (M,)."""
    global KL_EVALUATIONS
    m, kp1, _ = positions.shape
    horizon = kp1 - 1
    if len(pred) != horizon:
        raise InvalidInputError(f"rollout horizon {horizon} does not match prediction length {len(pred)}")
    out = np.zeros(m)
    if cfg.lam == 0.0:
        return out
    q0 = GaussianDist(np.zeros(2), plan_cov)
    entropy_q = q0.entropy()
    for k in range(1, horizon + 1):
        disc = cfg.gamma**k
        if disc == 0.0:
            continue
        p = pred[k - 1]
        mu = positions[:, k, :]
        KL_EVALUATIONS += m
        if cfg.kl_mode == "delta":
            kl = -p.log_density(mu) - entropy_q
        elif cfg.kl_mode == "closed-form" and len(p.components) == 1:
            g = p.components[0][1]
            prec = g.precision
            d = g.mean - mu
            quad = prec[0, 0] * d[:, 0] ** 2 + 2.0 * prec[0, 1] * d[:, 0] * d[:, 1] + prec[1, 1] * d[:, 1] ** 2
            trace = float(np.sum(prec * q0.cov.T))
            kl = np.maximum(0.0, 0.5 * (trace + quad - 2.0 + g.log_det - q0.log_det))
        else:
            z = rng.child(k).generator().standard_normal((cfg.n_kl_samples, 2))
            offs = z @ q0.chol.T
            x = mu[:, None, :] + offs[None, :, :]
            log_q = q0.log_density(offs)[None, :]
            kl = np.mean(log_q - p.log_density(x), axis=1)
        out += disc * cfg.lam * kl
    return out


def free_energy_terms(
    state_cost: Callable[[NDArray], NDArray],
    p: GaussianMixtureDist,
    n: int,
    rng: RngStream,
) -> NDArray:
    """State costs ``S(x_i)`` at ``n`` draws from the prediction ``p``."""
    if n < 1:
        raise InvalidInputError("need at least one Monte-Carlo sample")
    x = p.sample(rng.generator(), n)
    return np.asarray(state_cost(x), dtype=float).reshape(n)


def free_energy_from_costs(costs: NDArray, lam: float) -> float:
    """``-lam * log(mean(exp(-S / lam)))`` evaluated stably around the minimum cost."""
    if not lam > 0.0:
        raise InvalidInputError("free energy needs lambda > 0")
    lo = float(np.min(costs))
    return lo - lam * math.log(float(np.mean(np.exp(-(costs - lo) / lam))))


def free_energy_mc(
    state_cost: Callable[[NDArray], NDArray],
    p: GaussianMixtureDist,
    lam: float,
    n: int,
    rng: RngStream,
) -> float:
    """Monte-Carlo free energy of ``state_cost`` under the prediction ``p``."""
    if not lam > 0.0:
        raise InvalidInputError("free energy needs lambda > 0")
    return free_energy_from_costs(free_energy_terms(state_cost, p, n, rng), lam)
