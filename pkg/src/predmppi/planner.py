"""MPPI planner whose sample cost adds a collision-probability penalty and the predictability cost."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import DEFAULT_PLAN_COV, GaussianMixtureDist, InvalidInputError, Plan, RngStream
from .dynamics import DynamicsModel, rollout_array, rollout_batch
from .prediction import PredictionSet, WorldSnapshot
from .predictability import PredictabilityConfig, predictability_cost, predictability_costs_batch

# sub-stream tags under an (tick, agent) stream
NOISE_STREAM = 1
COLLISION_STREAM = 2
KL_STREAM = 3


@dataclass(frozen=True)
class PlannerConfig:
    horizon: int = 20
    n_samples: int = 512
    noise_var: tuple[float, float] = (0.5, 0.3)
    lambda_mppi: float = 1.0
    w_col: float = 1e3
    n_col: int = 16
    hard_overlap_cost: float = 1e4
    plan_cov: NDArray = field(default_factory=lambda: np.array(DEFAULT_PLAN_COV))

    def __post_init__(self) -> None:
        problems = []
        if self.horizon < 1:
            problems.append("horizon must be >= 1")
        if self.n_samples < 2:
            problems.append("n_samples must be >= 2")
        if len(self.noise_var) != 2 or min(self.noise_var) <= 0.0:
            problems.append("noise variances must be positive")
        if not self.lambda_mppi > 0.0:
            problems.append("lambda_mppi must be positive")
        if self.w_col < 0.0 or self.hard_overlap_cost < 0.0:
            problems.append("collision weights must be >= 0")
        if self.n_col < 1:
            problems.append("n_col must be >= 1")
        if problems:
            raise InvalidInputError("; ".join(problems))
        object.__setattr__(self, "noise_var", tuple(float(v) for v in self.noise_var))
        object.__setattr__(self, "plan_cov", np.array(self.plan_cov, dtype=float))


@dataclass(frozen=True)
class StageCostSpec:
    """Performance cost weights.

    Per step k = 1..K the cost is ``w_goal * |p_k - goal|`` plus
    ``w_track * dist(p_k, reference_path)**2``; the last step adds
    ``w_terminal * |p_K - goal|``; every applied input adds
    ``w_accel * a**2 + w_omega * omega**2``.
    """

    goal: NDArray
    w_goal: float = 1.0
    w_terminal: float = 5.0
    w_accel: float = 0.05
    w_omega: float = 0.05
    reference_path: NDArray | None = None
    w_track: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "goal", np.asarray(self.goal, dtype=float).reshape(2))
        if self.reference_path is not None:
            path = np.asarray(self.reference_path, dtype=float)
            if path.ndim != 2 or path.shape[1] != 2 or path.shape[0] < 2:
                raise InvalidInputError("reference path needs at least two (x, y) vertices")
            object.__setattr__(self, "reference_path", path)
        for name in ("w_goal", "w_terminal", "w_accel", "w_omega", "w_track"):
            if getattr(self, name) < 0.0:
                raise InvalidInputError(f"{name} must be >= 0")


@dataclass(frozen=True)
class PlanDiagnostics:
    stage: float
    collision: float
    predictability: float
    best_sample_cost: float
    mean_sample_cost: float

    @property
    def total(self) -> float:
        return self.stage + self.collision + self.predictability


def path_distance(points: NDArray, path: NDArray) -> NDArray:
    """Euclidean distance from (..., 2) points to a polyline."""
    a = path[:-1]
    seg = path[1:] - a
    seg_len2 = np.maximum(np.sum(seg * seg, axis=1), 1e-18)
    rel = points[..., None, :] - a
    t = np.clip(np.sum(rel * seg, axis=-1) / seg_len2, 0.0, 1.0)
    closest = a + t[..., None] * seg
    return np.min(np.linalg.norm(points[..., None, :] - closest, axis=-1), axis=-1)


def stage_costs_batch(traj: NDArray, controls: NDArray, stage: StageCostSpec) -> NDArray:
    """(M, K+1, 4) rollouts and (M, K, 2) controls to (M,) performance costs."""
    pos = traj[:, 1:, :2]
    dist = np.linalg.norm(pos - stage.goal, axis=-1)
    cost = stage.w_goal * dist.sum(axis=1) + stage.w_terminal * dist[:, -1]
    cost = cost + stage.w_accel * np.sum(controls[..., 0] ** 2, axis=1)
    cost = cost + stage.w_omega * np.sum(controls[..., 1] ** 2, axis=1)
    if stage.reference_path is not None and stage.w_track > 0.0:
        cost = cost + stage.w_track * np.sum(path_distance(pos, stage.reference_path) ** 2, axis=1)
    return cost


def stage_cost(traj: NDArray, controls: NDArray, stage: StageCostSpec) -> float:
    total = 0.0
    for k in range(1, traj.shape[0]):
        p = traj[k, :2]
        total += stage.w_goal * math.hypot(*(p - stage.goal))
        if stage.reference_path is not None and stage.w_track > 0.0:
            total += stage.w_track * float(path_distance(p, stage.reference_path)) ** 2
    total += stage.w_terminal * math.hypot(*(traj[-1, :2] - stage.goal))
    for a, omega in controls:
        total += stage.w_accel * a * a + stage.w_omega * omega * omega
    return total


def agent_key(agent_id: str) -> int:
    """Stable integer key for an agent id, independent of which other agents exist."""
    return zlib.crc32(agent_id.encode("utf-8"))


def collision_draws(pred: Sequence[GaussianMixtureDist], horizon: int, n: int, rng: RngStream) -> NDArray:
    """(K, n, 2) position draws from an agent's forecast, one generator for all steps."""
    gen = rng.generator()
    u = gen.random((horizon, n))
    z = gen.standard_normal((horizon, n, 2))
    out = np.empty((horizon, n, 2))
    for k in range(horizon):
        mix = pred[k]
        if len(mix.components) == 1:
            g = mix.components[0][1]
            out[k] = g.mean + z[k] @ g.chol.T
            continue
        cdf = np.cumsum(mix.weights)
        idx = np.minimum(np.searchsorted(cdf, u[k], side="right"), len(mix.components) - 1)
        for i, (_, g) in enumerate(mix.components):
            sel = idx == i
            out[k, sel] = g.mean + z[k, sel] @ g.chol.T
    return out


def _others(others_pred: PredictionSet | Mapping[str, Sequence[GaussianMixtureDist]], ego_id: str | None):
    items = others_pred.by_agent.items() if isinstance(others_pred, PredictionSet) else others_pred.items()
    return [(oid, seq) for oid, seq in sorted(items) if oid != ego_id]


def collision_costs_batch(
    positions: NDArray,
    others_pred: PredictionSet | Mapping[str, Sequence[GaussianMixtureDist]],
    ego_radius: float,
    radii: Mapping[str, float],
    cfg: PlannerConfig,
    rng: RngStream,
    ego_id: str | None = None,
) -> NDArray:
    """Vectorised :func:`collision_penalty` over (M, K+1, 2) rollout positions."""
    m, kp1, _ = positions.shape
    horizon = kp1 - 1
    out = np.zeros(m)
    px = positions[:, 1:, 0]
    py = positions[:, 1:, 1]
    lo = np.stack([px.min(axis=0), py.min(axis=0)], axis=1)
    hi = np.stack([px.max(axis=0), py.max(axis=0)], axis=1)
    for oid, seq in _others(others_pred, ego_id):
        if len(seq) < horizon:
            raise InvalidInputError(f"forecast for {oid} shorter than the planning horizon")
        reach2 = (ego_radius + radii[oid]) ** 2
        draws = collision_draws(seq, horizon, cfg.n_col, rng.child(agent_key(oid)))
        # exact skip: steps whose draw box and rollout box are farther apart than the reach
        gap = np.maximum(0.0, np.maximum(draws.min(axis=1) - hi, lo - draws.max(axis=1)))
        near = np.flatnonzero(gap[:, 0] * gap[:, 0] + gap[:, 1] * gap[:, 1] < reach2)
        if near.size:
            sub = draws[near]
            dx = px[:, near, None] - sub[None, :, :, 0]
            dy = py[:, near, None] - sub[None, :, :, 1]
            hits = np.count_nonzero(dx * dx + dy * dy < reach2, axis=2)
            out += cfg.w_col * (hits / cfg.n_col).sum(axis=1)
        means = np.array([seq[k].mean for k in range(horizon)])
        mx = px - means[None, :, 0]
        my = py - means[None, :, 1]
        out += cfg.hard_overlap_cost * np.count_nonzero(mx * mx + my * my < reach2, axis=1)
    return out


def collision_penalty(
    traj: NDArray,
    others_pred: PredictionSet | Mapping[str, Sequence[GaussianMixtureDist]],
    ego_radius: float,
    radii: Mapping[str, float],
    cfg: PlannerConfig,
    rng: RngStream,
    ego_id: str | None = None,
) -> float:
    """Soft collision-probability penalty along one trajectory (steps k = 1..K).

    Each other agent contributes ``w_col`` times the fraction of its forecast
    draws within the combined radius, plus ``hard_overlap_cost`` whenever its
    forecast mean itself overlaps the trajectory.
    """
    traj = np.asarray(traj, dtype=float)
    horizon = traj.shape[0] - 1
    total = 0.0
    for oid, seq in _others(others_pred, ego_id):
        if len(seq) < horizon:
            raise InvalidInputError(f"forecast for {oid} shorter than the planning horizon")
        reach2 = (ego_radius + radii[oid]) ** 2
        draws = collision_draws(seq, horizon, cfg.n_col, rng.child(agent_key(oid)))
        for k in range(1, horizon + 1):
            px, py = traj[k, 0], traj[k, 1]
            inside = 0
            for dx_, dy_ in draws[k - 1]:
                dx, dy = px - dx_, py - dy_
                inside += dx * dx + dy * dy < reach2
            total += cfg.w_col * (inside / cfg.n_col)
            mean = seq[k - 1].mean
            mx, my = px - mean[0], py - mean[1]
            if mx * mx + my * my < reach2:
                total += cfg.hard_overlap_cost
    return total


def total_cost(
    traj: NDArray,
    controls: NDArray,
    stage: StageCostSpec,
    others_pred: PredictionSet | Mapping[str, Sequence[GaussianMixtureDist]],
    ego_pred: Sequence[GaussianMixtureDist],
    pcfg: PredictabilityConfig,
    cfg: PlannerConfig,
    rng: RngStream,
    ego_radius: float = 0.0,
    radii: Mapping[str, float] | None = None,
    ego_id: str | None = None,
) -> float:
    """Reference (one trajectory at a time) evaluation of the MPPI sample cost."""
    traj = np.asarray(traj, dtype=float)
    controls = np.asarray(controls, dtype=float)
    cost = stage_cost(traj, controls, stage)
    cost += collision_penalty(traj, others_pred, ego_radius, radii or {}, cfg, rng.child(COLLISION_STREAM), ego_id)
    if pcfg.lam > 0.0:
        plan = Plan(traj, controls, cfg.plan_cov)
        cost += predictability_cost(plan, ego_pred[: plan.horizon], pcfg, rng.child(KL_STREAM))
    return float(cost)


def sample_controls(nominal: NDArray, cfg: PlannerConfig, model: DynamicsModel, rng: RngStream) -> NDArray:
    """(M, K, 2) clamped perturbations of ``nominal``; sample 0 is the nominal itself."""
    nominal = np.asarray(nominal, dtype=float)
    if nominal.shape != (cfg.horizon, 2):
        raise InvalidInputError(f"nominal must have shape ({cfg.horizon}, 2), got {nominal.shape}")
    std = np.sqrt(np.asarray(cfg.noise_var))
    eps = rng.generator().standard_normal((cfg.n_samples, cfg.horizon, 2)) * std
    eps[0] = 0.0
    return model.clamp(nominal[None] + eps)


def mppi_weights(costs: ArrayLike, lambda_mppi: float) -> NDArray:
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise InvalidInputError("MPPI costs must be finite")
    w = np.exp(-(costs - costs.min()) / lambda_mppi)
    return w / w.sum()


def mppi_update(samples: NDArray, weights: NDArray) -> NDArray:
    """Importance-weighted average of (M, K, 2) control samples."""
    return np.tensordot(np.asarray(weights, dtype=float), np.asarray(samples, dtype=float), axes=1)


def warm_start_shift(u_star: NDArray) -> NDArray:
    u_star = np.asarray(u_star, dtype=float)
    if u_star.shape[0] < 1:
        raise InvalidInputError("cannot shift an empty control sequence")
    return np.concatenate([u_star[1:], u_star[-1:]], axis=0)


def evaluate_samples(
    x0: NDArray,
    samples: NDArray,
    model: DynamicsModel,
    stage: StageCostSpec,
    others_pred: PredictionSet | Mapping[str, Sequence[GaussianMixtureDist]],
    ego_pred: Sequence[GaussianMixtureDist],
    pcfg: PredictabilityConfig,
    cfg: PlannerConfig,
    rng: RngStream,
    ego_radius: float,
    radii: Mapping[str, float],
    ego_id: str | None = None,
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Roll out and cost a batch; returns (trajectories, stage, collision, predictability)."""
    traj = rollout_batch(model, x0, samples)
    stage_c = stage_costs_batch(traj, samples, stage)
    pos = traj[:, :, :2]
    col_c = collision_costs_batch(pos, others_pred, ego_radius, radii, cfg, rng.child(COLLISION_STREAM), ego_id)
    if pcfg.lam > 0.0:
        pred_c = predictability_costs_batch(pos, ego_pred[: cfg.horizon], cfg.plan_cov, pcfg, rng.child(KL_STREAM))
    else:
        pred_c = np.zeros(samples.shape[0])
    return traj, stage_c, col_c, pred_c


def plan(
    ego_id: str,
    snap: WorldSnapshot,
    preds: PredictionSet,
    nominal: NDArray,
    model: DynamicsModel,
    stage: StageCostSpec,
    cfg: PlannerConfig,
    pcfg: PredictabilityConfig,
    rng: RngStream,
) -> tuple[Plan, NDArray, PlanDiagnostics]:
    """One MPPI iteration for ``ego_id`` against the shared forecast ``preds``.

    Returns the fused plan (states are exactly ``rollout(model, x0, U*)``), the
    time-shifted warm start for the next tick, and per-term costs of the plan.
    """
    if ego_id not in preds:
        raise InvalidInputError(f"forecast has no entry for ego {ego_id!r}")
    missing = [aid for aid in snap.ids if aid not in preds]
    if missing:
        raise InvalidInputError(f"forecast missing agents {missing}")
    ego = snap.agents[ego_id]
    x0 = ego.state.as_array()
    radii = {aid: a.radius for aid, a in snap.agents.items()}
    samples = sample_controls(nominal, cfg, model, rng.child(NOISE_STREAM))
    args = (model, stage, preds, preds[ego_id], pcfg, cfg, rng, ego.radius, radii, ego_id)
    _, stage_c, col_c, pred_c = evaluate_samples(x0, samples, *args)
    costs = stage_c + col_c + pred_c
    weights = mppi_weights(costs, cfg.lambda_mppi)
    u_star = mppi_update(samples, weights)
    states = rollout_array(model, x0, u_star)
    _, s_star, c_star, p_star = evaluate_samples(x0, u_star[None], *args)
    diag = PlanDiagnostics(
        stage=float(s_star[0]),
        collision=float(c_star[0]),
        predictability=float(p_star[0]),
        best_sample_cost=float(costs.min()),
        mean_sample_cost=float(costs.mean()),
    )
    return Plan(states, u_star, cfg.plan_cov), warm_start_shift(u_star), diag
