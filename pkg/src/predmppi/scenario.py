"""Scenario files: JSON schema, validation and conversion to typed configuration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Mapping

import jsonschema
import numpy as np
from numpy.typing import NDArray

from .core import GaussianDist, DistributionError, State
from .dynamics import DynamicsModel
from .planner import PlannerConfig, StageCostSpec
from .predictability import PredictabilityConfig

SCHEMA_VERSION = 1
BUILTIN_SCENARIOS = (
    "two_goal_observer",
    "swap_symmetric",
    "swap_asymmetric",
    "double_crossing",
    "merge_corridor",
    "merge_corridor_convention",
)


class ConfigurationError(ValueError):
    """Scenario validation failure; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.errors))


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_cov = {
    "type": "array",
    "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    "minItems": 2,
    "maxItems": 2,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "name", "agents", "predictor", "predictability", "termination", "seeds"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "dt": _pos,
        "jitter_sigma": {"type": "number", "minimum": 0},
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "start", "goal"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "start": _point,
                    "heading": _num,
                    "speed": {"type": "number", "minimum": 0},
                    "goal": _point,
                    "radius": _pos,
                    "dynamics": {"enum": ["unicycle", "double-integrator"]},
                    "reference_path": {"type": "array", "items": _point, "minItems": 2},
                },
            },
        },
        "dynamics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"a_max": _pos, "omega_max": _pos, "v_max": _pos},
        },
        "predictor": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant_velocity", "convention_biased", "goal_conditioned"]},
                "cov": _cov,
                "nominal_speed": {"type": "number", "minimum": 0},
                "side_gain": {"type": "number", "minimum": 0},
                "side": {"enum": ["right", "left"]},
                "interaction_radius": _pos,
                "saturation_radius": {"type": "number", "minimum": 0},
                "goals": {"type": "object", "additionalProperties": _point, "minProperties": 1},
                "prior": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "n_samples": {"type": "integer", "minimum": 2},
                "noise_var": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                "lambda_mppi": _pos,
                "w_col": {"type": "number", "minimum": 0},
                "n_col": {"type": "integer", "minimum": 1},
                "hard_overlap_cost": {"type": "number", "minimum": 0},
                "plan_cov": _cov,
            },
        },
        "cost": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                name: {"type": "number", "minimum": 0}
                for name in ("w_goal", "w_terminal", "w_accel", "w_omega", "w_track")
            },
        },
        "predictability": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lambdas"],
            "properties": {
                "lambdas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "gamma": {"type": "number", "minimum": 0, "maximum": 1},
                "kl_mode": {"enum": ["closed-form", "monte-carlo", "delta"]},
                "n_kl_samples": {"type": "integer", "minimum": 1},
            },
        },
        "termination": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_max"],
            "properties": {
                "t_max": {"type": "integer", "minimum": 1},
                "goal_tolerance": _pos,
                "deadlock_speed": _pos,
                "deadlock_dwell": {"type": "integer", "minimum": 1},
            },
        },
        "seeds": {
            "oneOf": [
                {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["count"],
                    "properties": {
                        "count": {"type": "integer", "minimum": 1},
                        "start": {"type": "integer", "minimum": 0},
                    },
                },
            ]
        },
    },
}


@dataclass(frozen=True)
class TerminationSpec:
    t_max: int = 300
    goal_tolerance: float = 0.3
    deadlock_speed: float = 0.05
    deadlock_dwell: int = 20


@dataclass(frozen=True)
class AgentSpec:
    id: str
    start: State
    goal: NDArray
    radius: float = 0.4
    dynamics: str = "unicycle"
    reference_path: NDArray | None = None


@dataclass(frozen=True)
class PredictorSpec:
    kind: Literal["constant_velocity", "convention_biased", "goal_conditioned"]
    cov: NDArray = field(default_factory=lambda: np.eye(2))
    nominal_speed: float = 1.0
    side_gain: float = 1.0
    side: Literal["right", "left"] = "right"
    interaction_radius: float = 4.0
    saturation_radius: float = 1.5
    goals: dict[str, NDArray] = field(default_factory=dict)
    prior: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    agents: tuple[AgentSpec, ...]
    predictor: PredictorSpec
    planner: PlannerConfig
    cost: dict[str, float]
    dynamics: DynamicsModel
    lambdas: tuple[float, ...]
    gamma: float = 0.6
    kl_mode: str = "closed-form"
    n_kl_samples: int = 16
    termination: TerminationSpec = field(default_factory=TerminationSpec)
    seeds: tuple[int, ...] = (0,)
    jitter_sigma: float = 0.0
    source: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def dt(self) -> float:
        return self.dynamics.dt

    def predictability(self, lam: float) -> PredictabilityConfig:
        return PredictabilityConfig(lam=lam, gamma=self.gamma, n_kl_samples=self.n_kl_samples, kl_mode=self.kl_mode)

    def model_for(self, agent: AgentSpec) -> DynamicsModel:
        return replace(self.dynamics, kind=agent.dynamics)

    def stage_for(self, agent: AgentSpec) -> StageCostSpec:
        return StageCostSpec(goal=agent.goal, reference_path=agent.reference_path, **self.cost)

    def with_overrides(self, **changes: Any) -> "Scenario":
        return replace(self, **changes)


def _path(err: jsonschema.ValidationError) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def validate(data: Any) -> list[str]:
    """Every schema and consistency problem in a raw scenario document (empty when valid)."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = [f"{_path(e)}: {e.message}" for e in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))]
    if not isinstance(data, dict):
        return errors
    agents = data.get("agents")
    if isinstance(agents, list):
        seen: dict[str, int] = {}
        for i, a in enumerate(agents):
            if isinstance(a, dict) and isinstance(a.get("id"), str):
                if a["id"] in seen:
                    errors.append(f"agents[{i}].id: duplicate agent id {a['id']!r} (also agents[{seen[a['id']]}])")
                else:
                    seen[a["id"]] = i
    for where, cov in (("predictor.cov", data.get("predictor", {}).get("cov")), ("planner.plan_cov", data.get("planner", {}).get("plan_cov"))):
        if cov is not None and _is_matrix(cov):
            try:
                GaussianDist(np.zeros(2), np.array(cov, dtype=float))
            except DistributionError as exc:
                errors.append(f"{where}: {exc}")
    pred = data.get("predictor")
    if isinstance(pred, dict) and pred.get("kind") == "goal_conditioned":
        goals, prior = pred.get("goals"), pred.get("prior")
        if not isinstance(goals, dict) or not isinstance(prior, dict):
            errors.append("predictor: goal_conditioned needs both 'goals' and 'prior'")
        elif set(goals) != set(prior):
            errors.append(f"predictor.prior: keys {sorted(prior)} do not match goals {sorted(goals)}")
        elif all(isinstance(v, (int, float)) for v in prior.values()) and abs(sum(prior.values()) - 1.0) > 1e-9:
            errors.append(f"predictor.prior: probabilities sum to {sum(prior.values())}, not 1")
    return errors


def _is_matrix(cov: Any) -> bool:
    return isinstance(cov, list) and len(cov) == 2 and all(
        isinstance(r, list) and len(r) == 2 and all(isinstance(v, (int, float)) for v in r) for r in cov
    )


def _seeds(raw: Any) -> tuple[int, ...]:
    if isinstance(raw, list):
        return tuple(int(s) for s in raw)
    start = int(raw.get("start", 1))
    return tuple(range(start, start + int(raw["count"])))


def from_dict(data: Mapping[str, Any]) -> Scenario:
    """Validate and convert a raw scenario document; raises :class:`ConfigurationError`."""
    errors = validate(data)
    if errors:
        raise ConfigurationError(errors)
    agents = []
    for a in data["agents"]:
        start = np.array(a["start"], dtype=float)
        goal = np.array(a["goal"], dtype=float)
        if "heading" in a:
            heading = float(a["heading"])
        else:
            delta = goal - start
            heading = math.atan2(delta[1], delta[0]) if np.any(delta) else 0.0
        path = np.array(a["reference_path"], dtype=float) if "reference_path" in a else None
        agents.append(
            AgentSpec(
                id=a["id"],
                start=State(start[0], start[1], heading, float(a.get("speed", 0.0))),
                goal=goal,
                radius=float(a.get("radius", 0.4)),
                dynamics=a.get("dynamics", "unicycle"),
                reference_path=path,
            )
        )
    p = data["predictor"]
    predictor = PredictorSpec(
        kind=p["kind"],
        cov=np.array(p.get("cov", np.eye(2)), dtype=float),
        nominal_speed=float(p.get("nominal_speed", 1.0)),
        side_gain=float(p.get("side_gain", 1.0)),
        side=p.get("side", "right"),
        interaction_radius=float(p.get("interaction_radius", 4.0)),
        saturation_radius=float(p.get("saturation_radius", 1.5)),
        goals={g: np.array(v, dtype=float) for g, v in p.get("goals", {}).items()},
        prior={g: float(v) for g, v in p.get("prior", {}).items()},
    )
    pl = dict(data.get("planner", {}))
    if "noise_var" in pl:
        pl["noise_var"] = tuple(pl["noise_var"])
    if "plan_cov" in pl:
        pl["plan_cov"] = np.array(pl["plan_cov"], dtype=float)
    dt = float(data.get("dt", 0.1))
    pr = data["predictability"]
    return Scenario(
        name=data["name"],
        agents=tuple(agents),
        predictor=predictor,
        planner=PlannerConfig(**pl),
        cost={k: float(v) for k, v in data.get("cost", {}).items()},
        dynamics=DynamicsModel(dt=dt, **{k: float(v) for k, v in data.get("dynamics", {}).items()}),
        lambdas=tuple(float(v) for v in pr["lambdas"]),
        gamma=float(pr.get("gamma", 0.6)),
        kl_mode=pr.get("kl_mode", "closed-form"),
        n_kl_samples=int(pr.get("n_kl_samples", 16)),
        termination=TerminationSpec(**data["termination"]),
        seeds=_seeds(data["seeds"]),
        jitter_sigma=float(data.get("jitter_sigma", 0.0)),
        source=dict(data),
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario file, or a bundled scenario when ``path`` is one of :data:`BUILTIN_SCENARIOS`."""
    text = read_scenario_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError([f"parse error: {exc}"]) from exc
    return from_dict(data)


def read_scenario_text(path: str | Path) -> str:
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN_SCENARIOS:
        return resources.files("predmppi").joinpath("scenarios").joinpath(f"{path}.json").read_text()
    if not p.exists():
        raise ConfigurationError([f"scenario file not found: {path}"])
    return p.read_text()


def builtin_path(name: str) -> Path:
    return Path(str(resources.files("predmppi").joinpath("scenarios").joinpath(f"{name}.json")))
