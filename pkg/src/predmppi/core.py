"""Shared value types: states, controls, positional Gaussians, mixtures, plans and RNG streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

LOG_2PI = math.log(2.0 * math.pi)
MIN_COV_EIGENVALUE = 1e-9
DEFAULT_PLAN_COV = ((0.05, 0.0), (0.0, 0.05))


class InvalidInputError(ValueError):
    """Raised when an operation receives malformed or non-finite input."""


class DistributionError(InvalidInputError):
    """Raised for covariance matrices that are not symmetric positive definite."""


def wrap_angle(theta: float | NDArray) -> float | NDArray:
    """Map angles into (-pi, pi]; angles already in range are returned bit-for-bit."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    wrapped = np.where((theta > -np.pi) & (theta <= np.pi), theta, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class State:
    x: float
    y: float
    theta: float = 0.0
    v: float = 0.0

    def __post_init__(self) -> None:
        vals = (self.x, self.y, self.theta, self.v)
        if not all(math.isfinite(float(c)) for c in vals):
            raise InvalidInputError(f"non-finite state {vals}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "v", float(self.v))

    @property
    def position(self) -> NDArray:
        return np.array([self.x, self.y])

    def as_array(self) -> NDArray:
        return np.array([self.x, self.y, self.theta, self.v])

    @classmethod
    def from_array(cls, arr: ArrayLike) -> "State":
        x, y, theta, v = (float(c) for c in np.asarray(arr, dtype=float))
        return cls(x, y, theta, v)


@dataclass(frozen=True)
class Control:
    a: float = 0.0
    omega: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(float(self.a)) and math.isfinite(float(self.omega))):
            raise InvalidInputError(f"non-finite control ({self.a}, {self.omega})")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "omega", float(self.omega))

    def as_array(self) -> NDArray:
        return np.array([self.a, self.omega])


def _frozen(arr: ArrayLike) -> NDArray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class GaussianDist:
    """Bivariate Gaussian over position."""

    mean: NDArray
    cov: NDArray

    def __post_init__(self) -> None:
        mean = _frozen(self.mean).reshape(-1)
        cov = _frozen(self.cov)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise InvalidInputError(f"expected mean (2,) and cov (2, 2), got {mean.shape}, {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise DistributionError("non-finite Gaussian parameters")
        if abs(cov[0, 1] - cov[1, 0]) > 1e-12 * max(1.0, float(np.max(np.abs(cov)))):
            raise DistributionError(f"covariance not symmetric: {cov.tolist()}")
        if float(np.linalg.eigvalsh(cov)[0]) < MIN_COV_EIGENVALUE:
            raise DistributionError(f"covariance not positive definite: {cov.tolist()}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @cached_property
    def det(self) -> float:
        c = self.cov
        return float(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])

    @cached_property
    def log_det(self) -> float:
        return math.log(self.det)

    @cached_property
    def precision(self) -> NDArray:
        c = self.cov
        inv = np.array([[c[1, 1], -c[0, 1]], [-c[1, 0], c[0, 0]]]) / self.det
        inv.setflags(write=False)
        return inv

    @cached_property
    def chol(self) -> NDArray:
        lower = np.linalg.cholesky(self.cov)
        lower.setflags(write=False)
        return lower

    def entropy(self) -> float:
        return 0.5 * (2.0 * (1.0 + LOG_2PI) + self.log_det)

    def log_density(self, points: ArrayLike) -> NDArray:
        """Vectorised log-density; ``points`` has trailing dimension 2."""
        d = np.asarray(points, dtype=float) - self.mean
        p = self.precision
        quad = p[0, 0] * d[..., 0] ** 2 + 2.0 * p[0, 1] * d[..., 0] * d[..., 1] + p[1, 1] * d[..., 1] ** 2
        return -LOG_2PI - 0.5 * self.log_det - 0.5 * quad

    def sample(self, gen: np.random.Generator, n: int) -> NDArray:
        return self.mean + gen.standard_normal((n, 2)) @ self.chol.T

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GaussianDist):
            return NotImplemented
        return bool(np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class GaussianMixtureDist:
    components: tuple[tuple[float, GaussianDist], ...]

    def __post_init__(self) -> None:
        comps = tuple((float(w), g) for w, g in self.components)
        if not comps:
            raise InvalidInputError("mixture needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(~np.isfinite(weights)) or np.any(weights < 0.0):
            raise InvalidInputError(f"mixture weights must be nonnegative, got {weights.tolist()}")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"mixture weights sum to {weights.sum()!r}, not 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, g: GaussianDist) -> "GaussianMixtureDist":
        return cls(((1.0, g),))

    @property
    def weights(self) -> NDArray:
        return np.array([w for w, _ in self.components])

    @property
    def mean(self) -> NDArray:
        return sum(w * g.mean for w, g in self.components)

    def log_density(self, points: ArrayLike) -> NDArray:
        """Vectorised mixture log-density via log-sum-exp; zero-weight components are skipped."""
        pts = np.asarray(points, dtype=float)
        active = [(w, g) for w, g in self.components if w > 0.0]
        if len(active) == 1:
            return active[0][1].log_density(pts)
        terms = np.stack([math.log(w) + g.log_density(pts) for w, g in active])
        top = terms.max(axis=0)
        return top + np.log(np.exp(terms - top).sum(axis=0))

    def sample(self, gen: np.random.Generator, n: int) -> NDArray:
        """Draw ``n`` points: uniforms pick the component, then one normal pair per draw."""
        u = gen.random(n)
        z = gen.standard_normal((n, 2))
        cdf = np.cumsum(self.weights)
        idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(self.components) - 1)
        out = np.empty((n, 2))
        for i, (_, g) in enumerate(self.components):
            sel = idx == i
            out[sel] = g.mean + z[sel] @ g.chol.T
        return out


def gaussian_log_density(x: ArrayLike, g: GaussianDist) -> float:
    return float(g.log_density(np.asarray(x, dtype=float)))


def mixture_log_density(x: ArrayLike, m: GaussianMixtureDist) -> float:
    return float(m.log_density(np.asarray(x, dtype=float)))


def isotropic(var: float) -> NDArray:
    return np.array([[var, 0.0], [0.0, var]])


@dataclass(frozen=True, eq=False)
class Plan:
    """Planned trajectory: ``states`` is (K+1, 4) rows of (x, y, theta, v), ``controls`` is (K, 2)."""

    states: NDArray
    controls: NDArray
    step_cov: NDArray = field(default_factory=lambda: np.array(DEFAULT_PLAN_COV))

    def __post_init__(self) -> None:
        states = _frozen(self.states)
        controls = _frozen(self.controls)
        if states.ndim != 2 or states.shape[1] != 4 or controls.ndim != 2 or controls.shape[1] != 2:
            raise InvalidInputError(f"bad plan shapes {states.shape}, {controls.shape}")
        if states.shape[0] != controls.shape[0] + 1:
            raise InvalidInputError("plan needs exactly one more state than controls")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "step_cov", _frozen(self.step_cov))

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    @property
    def positions(self) -> NDArray:
        return self.states[:, :2]

    def step_distribution(self, k: int) -> GaussianDist:
        return GaussianDist(self.states[k, :2], self.step_cov)


@dataclass(frozen=True)
class RngStream:
    """Counter-style random stream addressed by ``(seed, key)``.

    Every distinct key yields an independent generator, so draws never depend on
    the order in which agents, samples or horizon steps are evaluated.
    """

    seed: int
    key: tuple[int, ...] = ()

    def child(self, *key: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(k) for k in key))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(seq))


def as_positions(points: Sequence[ArrayLike] | NDArray) -> NDArray:
    arr = np.asarray(points, dtype=float)
    if arr.shape[-1] != 2:
        raise InvalidInputError(f"expected trailing dimension 2, got shape {arr.shape}")
    return arr
