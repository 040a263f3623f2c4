"""Multiplicative channel noise and additive process noise.

Channel noise ``nu`` multiplies the control componentwise; its moments
(mean ``mu``, total variance ``sigma = E||nu - mu||^2`` and the
noise-to-signal ratio ``psi = sqrt(sigma) * max_i 1/|mu_i|``) drive the
feasibility formulas. Process noise only needs bounds ``C1 >= E||w||`` and
``C4 >= E||w||^4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import ScenarioError, ZeroMeanComponent


# -- scalar component laws for the per-component channel -------------------

@dataclass(frozen=True)
class PointMass:
    v: float

    @property
    def mean(self) -> float:
        return float(self.v)

    @property
    def var(self) -> float:
        return 0.0

    @property
    def support(self) -> tuple[float, float]:
        return float(self.v), float(self.v)

    def sample(self, rng, n):
        return np.full(n, float(self.v))


@dataclass(frozen=True)
class TwoPoint:
    v0: float
    v1: float
    p1: float

    def __post_init__(self):
        if not 0.0 <= self.p1 <= 1.0:
            raise ScenarioError(f"TwoPoint probability {self.p1} outside [0, 1]")

    @property
    def mean(self) -> float:
        return (1 - self.p1) * self.v0 + self.p1 * self.v1

    @property
    def var(self) -> float:
        return self.p1 * (1 - self.p1) * (self.v1 - self.v0) ** 2

    @property
    def support(self) -> tuple[float, float]:
        return min(self.v0, self.v1), max(self.v0, self.v1)

    def sample(self, rng, n):
        return np.where(rng.random(n) < self.p1, float(self.v1), float(self.v0))


@dataclass(frozen=True)
class UniformInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi < self.lo:
            raise ScenarioError(f"bad interval [{self.lo}, {self.hi}]")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self) -> float:
        return (self.hi - self.lo) ** 2 / 12.0

    @property
    def support(self) -> tuple[float, float]:
        return float(self.lo), float(self.hi)

    def sample(self, rng, n):
        return rng.uniform(self.lo, self.hi, n)


@dataclass(frozen=True)
class DiscreteSet:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.values) == 0 or len(self.values) != len(self.probs):
            raise ScenarioError("DiscreteSet needs matching non-empty values and probs")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ScenarioError("DiscreteSet probabilities must be non-negative and sum to 1")

    @property
    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    @property
    def var(self) -> float:
        v = np.asarray(self.values)
        return float(np.dot(self.probs, (v - self.mean) ** 2))

    @property
    def support(self) -> tuple[float, float]:
        return min(self.values), max(self.values)

    def sample(self, rng, n):
        return rng.choice(np.asarray(self.values), size=n, p=np.asarray(self.probs))


ComponentLaw = Union[PointMass, TwoPoint, UniformInterval, DiscreteSet]


# -- channel models ---------------------------------------------------------

@dataclass(frozen=True)
class PerComponentIID:
    """Independent law per input channel; ``nu_t`` i.i.d. in time."""

    components: tuple[ComponentLaw, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if len(self.components) == 0:
            raise ScenarioError("PerComponentIID needs at least one component")

    @property
    def m(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class BurstBernoulli:
    """Whole-vector erasure: ``nu = b * 1_m`` with ``b ~ Bernoulli(p)``.

    Under the burst policy one draw covers an entire kappa-step burst.
    """

    p: float
    m: int = 1

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ScenarioError(f"Bernoulli success probability {self.p} outside (0, 1]")
        if self.m < 1:
            raise ScenarioError("m must be positive")


ChannelModel = Union[PerComponentIID, BurstBernoulli]


@dataclass(frozen=True, eq=False)
class ChannelStats:
    mu: np.ndarray
    sigma: float
    psi: float
    maxinv: float
    diamT: float
    # diameter of T together with the origin; bounds max_i |nu_i| from above
    diamT0: float

    @property
    def m(self) -> int:
        return self.mu.shape[0]


def _support_box(ch: ChannelModel) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(ch, BurstBernoulli):
        lo = np.zeros(ch.m) if ch.p < 1 else np.ones(ch.m)
        return lo, np.ones(ch.m)
    sup = np.array([c.support for c in ch.components])
    return sup[:, 0], sup[:, 1]


def channel_stats(ch: ChannelModel, *, require_nonzero_mean: bool = False,
                  overrides: dict | None = None) -> ChannelStats:
    """Moments of the channel law.

    ``overrides`` may replace ``mu``, ``sigma`` and ``diamT`` for channels
    whose components are not independent.

    Raises
    ------
    ZeroMeanComponent
        If ``require_nonzero_mean`` and some ``mu_i == 0``.
    """
    lo, hi = _support_box(ch)
    if isinstance(ch, BurstBernoulli):
        mu = np.full(ch.m, ch.p)
        sigma = ch.m * ch.p * (1 - ch.p)
    else:
        mu = np.array([c.mean for c in ch.components])
        sigma = float(sum(c.var for c in ch.components))
    diamT = float(np.linalg.norm(hi - lo))
    diamT0 = float(np.linalg.norm(np.maximum(hi, 0.0) - np.minimum(lo, 0.0)))

    if overrides:
        unknown = set(overrides) - {"mu", "sigma", "diamT"}
        if unknown:
            raise ScenarioError(f"unknown channel overrides {sorted(unknown)}")
        if "mu" in overrides:
            mu = np.asarray(overrides["mu"], dtype=float)
            if mu.shape != (len(lo),):
                raise ScenarioError("override mu has wrong length")
        if "sigma" in overrides:
            sigma = float(overrides["sigma"])
        if "diamT" in overrides:
            diamT = float(overrides["diamT"])
            diamT0 = max(diamT0, diamT)

    if np.any(mu == 0):
        if require_nonzero_mean:
            raise ZeroMeanComponent(f"channel mean {mu.tolist()} has a zero entry")
        maxinv = math.inf
    else:
        maxinv = float(np.max(1.0 / np.abs(mu)))
    psi = math.sqrt(sigma) * maxinv if sigma > 0 else 0.0
    mu.setflags(write=False)
    return ChannelStats(mu=mu, sigma=float(sigma), psi=psi, maxinv=maxinv,
                        diamT=float(diamT), diamT0=diamT0)


def _check_support(ch: ChannelModel, draws: np.ndarray) -> None:
    lo, hi = _support_box(ch)
    if np.any(draws < lo) or np.any(draws > hi):
        raise RuntimeError("channel draw left its declared support")


def sample_channel(ch: ChannelModel, rng: np.random.Generator, n: int | None = None):
    """Draw channel noise.

    Per-component channels give shape ``(m,)`` (or ``(n, m)``); the burst
    channel gives the scalar erasure indicator (or shape ``(n,)``).
    """
    k = 1 if n is None else n
    if isinstance(ch, BurstBernoulli):
        draws = (rng.random(k) < ch.p).astype(float)
        _check_support(ch, draws[:, None])
        return float(draws[0]) if n is None else draws
    draws = np.column_stack([c.sample(rng, k) for c in ch.components])
    _check_support(ch, draws)
    return draws[0] if n is None else draws


def channel_vectors(ch: ChannelModel, rng: np.random.Generator, n: int) -> np.ndarray:
    """``(n, m)`` i.i.d. per-step multipliers, burst draws broadcast over inputs."""
    draws = sample_channel(ch, rng, n)
    if isinstance(ch, BurstBernoulli):
        return np.repeat(draws[:, None], ch.m, axis=1)
    return draws


# -- process noise ----------------------------------------------------------

@dataclass(frozen=True)
class ZeroNoise:
    d: int
    C1: float | None = None
    C4: float | None = None


@dataclass(frozen=True)
class IsotropicUniform:
    """Independent ``U[-h_i, h_i]`` coordinates."""

    halfwidth: tuple[float, ...]
    C1: float | None = None
    C4: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "halfwidth", tuple(float(h) for h in self.halfwidth))
        if any(h < 0 for h in self.halfwidth):
            raise ScenarioError("halfwidths must be non-negative")

    @property
    def d(self) -> int:
        return len(self.halfwidth)


@dataclass(frozen=True)
class Gaussian:
    """Independent zero-mean normal coordinates with the given std devs."""

    std: tuple[float, ...]
    C1: float | None = None
    C4: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "std", tuple(float(s) for s in self.std))
        if any(s < 0 for s in self.std):
            raise ScenarioError("standard deviations must be non-negative")

    @property
    def d(self) -> int:
        return len(self.std)


@dataclass(frozen=True, eq=False)
class DiscreteProcess:
    """Finite law over vectors: ``P(w = values[k]) = probs[k]``."""

    values: tuple[tuple[float, ...], ...]
    probs: tuple[float, ...]
    C1: float | None = None
    C4: float | None = None

    def __post_init__(self):
        vals = tuple(tuple(float(x) for x in v) for v in self.values)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if not vals or len(vals) != len(self.probs) or len({len(v) for v in vals}) != 1:
            raise ScenarioError("DiscreteSet process noise needs equal-length vectors and probs")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ScenarioError("probabilities must be non-negative and sum to 1")

    @property
    def d(self) -> int:
        return len(self.values[0])


ProcessNoiseModel = Union[ZeroNoise, IsotropicUniform, Gaussian, DiscreteProcess]


def sample_process(pm: ProcessNoiseModel, rng: np.random.Generator, n: int | None = None):
    """Draw ``w`` of shape ``(d,)`` (or ``(n, d)``), independent across draws."""
    k = 1 if n is None else n
    if isinstance(pm, ZeroNoise):
        w = np.zeros((k, pm.d))
    elif isinstance(pm, IsotropicUniform):
        h = np.asarray(pm.halfwidth)
        w = rng.uniform(-1.0, 1.0, (k, pm.d)) * h
    elif isinstance(pm, Gaussian):
        w = rng.standard_normal((k, pm.d)) * np.asarray(pm.std)
    elif isinstance(pm, DiscreteProcess):
        idx = rng.choice(len(pm.probs), size=k, p=np.asarray(pm.probs))
        w = np.asarray(pm.values)[idx]
    else:
        raise TypeError(f"unsupported process noise model {type(pm).__name__}")
    return w[0] if n is None else w


def _rectangle_mean_distance(a: float, b: float) -> float:
    # E||w|| for w uniform on [-a, a] x [-b, b]
    d = math.hypot(a, b)
    integral = (2 * a * b * d + a**3 * math.log((b + d) / a) + b**3 * math.log((a + d) / b)) / 6
    return integral / (a * b)


def second_moment(pm: ProcessNoiseModel) -> float:
    """``E||w||^2``."""
    if isinstance(pm, ZeroNoise):
        return 0.0
    if isinstance(pm, IsotropicUniform):
        return sum(h * h for h in pm.halfwidth) / 3.0
    if isinstance(pm, Gaussian):
        return sum(s * s for s in pm.std)
    v = np.asarray(pm.values)
    return float(np.dot(pm.probs, np.sum(v * v, axis=1)))


def analytic_bounds(pm: ProcessNoiseModel) -> tuple[float, float]:
    """``(C1, C4)`` from the law alone, ignoring any overrides.

    ``C4`` is exact. ``C1`` is the exact mean norm where a closed form is
    implemented (1-D and 2-D uniform, equal-std Gaussian, discrete) and
    ``sqrt(E||w||^2)`` otherwise, which is still an upper bound and never
    exceeds ``C4 ** 0.25``.
    """
    if isinstance(pm, ZeroNoise):
        return 0.0, 0.0
    if isinstance(pm, IsotropicUniform):
        h = [x for x in pm.halfwidth if x > 0]
        s2 = sum(x * x for x in h) / 3.0
        C4 = sum(x**4 for x in h) / 5.0 + s2 * s2 - sum(x**4 for x in h) / 9.0
        if not h:
            C1 = 0.0
        elif len(h) == 1:
            C1 = h[0] / 2.0
        elif len(h) == 2:
            C1 = _rectangle_mean_distance(*h)
        else:
            C1 = math.sqrt(s2)
        return C1, C4
    if isinstance(pm, Gaussian):
        s = [x for x in pm.std if x > 0]
        var = sum(x * x for x in s)
        C4 = var * var + 2 * sum(x**4 for x in s)
        if not s:
            C1 = 0.0
        elif max(s) == min(s):
            k = len(s)
            C1 = s[0] * math.sqrt(2.0) * math.exp(math.lgamma((k + 1) / 2) - math.lgamma(k / 2))
        else:
            C1 = math.sqrt(var)
        return C1, C4
    norms = np.linalg.norm(np.asarray(pm.values), axis=1)
    p = np.asarray(pm.probs)
    return float(p @ norms), float(p @ norms**4)


def process_bounds(pm: ProcessNoiseModel) -> tuple[float, float]:
    """``(C1, C4)`` with ``C1 >= E||w||`` and ``C4 >= E||w||^4``.

    ``C1``/``C4`` set on the model override the analytic values.
    """
    C1, C4 = analytic_bounds(pm)
    if pm.C1 is not None:
        C1 = float(pm.C1)
    if pm.C4 is not None:
        C4 = float(pm.C4)
    return C1, C4
