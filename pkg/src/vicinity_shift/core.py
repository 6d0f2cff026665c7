"""Distributions, regression functions and labeled samples on the real line.

Every dissimilarity value lives in ``[0, inf]``; plain Python floats with
``math.inf`` carry that extended range, so ``min``/``+`` behave as expected.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

INF = math.inf
# Ball masses below this are treated as zero by the measure kernels.
ZERO_MASS = 1e-15

SOURCE = 0
TARGET = 1


def is_inf(value: float) -> bool:
    return math.isinf(value)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def clip(self, x):
        return np.clip(x, self.lo, self.hi)


class UnivariateDistribution(ABC):
    """Absolutely continuous distribution supported on a closed interval.

    Subclasses provide vectorized ``density``, ``cdf`` and ``quantile``.
    """

    support: Interval

    @abstractmethod
    def density(self, x):
        ...

    @abstractmethod
    def cdf(self, x):
        ...

    @abstractmethod
    def quantile(self, u):
        ...

    def ball_probability(self, x, r):
        return ball_probability(self, x, r)


class Uniform(UnivariateDistribution):
    def __init__(self, lo: float, hi: float):
        if not lo < hi:
            raise ValueError("uniform distribution needs lo < hi")
        self.support = Interval(lo, hi)

    def __repr__(self):
        return f"Uniform({self.support.lo!r}, {self.support.hi!r})"

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.support.lo) & (x <= self.support.hi)
        return np.where(inside, 1.0 / self.support.length, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.support.lo) / self.support.length, 0.0, 1.0)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        return self.support.lo + u * self.support.length


@dataclass(frozen=True)
class RegressionFunction:
    """P(Y=1 | X=x), together with its Hölder exponent and constant."""

    eta: Callable[[np.ndarray], np.ndarray]
    alpha: float
    c_alpha: float
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.c_alpha > 0.0:
            raise ValueError("c_alpha must be positive")

    def __call__(self, x):
        return self.eta(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class KnownExponents:
    tau_v: float
    psi_v: float
    tau_pmw: float
    psi_pmw: float


@dataclass(frozen=True)
class CovariateShiftInstance:
    p_x: UnivariateDistribution
    q_x: UnivariateDistribution
    reg: RegressionFunction
    beta: float
    c_beta: float
    ambient: Interval
    known_exponents: Optional[KnownExponents] = None

    def __post_init__(self):
        if not (self.ambient.contains(self.p_x.support) and self.ambient.contains(self.q_x.support)):
            raise ValueError("distribution supports must lie inside the ambient interval")
        if not (self.beta > 0 and self.c_beta > 0):
            raise ValueError("beta and c_beta must be positive")

    @property
    def alpha(self) -> float:
        return self.reg.alpha

    @property
    def c_alpha(self) -> float:
        return self.reg.c_alpha

    @property
    def diameter(self) -> float:
        return self.ambient.length


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """Parallel arrays of inputs, 0/1 labels and SOURCE/TARGET origins."""

    xs: np.ndarray
    ys: np.ndarray
    origins: np.ndarray = field(repr=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).reshape(-1)
        ys = np.asarray(self.ys, dtype=np.int8).reshape(-1)
        origins = np.asarray(self.origins, dtype=np.int8).reshape(-1)
        if not len(xs) == len(ys) == len(origins):
            raise ValueError("xs, ys and origins must have equal length")
        if np.any((ys != 0) & (ys != 1)):
            raise ValueError("labels must be 0 or 1")
        if np.any((origins != SOURCE) & (origins != TARGET)):
            raise ValueError("origins must be SOURCE or TARGET")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "origins", origins)

    def __len__(self):
        return len(self.xs)

    @property
    def n_p(self) -> int:
        return int(np.count_nonzero(self.origins == SOURCE))

    @property
    def n_q(self) -> int:
        return int(np.count_nonzero(self.origins == TARGET))

    @classmethod
    def empty(cls) -> "LabeledSample":
        return cls(np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def concat(cls, *samples: "LabeledSample") -> "LabeledSample":
        return cls(
            np.concatenate([s.xs for s in samples]),
            np.concatenate([s.ys for s in samples]),
            np.concatenate([s.origins for s in samples]),
        )

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return (
            np.array_equal(self.xs, other.xs)
            and np.array_equal(self.ys, other.ys)
            and np.array_equal(self.origins, other.origins)
        )


def ball_probability(dist: UnivariateDistribution, x, r):
    """Mass of the closed ball ``[x - r, x + r]``; vectorized over ``x`` and ``r``."""
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be nonnegative")
    mass = dist.cdf(x + r) - dist.cdf(x - r)
    out = np.clip(mass, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def margin(instance: CovariateShiftInstance, x):
    out = np.abs(instance.reg(x) - 0.5)
    return float(out) if np.ndim(out) == 0 else out


def bayes_label(instance: CovariateShiftInstance, x):
    out = (instance.reg(x) >= 0.5).astype(np.int8)
    return int(out) if np.ndim(out) == 0 else out


def _as_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def sample_labeled(
    dist: UnivariateDistribution,
    reg: RegressionFunction,
    n: int,
    origin: int,
    rng_seed,
) -> LabeledSample:
    """Draw ``n`` labeled points: X by inverse-CDF sampling, Y ~ Bernoulli(eta(X))."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    rng = _as_rng(rng_seed)
    u = rng.random(n)
    xs = np.asarray(dist.quantile(u), dtype=float)
    ys = (rng.random(n) < reg(xs)).astype(np.int8)
    return LabeledSample(xs, ys, np.full(n, origin, dtype=np.int8))


def verify_holder(reg: RegressionFunction, grid_size: int = 2001, domain: Interval = Interval(-1.0, 1.0)) -> float:
    """Largest |eta(x) - eta(x')| / |x - x'|^alpha over all pairs of an equispaced grid."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    xs = np.linspace(domain.lo, domain.hi, grid_size)
    etas = reg(xs)
    best = 0.0
    for i in range(grid_size - 1):
        dx = xs[i + 1 :] - xs[i]
        ratio = np.abs(etas[i + 1 :] - etas[i]) / dx**reg.alpha
        best = max(best, float(ratio.max()))
    return best


def _eta_zeros(reg: RegressionFunction, domain: Interval, scan: int = 20001) -> np.ndarray:
    xs = np.linspace(domain.lo, domain.hi, scan)
    s = reg(xs) - 0.5
    zeros = list(xs[s == 0.0])
    flips = np.nonzero(s[:-1] * s[1:] < 0)[0]
    for i in flips:
        zeros.append(brentq(lambda t: float(reg(t)) - 0.5, xs[i], xs[i + 1], xtol=1e-300))
    return np.array(sorted(zeros))


def noise_mass(q: UnivariateDistribution, reg: RegressionFunction, t: float, scan: int = 20001) -> float:
    """Q_X(0 < g(X) <= t), computed from the level-set boundaries of the margin.

    Crossings of g = t are located by root finding, so the result is accurate
    even when the set is far thinner than the scan spacing.
    """
    dom = q.support

    def g(v):
        return np.abs(reg(v) - 0.5)

    zeros = _eta_zeros(reg, dom, scan)
    xs = np.unique(np.concatenate([np.linspace(dom.lo, dom.hi, scan), zeros]))
    h = g(xs) - t
    cuts = [dom.lo, dom.hi]
    for i in np.nonzero(np.sign(h[:-1]) != np.sign(h[1:]))[0]:
        if h[i] == 0.0 or h[i + 1] == 0.0:
            cuts.append(xs[i] if h[i] == 0.0 else xs[i + 1])
        else:
            cuts.append(brentq(lambda v: float(g(v)) - t, xs[i], xs[i + 1], xtol=1e-300))
    cuts = np.unique(cuts)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    below = g(mids) <= t
    cdf = q.cdf(cuts)
    return float(np.sum((cdf[1:] - cdf[:-1])[below]))


def estimate_noise_constant(q: UnivariateDistribution, reg: RegressionFunction, beta: float, t_grid=None) -> float:
    """Smallest C with Q_X(0 < g <= t) <= C t^beta over ``t_grid``."""
    if t_grid is None:
        t_grid = np.geomspace(1e-3, 0.5, 60)
    return max(noise_mass(q, reg, float(t)) / t**beta for t in t_grid)


@dataclass(frozen=True)
class NoiseProfile:
    t: np.ndarray
    ratio: np.ndarray
    sigma: np.ndarray

    @property
    def worst(self) -> float:
        return float(self.ratio.max())

    def passes(self, n_sigma: float = 3.0) -> bool:
        return bool(np.all(self.ratio <= 1.0 + n_sigma * self.sigma))


def noise_profile(instance: CovariateShiftInstance, t_grid, mc_samples: int, rng_seed) -> NoiseProfile:
    """Monte Carlo ratios Q_X(0 < g <= t) / (c_beta t^beta), with binomial sigmas."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t values must be positive")
    rng = _as_rng(rng_seed)
    g = np.sort(margin(instance, instance.q_x.quantile(rng.random(mc_samples))))
    positive = g > 0
    n_zero = mc_samples - int(np.count_nonzero(positive))
    frac = (np.searchsorted(g, t, side="right") - n_zero) / mc_samples
    cap = instance.c_beta * t**instance.beta
    p = np.minimum(cap, 1.0)
    sigma = np.sqrt(p * (1 - p) / mc_samples) / cap
    return NoiseProfile(t, frac / cap, sigma)


def verify_noise(instance: CovariateShiftInstance, t_grid, mc_samples: int, rng_seed) -> float:
    return noise_profile(instance, t_grid, mc_samples, rng_seed).worst
