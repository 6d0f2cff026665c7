"""Concrete source/target pairs: the uniform worked example and the experiment family."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.integrate import quad

from .core import (
    INF,
    CovariateShiftInstance,
    Interval,
    KnownExponents,
    RegressionFunction,
    Uniform,
    UnivariateDistribution,
    estimate_noise_constant,
    verify_holder,
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class TruncatedPowerDensity(UnivariateDistribution):
    """Density proportional to (1 - x^2)^(-tau/2) on [-s, s], 0 < s < 1.

    tau = 1 and tau = 2 use the arcsin / atanh antiderivatives; other values
    fall back to a cumulative Gauss-Legendre table and bisection for the
    quantile.
    """

    def __init__(self, tau: float, s: float, n_panels: int = 512):
        if not tau > 0:
            raise ValueError("tau must be positive")
        if not 0 < s < 1:
            raise ValueError("support half-width must satisfy 0 < s < 1")
        self.tau = float(tau)
        self.s = float(s)
        self.support = Interval(-self.s, self.s)
        if self.tau == 1.0:
            self._scale = float(np.arcsin(self.s))
            self.normalizer = 2.0 * self._scale
        elif self.tau == 2.0:
            self._scale = float(np.arctanh(self.s))
            self.normalizer = 2.0 * self._scale
        else:
            self.normalizer, _ = quad(self._raw, -self.s, self.s, epsabs=1e-13, epsrel=1e-10, limit=200)
            self._edges = np.linspace(-self.s, self.s, n_panels + 1)
            panel_mass = self._panel_integral(self._edges[:-1], self._edges[1:])
            self._cum = np.concatenate([[0.0], np.cumsum(panel_mass)]) / self.normalizer

    def __repr__(self):
        return f"TruncatedPowerDensity(tau={self.tau!r}, s={self.s!r})"

    def _raw(self, x):
        return (1.0 - np.square(x)) ** (-0.5 * self.tau)

    def _panel_integral(self, a, b):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[..., None] + half[..., None] * _GL_NODES
        return half * (self._raw(nodes) @ _GL_WEIGHTS)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= self.s
        return np.where(inside, self._raw(np.where(inside, x, 0.0)) / self.normalizer, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), -self.s, self.s)
        if self.tau == 1.0:
            out = (np.arcsin(x) + self._scale) / self.normalizer
        elif self.tau == 2.0:
            out = (np.arctanh(x) + self._scale) / self.normalizer
        else:
            idx = np.clip(np.searchsorted(self._edges, x, side="right") - 1, 0, len(self._edges) - 2)
            start = self._edges[idx]
            out = self._cum[idx] + self._panel_integral(start, x) / self.normalizer
        return np.clip(out, 0.0, 1.0)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.tau == 1.0:
            return np.sin((2.0 * u - 1.0) * self._scale)
        if self.tau == 2.0:
            return np.tanh((2.0 * u - 1.0) * self._scale)
        lo = np.full(u.shape, -self.s)
        hi = np.full(u.shape, self.s)
        while np.max(hi - lo, initial=0.0) > 1e-12:
            mid = 0.5 * (lo + hi)
            below = self.cdf(mid) < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def p_density_cdf_quantile(tau: float, s: float) -> TruncatedPowerDensity:
    return TruncatedPowerDensity(tau, s)


def support_half_width(alpha: float) -> float:
    """(2 * 8^(1/alpha) - 1) / (2 * 8^(1/alpha)), exactly as the construction states it."""
    inv = 1.0 / alpha
    if float(inv).is_integer():
        big = Fraction(2) * Fraction(8) ** int(inv)
        return float((big - 1) / big)
    big = 2.0 * 8.0**inv
    return (big - 1.0) / big


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    alpha: float
    tau: Optional[float]
    instance: CovariateShiftInstance
    c_alpha_estimate: float
    c_beta_estimate: float

    @property
    def known_exponents(self) -> KnownExponents:
        return self.instance.known_exponents

    def metadata(self) -> dict:
        inst = self.instance
        ke = inst.known_exponents
        return {
            "name": self.name,
            "alpha": self.alpha,
            "beta": inst.beta,
            "tau": self.tau,
            "p_support": [inst.p_x.support.lo, inst.p_x.support.hi],
            "q_support": [inst.q_x.support.lo, inst.q_x.support.hi],
            "ambient": [inst.ambient.lo, inst.ambient.hi],
            "c_alpha": inst.c_alpha,
            "c_beta": inst.c_beta,
            "tau_v": ke.tau_v,
            "psi_v": ke.psi_v,
            "tau_pmw": ke.tau_pmw,
            "psi_pmw": ke.psi_pmw,
        }


AMBIENT = Interval(-1.0, 1.0)


def _linear_eta(x):
    return 0.5 * x + 0.5


def _signed_power_eta(alpha):
    def eta(x):
        return 0.5 + 0.5 * np.sign(x) * np.abs(x) ** alpha

    return eta


def _build(name, alpha, tau, p_x, eta, beta, exponents) -> ScenarioSpec:
    q_x = Uniform(-1.0, 1.0)
    # Constants are measured numerically; the unit placeholder only satisfies validation.
    c_alpha = verify_holder(RegressionFunction(eta, alpha, 1.0), 2001, AMBIENT)
    reg = RegressionFunction(eta, alpha, c_alpha, name=name)
    c_beta = float(estimate_noise_constant(q_x, reg, beta))
    instance = CovariateShiftInstance(p_x, q_x, reg, beta, c_beta, AMBIENT, exponents)
    return ScenarioSpec(name, alpha, tau, instance, c_alpha, c_beta)


def make_example_instance() -> ScenarioSpec:
    """Uniform P on [-7/8, 7/8], uniform Q on [-1, 1], eta(x) = x/2 + 1/2."""
    exponents = KnownExponents(tau_v=1.0, psi_v=1.0, tau_pmw=INF, psi_pmw=1.0)
    return _build("example", 1.0, None, Uniform(-0.875, 0.875), _linear_eta, 1.0, exponents)


def make_experiment_instance(alpha: float, tau: float) -> ScenarioSpec:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    s = support_half_width(alpha)
    exponents = KnownExponents(tau_v=float(tau), psi_v=1.0, tau_pmw=INF, psi_pmw=1.0)
    name = f"exp-a{alpha:g}-t{tau:g}"
    return _build(name, alpha, float(tau), TruncatedPowerDensity(tau, s), _signed_power_eta(alpha), 1.0 / alpha, exponents)


CATALOG = {
    "example": make_example_instance,
    "exp-a0.5-t1": lambda: make_experiment_instance(0.5, 1),
    "exp-a0.5-t2": lambda: make_experiment_instance(0.5, 2),
    "exp-a0.25-t1": lambda: make_experiment_instance(0.25, 1),
    "exp-a0.25-t2": lambda: make_experiment_instance(0.25, 2),
}

_cache: dict = {}


def scenario_names() -> list:
    return list(CATALOG)


def get_scenario(name: str) -> ScenarioSpec:
    if name not in CATALOG:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(CATALOG)}")
    if name not in _cache:
        _cache[name] = CATALOG[name]()
    return _cache[name]
