"""Vicinity geometry, dissimilarity measures, exponent fitting and rate formulas.

Measures take values in ``[0, inf]``. Integral measures are evaluated with a
composite Gauss-Legendre rule whose panels break at every point where a ball
edge can cross a support edge and are geometrically graded towards those
breaks; ``delta_mc`` is an independent Monte Carlo estimate of the same
integrals.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import (
    INF,
    ZERO_MASS,
    CovariateShiftInstance,
    Interval,
    UnivariateDistribution,
    _as_rng,
    ball_probability,
    margin,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SUP_GRID = 257
GOLDEN_ITERS = 40
DEFAULT_QUAD_POINTS = 4096
_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_ORDER)
_GRADING_LEVELS = 24
_ZERO_SCAN = 2049
# A zero-mass region shorter than this is a boundary touch, not a support gap.
_GAP_LENGTH = 1e-12
_CHUNK = 1 << 21


# -- vicinity geometry -------------------------------------------------------


@dataclass(frozen=True)
class VicinityBall:
    """Open ball of ``radius`` around ``center``, with ``center`` itself always included."""

    center: float
    radius: float

    def contains(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return (np.abs(z - self.center) < self.radius) | (z == self.center)

    @property
    def closure(self) -> Interval:
        return Interval(self.center - self.radius, self.center + self.radius)


def vicinity_radius(instance: CovariateShiftInstance, x):
    g = margin(instance, x)
    out = (np.asarray(g) / (2.0 * instance.c_alpha)) ** (1.0 / instance.alpha)
    return float(out) if np.ndim(out) == 0 else out


def vicinity_ball(instance: CovariateShiftInstance, x: float) -> VicinityBall:
    return VicinityBall(float(x), float(vicinity_radius(instance, x)))


def vicinity_distance(instance: CovariateShiftInstance, z, x):
    """Distance from ``z`` to the vicinity set of ``x``: max(0, |z - x| - radius(x))."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.maximum(0.0, np.abs(z - x) - vicinity_radius(instance, x))
    return float(out) if out.ndim == 0 else out


# -- inner supremum over the vicinity ----------------------------------------


def best_ball_mass(
    p: UnivariateDistribution,
    centers,
    radii,
    r: float,
    ambient: Interval,
    grid: int = SUP_GRID,
    golden_iters: int = GOLDEN_ITERS,
) -> np.ndarray:
    """sup of P(B(x', r)) over x' in [c - rad, c + rad] intersected with ``ambient``.

    A uniform grid locates the best point, golden-section search polishes it
    between the neighbouring grid points, and the center is always a candidate.
    """
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    radii = np.broadcast_to(np.asarray(radii, dtype=float), centers.shape)
    out = np.asarray(ball_probability(p, centers, r), dtype=float).reshape(centers.shape).copy()
    active = np.nonzero(radii > 0)[0]
    rows = max(1, _CHUNK // grid)
    u = np.linspace(0.0, 1.0, grid)
    for start in range(0, len(active), rows):
        idx = active[start : start + rows]
        lo = np.maximum(centers[idx] - radii[idx], ambient.lo)
        hi = np.minimum(centers[idx] + radii[idx], ambient.hi)
        pts = lo[:, None] + (hi - lo)[:, None] * u
        mass = p.cdf(pts + r) - p.cdf(pts - r)
        j = np.argmax(mass, axis=1)
        best = mass[np.arange(len(idx)), j]
        step = (hi - lo) / (grid - 1)
        a = np.maximum(lo, pts[np.arange(len(idx)), j] - step)
        b = np.minimum(hi, pts[np.arange(len(idx)), j] + step)
        best = np.maximum(best, _golden_max(p, a, b, r, golden_iters))
        out[idx] = np.maximum(out[idx], best)
    return np.clip(out, 0.0, 1.0)


def _golden_max(p, a, b, r, iters):
    def f(x):
        return p.cdf(x + r) - p.cdf(x - r)

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    best = np.maximum(fc, fd)
    for _ in range(iters):
        left = fc >= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        # the surviving interior probe is reused, one fresh evaluation per lane
        c, d = np.where(left, b - GOLDEN * (b - a), d), np.where(left, c, a + GOLDEN * (b - a))
        fp = f(np.where(left, c, d))
        fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
        best = np.maximum(best, fp)
    return best


# -- quadrature --------------------------------------------------------------


def _breakpoints(p: UnivariateDistribution, q: UnivariateDistribution, r: float) -> np.ndarray:
    lo, hi = q.support.lo, q.support.hi
    cand = [lo, hi, p.support.lo - r, p.support.lo + r, p.support.hi - r, p.support.hi + r]
    return np.unique([c for c in cand if lo <= c <= hi])


def quadrature_rule(p, q, r, quad_points: int = DEFAULT_QUAD_POINTS):
    """Nodes and Q-weights of a graded composite Gauss-Legendre rule on q's support."""
    brk = _breakpoints(p, q, r)
    pieces = [(a, b) for a, b in zip(brk[:-1], brk[1:]) if b > a]
    total = sum(b - a for a, b in pieces)
    panels_total = max(len(pieces), quad_points // _ORDER)
    edges = []
    for a, b in pieces:
        n = max(2, int(round(panels_total * (b - a) / total)))
        e = np.linspace(a, b, n + 1)
        h = e[1] - e[0]
        grade = h * 0.5 ** np.arange(1, _GRADING_LEVELS + 1)
        edges.append(np.concatenate([e, a + grade, b - grade]))
    edges = np.unique(np.concatenate(edges))
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X
    weights = half[:, None] * _GL_W * q.density(nodes)
    return nodes.ravel(), weights.ravel()


def _has_gap(mass_fn: Callable, support: Interval, known_x: np.ndarray, known_mass: np.ndarray) -> bool:
    """True when {mass < ZERO_MASS} contains a sub-interval longer than the gap tolerance."""
    scan = np.linspace(support.lo, support.hi, _ZERO_SCAN)
    xs = np.concatenate([scan, known_x])
    ms = np.concatenate([mass_fn(scan), known_mass])
    order = np.argsort(xs, kind="stable")
    xs, zero = xs[order], ms[order] < ZERO_MASS
    if not zero.any():
        return False
    # maximal runs of zero-mass points
    padded = np.concatenate([[False], zero, [False]]).astype(np.int8)
    starts = np.nonzero(np.diff(padded) == 1)[0]
    ends = np.nonzero(np.diff(padded) == -1)[0] - 1
    for i, j in zip(starts, ends):
        if xs[j] - xs[i] > _GAP_LENGTH:
            return True
        left = support.lo if i == 0 else _bisect_edge(mass_fn, xs[i - 1], xs[i])
        right = support.hi if j == len(xs) - 1 else _bisect_edge(mass_fn, xs[j + 1], xs[j])
        if right - left > _GAP_LENGTH:
            return True
    return False


def _bisect_edge(mass_fn, nonzero_x, zero_x, iters=80):
    a, b = nonzero_x, zero_x
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        if float(mass_fn(np.array([mid]))[0]) < ZERO_MASS:
            b = mid
        else:
            a = mid
    return b


def _integrate_inverse_mass(mass_fn, p, q, r, quad_points) -> float:
    nodes, weights = quadrature_rule(p, q, r, quad_points)
    mass = mass_fn(nodes)
    if _has_gap(mass_fn, q.support, nodes, mass):
        return INF
    ok = mass >= ZERO_MASS
    return float(np.sum(weights[ok] / mass[ok]))


# -- measures ----------------------------------------------------------------


def _check_radius(r):
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")


def delta_pmw(p: UnivariateDistribution, q: UnivariateDistribution, r: float, quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """Integral of 1 / P(B(x, r)) against Q; infinite across a positive-length gap."""
    _check_radius(r)
    return _integrate_inverse_mass(lambda x: np.asarray(ball_probability(p, x, r)), p, q, r, quad_points)


def _vicinity_mass_fn(instance, p, r, sup_search_points):
    def mass(x):
        x = np.asarray(x, dtype=float)
        return best_ball_mass(p, x, vicinity_radius(instance, x), r, instance.ambient, sup_search_points)

    return mass


def delta_v(
    instance: CovariateShiftInstance,
    r: float,
    quad_points: int = DEFAULT_QUAD_POINTS,
    sup_search_points: int = SUP_GRID,
    p: Optional[UnivariateDistribution] = None,
) -> float:
    """Integral over Q of the smallest inverse ball mass found inside the vicinity set.

    ``p`` defaults to the instance's source marginal; pass ``instance.q_x`` for
    the self-measure.
    """
    _check_radius(r)
    p = instance.p_x if p is None else p
    mass = _vicinity_mass_fn(instance, p, r, sup_search_points)
    return _integrate_inverse_mass(mass, p, instance.q_x, r, quad_points)


def _grid_sup(f, support: Interval, search_points: int, extra=()):
    xs = np.unique(np.concatenate([np.linspace(support.lo, support.hi, search_points), np.asarray(extra, dtype=float)]))
    vals = f(xs)
    j = int(np.argmax(vals))
    a = xs[max(j - 1, 0)]
    b = xs[min(j + 1, len(xs) - 1)]
    for _ in range(GOLDEN_ITERS):
        c = b - GOLDEN * (b - a)
        d = a + GOLDEN * (b - a)
        if f(np.array([c]))[0] >= f(np.array([d]))[0]:
            b = d
        else:
            a = c
    return float(max(vals[j], f(np.array([0.5 * (a + b)]))[0]))


def delta_km(p: UnivariateDistribution, q: UnivariateDistribution, r: float, search_points: int = 4097) -> float:
    """sup over Q's support of Q(B(x, r)) / P(B(x, r))."""
    _check_radius(r)
    xs = np.unique(np.concatenate([np.linspace(q.support.lo, q.support.hi, search_points), _breakpoints(p, q, r)]))
    if np.any(np.asarray(ball_probability(p, xs, r)) < ZERO_MASS):
        return INF

    def ratio(x):
        return np.asarray(ball_probability(q, x, r)) / np.asarray(ball_probability(p, x, r))

    return _grid_sup(ratio, q.support, search_points, _breakpoints(p, q, r))


def delta_dm(q: UnivariateDistribution, r: float, search_points: int = 4097) -> float:
    """sup over Q's support of 1 / Q(B(x, r))."""
    _check_radius(r)
    return _grid_sup(lambda x: 1.0 / np.asarray(ball_probability(q, x, r)), q.support, search_points)


def delta_bcn(q: UnivariateDistribution, r: float) -> float:
    """Number of closed radius-r balls needed to cover Q's support interval."""
    _check_radius(r)
    return float(max(1, math.ceil(q.support.length / (2.0 * r))))


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float


def delta_mc(
    instance: CovariateShiftInstance,
    r: float,
    which_measure: str,
    n_samples: int,
    rng_seed,
    p: Optional[UnivariateDistribution] = None,
    sup_search_points: int = SUP_GRID,
) -> McEstimate:
    """Monte Carlo estimate of the PMW or V integral: average the integrand at X ~ Q."""
    _check_radius(r)
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    which = which_measure.upper()
    if which not in ("PMW", "V"):
        raise ValueError(f"which_measure must be 'PMW' or 'V', got {which_measure!r}")
    p = instance.p_x if p is None else p
    xs = instance.q_x.quantile(_as_rng(rng_seed).random(n_samples))
    if which == "PMW":
        mass = np.asarray(ball_probability(p, xs, r), dtype=float)
    else:
        mass = _vicinity_mass_fn(instance, p, r, sup_search_points)(xs)
    if np.any(mass < ZERO_MASS):
        return McEstimate(INF, INF)
    vals = 1.0 / mass
    stderr = float(vals.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return McEstimate(float(vals.mean()), stderr)


# -- curves and exponents ----------------------------------------------------


@dataclass(frozen=True)
class MeasureCurve:
    r_grid: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        r = np.asarray(self.r_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.shape != v.shape or r.ndim != 1 or len(r) == 0:
            raise ValueError("r_grid and values must be nonempty 1-D arrays of equal length")
        if np.any(np.diff(r) <= 0):
            raise ValueError("r_grid must be strictly ascending")
        if np.any(v < 0):
            raise ValueError("measure values must be nonnegative")
        object.__setattr__(self, "r_grid", r)
        object.__setattr__(self, "values", v)

    def is_nonincreasing(self, rtol: float = 1e-9) -> bool:
        v = self.values
        with np.errstate(invalid="ignore"):
            ok = (v[1:] <= v[:-1] * (1 + rtol)) | np.isinf(v[:-1])
        return bool(np.all(ok))


def default_r_grid(d_x: float, octaves: int = 16, per_octave: int = 4) -> np.ndarray:
    """Geometric radii from d_x / 2^octaves up to d_x, ascending."""
    return d_x * 2.0 ** (-np.arange(octaves * per_octave, -1, -1) / per_octave)


def measure_curve(measure: Callable[[float], float], r_grid: Iterable[float], name: str = "") -> MeasureCurve:
    r = np.asarray(list(r_grid), dtype=float)
    return MeasureCurve(r, np.array([measure(float(x)) for x in r]), name)


SLOPE = "slope"
SUP_DEF = "sup_def"


def estimate_exponent(curve: MeasureCurve, d_x: float, mode: str = SLOPE, c_cap: float = 10.0) -> float:
    """Growth exponent of the measure as r shrinks.

    ``slope`` fits log(value) against log(d_x / r) by least squares;
    ``sup_def`` returns the smallest tau on a 1e-3 grid with
    sup_r (r / d_x)^tau * value <= c_cap. Any infinite value below d_x / 4
    makes the exponent infinite.
    """
    r, v = curve.r_grid, curve.values
    if np.any(np.isinf(v[r < d_x / 4])):
        return INF
    finite = np.isfinite(v) & (v > 0)
    if mode == SLOPE:
        if np.count_nonzero(finite) < 2:
            raise ValueError("slope fit needs at least two finite entries")
        slope, _ = np.polyfit(np.log(d_x / r[finite]), np.log(v[finite]), 1)
        return float(slope)
    if mode == SUP_DEF:
        if c_cap < 1:
            raise ValueError("c_cap must be at least 1")
        if np.any(np.isinf(v)):
            return INF
        taus = np.arange(0.0, 20.0 + 5e-4, 1e-3)
        sups = np.max((r[None, :] / d_x) ** taus[:, None] * v[None, :], axis=1)
        ok = np.nonzero(sups <= c_cap)[0]
        return float(taus[ok[0]]) if len(ok) else INF
    raise ValueError(f"unknown mode {mode!r}")


# -- rates -------------------------------------------------------------------


@dataclass(frozen=True)
class RateSpec:
    exp_p: float
    exp_q: float
    log_factor: bool


def _rate_exponent(alpha, beta, expo):
    if math.isinf(expo):
        return 0.0
    return (1.0 + beta) / (2.0 + beta + max(1.0, expo / alpha))


def theoretical_rate(alpha: float, beta: float, tau: float, psi: float) -> RateSpec:
    """Exponents of n_P and n_Q in the excess-error upper bound."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not (beta > 0 and tau > 0 and psi > 0):
        raise ValueError("beta, tau and psi must be positive")
    log_factor = math.isclose(alpha, tau) or math.isclose(alpha, psi)
    return RateSpec(_rate_exponent(alpha, beta, tau), _rate_exponent(alpha, beta, psi), log_factor)


def _bound_value(rate: RateSpec, n_p: float, n_q: float) -> float:
    v = 1.0 / (n_p**rate.exp_p + n_q**rate.exp_q)
    if rate.log_factor:
        v *= math.log(n_p + n_q)
    return v


def bound_curve(
    rate: RateSpec,
    n_p_grid: Sequence[float],
    n_q: float,
    anchor: Optional[tuple] = None,
) -> list:
    """(n_p, bound) pairs; with ``anchor=(n_p0, value0)`` the curve passes through it."""
    if len(n_p_grid) == 0:
        raise ValueError("n_p_grid must be nonempty")
    if anchor is None:
        return [(n_p, _bound_value(rate, n_p, n_q)) for n_p in n_p_grid]
    n_p0, value0 = anchor
    scale = value0 / _bound_value(rate, n_p0, n_q)
    # the anchor point is returned verbatim so it matches the data bit for bit
    return [(n_p, value0 if n_p == n_p0 else scale * _bound_value(rate, n_p, n_q)) for n_p in n_p_grid]


# -- export ------------------------------------------------------------------


def format_value(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def write_curves_csv(curves: Sequence[MeasureCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "measure_name", "value"])
        for c in curves:
            for r, v in zip(c.r_grid, c.values):
                w.writerow([repr(float(r)), c.name, format_value(v)])
