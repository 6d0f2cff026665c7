"""k-NN classifier on the line, theory-guided k, and implicit 1-NN diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np

from .core import (
    SOURCE,
    TARGET,
    CovariateShiftInstance,
    LabeledSample,
    _as_rng,
    margin,
    sample_labeled,
)
from .dissim import delta_pmw, delta_v, vicinity_radius

PLAIN = "plain"
VICINITY = "vicinity"


def select_k(n_p: int, n_q: int, alpha: float, beta: float, tau: float, psi: float) -> int:
    """floor((n_p^(1/(2+beta+max(1,tau/alpha))) + n_q^(1/(2+beta+max(1,psi/alpha))))^2), clamped."""
    if n_p < 0 or n_q < 0 or n_p + n_q == 0:
        raise ValueError("need n_p, n_q >= 0 and not both zero")

    def term(n, expo):
        if math.isinf(expo):
            return 1.0
        return n ** (1.0 / (2.0 + beta + max(1.0, expo / alpha)))

    k = math.floor((term(n_p, tau) + term(n_q, psi)) ** 2)
    return int(min(max(k, 1), n_p + n_q))


@dataclass(frozen=True, eq=False)
class KnnModel:
    xs: np.ndarray
    ys: np.ndarray
    origins: np.ndarray

    def __len__(self):
        return len(self.xs)

    @property
    def n_p(self) -> int:
        return int(np.count_nonzero(self.origins == SOURCE))

    @property
    def n_q(self) -> int:
        return int(np.count_nonzero(self.origins == TARGET))


def fit(sample: LabeledSample) -> KnnModel:
    if len(sample) == 0:
        raise ValueError("cannot fit a k-NN model on an empty sample")
    order = np.argsort(sample.xs, kind="stable")
    return KnnModel(sample.xs[order], sample.ys[order], sample.origins[order])


def _label_sums(model: KnnModel, queries: np.ndarray, k: int) -> np.ndarray:
    """Sum of labels over the k nearest training points of each query.

    Grows a window outward from the insertion point; on equal distances the
    left (smaller x) candidate is taken first.
    """
    xs, ys = model.xs, model.ys.astype(np.int64)
    n = len(xs)
    right = np.searchsorted(xs, queries, side="left")
    left = right - 1
    total = np.zeros(len(queries), dtype=np.int64)
    for _ in range(k):
        dl = np.where(left >= 0, queries - xs[np.maximum(left, 0)], np.inf)
        dr = np.where(right < n, xs[np.minimum(right, n - 1)] - queries, np.inf)
        take_left = dl <= dr
        total += np.where(take_left, ys[np.maximum(left, 0)], ys[np.minimum(right, n - 1)])
        left = np.where(take_left, left - 1, left)
        right = np.where(take_left, right, right + 1)
    return total


def _check_k(model, k):
    if not 1 <= k <= len(model):
        raise ValueError(f"k must lie in [1, {len(model)}], got {k}")


def estimate_eta(model: KnnModel, x, k: int):
    _check_k(model, k)
    q = np.atleast_1d(np.asarray(x, dtype=float))
    out = _label_sums(model, q, k) / k
    return float(out[0]) if np.ndim(x) == 0 else out


def predict(model: KnnModel, x, k: int):
    _check_k(model, k)
    q = np.atleast_1d(np.asarray(x, dtype=float))
    # sum / k >= 1/2  <=>  2 * sum >= k, exact in integers
    out = (2 * _label_sums(model, q, k) >= k).astype(np.int8)
    return int(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class BatchPartition:
    batches: List[np.ndarray]
    leftover: np.ndarray


def make_batches(sample: LabeledSample, k: int, rng_seed) -> BatchPartition:
    """Deal shuffled SOURCE and TARGET indices into k disjoint batches.

    Each batch receives floor(n_p / k) source and floor(n_q / k) target
    indices; whatever does not divide evenly is left over.
    """
    if k < 1:
        raise ValueError("k must be positive")
    per_p, per_q = sample.n_p // k, sample.n_q // k
    if per_p + per_q < 1:
        raise ValueError("batches would be empty: need floor(n_p/k) + floor(n_q/k) >= 1")
    rng = _as_rng(rng_seed)
    src = rng.permutation(np.nonzero(sample.origins == SOURCE)[0])
    tgt = rng.permutation(np.nonzero(sample.origins == TARGET)[0])
    batches = [
        np.concatenate([src[i * per_p : (i + 1) * per_p], tgt[i * per_q : (i + 1) * per_q]])
        for i in range(k)
    ]
    leftover = np.concatenate([src[k * per_p :], tgt[k * per_q :]])
    return BatchPartition(batches, leftover)


def implicit_1nn(
    sample: LabeledSample,
    batches: BatchPartition,
    x: float,
    metric: str = PLAIN,
    instance: Optional[CovariateShiftInstance] = None,
) -> np.ndarray:
    """Per-batch distance from ``x`` to its nearest batch member.

    With ``metric=VICINITY`` the distance is measured to the vicinity set of
    ``x``, which needs ``instance``.
    """
    shrink = 0.0
    if metric == VICINITY:
        if instance is None:
            raise ValueError("the vicinity metric needs an instance")
        shrink = vicinity_radius(instance, x)
    elif metric != PLAIN:
        raise ValueError(f"unknown metric {metric!r}")
    out = np.empty(len(batches.batches))
    for i, idx in enumerate(batches.batches):
        out[i] = np.min(np.abs(sample.xs[idx] - x))
    return np.maximum(0.0, out - shrink)


@dataclass(frozen=True)
class TailRow:
    t: float
    variant: str
    empirical: float
    bound: float
    sigma: float

    @property
    def capped_bound(self) -> float:
        return min(1.0, self.bound)

    @property
    def passed(self) -> bool:
        return self.empirical <= self.capped_bound + 3.0 * self.sigma


def _trial_seed(seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(trial)])


def first_batch_min_distances(instance, n_p, n_q, k, trials, rng_seed):
    """For each trial: fresh sample, fresh X ~ Q, nearest distance within batch B_1.

    Returns (plain distances, vicinity radii at X); the vicinity distance is
    max(0, plain - radius).
    """
    plain = np.empty(trials)
    radius = np.empty(trials)
    for trial in range(trials):
        rng = np.random.default_rng(_trial_seed(rng_seed, trial))
        sample = LabeledSample.concat(
            sample_labeled(instance.p_x, instance.reg, n_p, SOURCE, rng),
            sample_labeled(instance.q_x, instance.reg, n_q, TARGET, rng),
        )
        x = float(instance.q_x.quantile(rng.random()))
        part = make_batches(sample, k, rng)
        plain[trial] = implicit_1nn(sample, BatchPartition(part.batches[:1], part.leftover), x)[0]
        radius[trial] = vicinity_radius(instance, x)
    return plain, radius


@lru_cache(maxsize=512)
def _measure_pair(instance, t, variant, quad_points):
    if variant == PLAIN:
        return (
            delta_pmw(instance.p_x, instance.q_x, t, quad_points),
            delta_pmw(instance.q_x, instance.q_x, t, quad_points),
        )
    if variant == VICINITY:
        return delta_v(instance, t, quad_points), delta_v(instance, t, quad_points, p=instance.q_x)
    raise ValueError(f"unknown variant {variant!r}")


def tail_bound(instance, n_p, n_q, k, t, variant, quad_points=2048) -> float:
    """min(Delta(P,Q;t) / floor(n_p/k), Delta(Q,Q;t) / floor(n_q/k)), skipping empty terms."""
    per_p, per_q = n_p // k, n_q // k
    dp, dq = _measure_pair(instance, float(t), variant, quad_points)
    terms = [math.inf]
    if per_p > 0:
        terms.append(dp / per_p)
    if per_q > 0:
        terms.append(dq / per_q)
    return min(terms)


def check_1nn_tail_bound(
    instance: CovariateShiftInstance,
    n_p: int,
    n_q: int,
    k: int,
    t_grid: Sequence[float],
    trials: int,
    rng_seed,
    variants: Sequence[str] = (PLAIN, VICINITY),
) -> List[TailRow]:
    """Empirical P(nearest distance in B_1 > t) against min of the two measure ratios.

    PLAIN pairs the ordinary distance with the PMW measure, VICINITY pairs the
    vicinity distance with the vicinity measure. sigma is the binomial standard
    deviation at the capped bound.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    plain, radius = first_batch_min_distances(instance, n_p, n_q, k, trials, rng_seed)
    vic = np.maximum(0.0, plain - radius)
    rows = []
    for variant in variants:
        dist = plain if variant == PLAIN else vic
        for t in t_grid:
            bound = tail_bound(instance, n_p, n_q, k, float(t), variant)
            b = min(1.0, bound)
            rows.append(
                TailRow(float(t), variant, float(np.mean(dist > t)), bound, math.sqrt(b * (1.0 - b) / trials))
            )
    return rows


@dataclass(frozen=True)
class RegressionErrorRecord:
    x: float
    lhs: float
    vicinity_bias: float
    half_margin: float

    def exceeds(self, t: float) -> bool:
        return self.lhs > self.vicinity_bias + self.half_margin + t


def regression_error_diagnostic(
    instance: CovariateShiftInstance,
    sample: LabeledSample,
    x: float,
    k: int,
    rng_seed,
) -> RegressionErrorRecord:
    """Both sides of the regression-error bound at ``x``, without the unknown constants.

    The vicinity bias is c_alpha times the batch average of rho_V^alpha of the
    implicit vicinity 1-NNs.
    """
    model = fit(sample)
    lhs = abs(estimate_eta(model, x, k) - float(instance.reg(x)))
    part = make_batches(sample, k, rng_seed)
    d = implicit_1nn(sample, part, x, VICINITY, instance)
    bias = instance.c_alpha * float(np.mean(d**instance.alpha))
    return RegressionErrorRecord(float(x), lhs, bias, 0.5 * margin(instance, x))


def regression_error_study(
    instance: CovariateShiftInstance,
    n_p: int,
    n_q: int,
    k: int,
    draws: int,
    rng_seed,
) -> List[RegressionErrorRecord]:
    records = []
    for i in range(draws):
        rng = np.random.default_rng(_trial_seed(rng_seed, i))
        sample = LabeledSample.concat(
            sample_labeled(instance.p_x, instance.reg, n_p, SOURCE, rng),
            sample_labeled(instance.q_x, instance.reg, n_q, TARGET, rng),
        )
        x = float(instance.q_x.quantile(rng.random()))
        records.append(regression_error_diagnostic(instance, sample, x, k, rng))
    return records


def exceedance_frequencies(records: Sequence[RegressionErrorRecord], t_grid: Sequence[float]) -> List[tuple]:
    """(t, fraction of records whose error exceeds bias + margin/2 + t)."""
    return [(float(t), float(np.mean([r.exceeds(t) for r in records]))) for t in t_grid]
