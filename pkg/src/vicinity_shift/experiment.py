"""Source sample-size sweep: excess error of k-NN under both k-selection rules."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import INF, SOURCE, TARGET, CovariateShiftInstance, LabeledSample, bayes_label, margin, sample_labeled
from .knn import fit, predict, select_k
from .scenarios import ScenarioSpec, get_scenario, scenario_names

log = logging.getLogger(__name__)

VICINITY_K = "VICINITY_K"
PMW_K = "PMW_K"
METHODS = (VICINITY_K, PMW_K)

DESK_GRID = tuple(2**e for e in range(8, 17))
FULL_GRID = tuple(2**e for e in range(8, 19))

RESULTS_HEADER = ["scenario", "method", "n_p", "n_q", "run", "k", "excess_error"]
AGGREGATE_HEADER = ["scenario", "method", "n_p", "mean", "q1", "q3"]


class SchemaError(ValueError):
    """A results file does not match the expected CSV layout."""


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    n_p_grid: Tuple[int, ...] = DESK_GRID
    n_q: int = 10
    test_size: int = 5000
    runs: int = 10
    master_seed: int = 0
    methods: Tuple[str, ...] = METHODS

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_p_grid)
        object.__setattr__(self, "n_p_grid", grid)
        object.__setattr__(self, "methods", tuple(self.methods))
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 0:
            raise ValueError("n_p_grid must be nonempty, nonnegative and strictly ascending")
        if self.runs < 1 or self.test_size < 1 or self.n_q < 0:
            raise ValueError("runs and test_size must be >= 1 and n_q >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")


@dataclass(frozen=True)
class RunRecord:
    scenario: str
    method: str
    n_p: int
    n_q: int
    run: int
    k: int
    excess_error: float

    def key(self):
        return (self.scenario, self.method, self.n_p, self.run)


@dataclass(frozen=True)
class Aggregate:
    mean: float
    q1: float
    q3: float


@dataclass
class SweepResult:
    records: List[RunRecord]
    aggregates: Dict[Tuple[str, str, int], Aggregate] = field(default_factory=dict)

    def __post_init__(self):
        self.records = sorted(self.records, key=RunRecord.key)
        if not self.aggregates and self.records:
            self.aggregates = aggregate(self.records)

    def method_means(self, method: str, scenario: Optional[str] = None) -> List[Tuple[int, float]]:
        return sorted(
            (n_p, agg.mean)
            for (scen, m, n_p), agg in self.aggregates.items()
            if m == method and (scenario is None or scen == scenario)
        )

    def __eq__(self, other):
        if not isinstance(other, SweepResult):
            return NotImplemented
        return self.records == other.records and self.aggregates == other.aggregates


def empirical_excess_error(instance: CovariateShiftInstance, predictor: Callable, test_xs) -> float:
    """Mean of 2 g(x) over test points where the predictor disagrees with the Bayes label."""
    xs = np.asarray(test_xs, dtype=float)
    if len(xs) < 1:
        raise ValueError("need at least one test point")
    wrong = np.asarray(predictor(xs)) != bayes_label(instance, xs)
    return float(np.mean(2.0 * margin(instance, xs) * wrong))


def method_exponents(spec: ScenarioSpec, method: str) -> Tuple[float, float]:
    ke = spec.known_exponents
    if method == VICINITY_K:
        return ke.tau_v, ke.psi_v
    if method == PMW_K:
        return INF, ke.psi_pmw
    raise ValueError(f"unknown method {method!r}")


def cell_seed(master_seed: int, scenario_index: int, n_p_index: int, run: int) -> np.random.SeedSequence:
    """Seed for one sweep cell.

    numpy's SeedSequence hashes the four words into a well-mixed 128-bit
    state, so cells are independent and can run in any order.
    """
    return np.random.SeedSequence([int(master_seed), int(scenario_index), int(n_p_index), int(run)])


def draw_cell(instance: CovariateShiftInstance, n_p: int, n_q: int, m: int, seed) -> Tuple[LabeledSample, np.ndarray]:
    rng = np.random.default_rng(seed)
    train = LabeledSample.concat(
        sample_labeled(instance.p_x, instance.reg, n_p, SOURCE, rng),
        sample_labeled(instance.q_x, instance.reg, n_q, TARGET, rng),
    )
    test_xs = instance.q_x.quantile(rng.random(m))
    return train, test_xs


def run_sweep(config: ExperimentConfig, progress: Optional[Callable[[str], None]] = None) -> SweepResult:
    spec = get_scenario(config.scenario)
    inst = spec.instance
    scen_index = scenario_names().index(config.scenario)
    records = []
    for i, n_p in enumerate(config.n_p_grid):
        for run in range(config.runs):
            train, test_xs = draw_cell(inst, n_p, config.n_q, config.test_size, cell_seed(config.master_seed, scen_index, i, run))
            model = fit(train)
            for method in config.methods:
                tau, psi = method_exponents(spec, method)
                k = select_k(n_p, config.n_q, inst.alpha, inst.beta, tau, psi)
                err = empirical_excess_error(inst, lambda xs: predict(model, xs, k), test_xs)
                records.append(RunRecord(config.scenario, method, n_p, config.n_q, run, k, err))
        if progress is not None:
            progress(f"{config.scenario}: n_p={n_p} done")
    return SweepResult(records)


def aggregate(records: Sequence[RunRecord]) -> Dict[Tuple[str, str, int], Aggregate]:
    """Mean and linearly interpolated first/third quartiles per (scenario, method, n_p)."""
    cells = defaultdict(list)
    for rec in records:
        cells[(rec.scenario, rec.method, rec.n_p)].append(rec.excess_error)
    if not cells:
        raise ValueError("no records to aggregate")
    sizes = {len(v) for v in cells.values()}
    if len(sizes) != 1:
        raise ValueError(f"unequal run counts across cells: {sorted(sizes)}")
    out = {}
    for key in sorted(cells):
        v = np.asarray(cells[key], dtype=float)
        q1, q3 = np.quantile(v, [0.25, 0.75], method="linear")
        # fsum keeps the mean correctly rounded, so equal runs aggregate to exactly that value
        out[key] = Aggregate(math.fsum(v) / len(v), float(q1), float(q3))
    return out


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    excluded: Tuple[int, ...] = ()


def fit_loglog_slope(points: Sequence[Tuple[int, float]], window: Optional[Tuple[int, int]] = None) -> SlopeFit:
    """Least-squares slope of log2(mean error) on log2(n_p).

    Points with zero mean error are dropped (with a warning) since their
    logarithm is undefined; ``residual`` is the RMS residual in log2 units.
    """
    pts = sorted(points)
    if window is not None:
        pts = [(n, e) for n, e in pts if window[0] <= n <= window[1]]
    excluded = tuple(n for n, e in pts if not e > 0)
    if excluded:
        log.warning("excluding n_p=%s from slope fit: zero mean excess error", list(excluded))
    pts = [(n, e) for n, e in pts if e > 0]
    if len(pts) < 2:
        raise ValueError("slope fit needs at least two points with positive mean error")
    x = np.log2([n for n, _ in pts])
    y = np.log2([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return SlopeFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), excluded)


# -- persistence -------------------------------------------------------------


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_results(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in result.records:
            w.writerow([r.scenario, r.method, r.n_p, r.n_q, r.run, r.k, _fmt(r.excess_error)])


def write_aggregates(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for (scen, method, n_p), a in sorted(result.aggregates.items()):
            w.writerow([scen, method, n_p, _fmt(a.mean), _fmt(a.q1), _fmt(a.q3)])


def read_results(path) -> SweepResult:
    records = []
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise OSError(f"cannot read results file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise SchemaError(f"{path}: line 1: expected header {','.join(RESULTS_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RESULTS_HEADER):
                raise SchemaError(f"{path}: line {lineno}: expected {len(RESULTS_HEADER)} fields, got {len(row)}")
            try:
                rec = RunRecord(row[0], row[1], int(row[2]), int(row[3]), int(row[4]), int(row[5]), float(row[6]))
            except ValueError as exc:
                raise SchemaError(f"{path}: line {lineno}: {exc}") from exc
            if rec.method not in METHODS:
                raise SchemaError(f"{path}: line {lineno}: unknown method {rec.method!r}")
            if not 0.0 <= rec.excess_error <= 1.0 or math.isnan(rec.excess_error):
                raise SchemaError(f"{path}: line {lineno}: excess_error outside [0, 1]")
            records.append(rec)
    return SweepResult(records)
