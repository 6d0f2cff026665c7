"""Command-line entry point: scenario, dissim, sweep, diagnose and plot subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import dissim, experiment, knn
from .dissim import SLOPE, bound_curve, estimate_exponent, format_value, measure_curve, theoretical_rate
from .experiment import (
    DESK_GRID,
    FULL_GRID,
    PMW_K,
    VICINITY_K,
    ExperimentConfig,
    SchemaError,
    fit_loglog_slope,
    read_results,
    run_sweep,
    write_aggregates,
    write_results,
)
from .plotting import LABELS, Guideline, emit_plot
from .scenarios import get_scenario, scenario_names

EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2
METHOD_NAMES = {"vicinity": VICINITY_K, "pmw": PMW_K}

DEFAULT_T_GRID = tuple(float(t) for t in np.geomspace(1e-3, 0.5, 10))

CURVES_FILE = "dissim_curves.csv"
SUMMARY_FILE = "dissim_summary.csv"
RESULTS_FILE = "results.csv"
AGGREGATES_FILE = "aggregates.csv"
PLOT_FILE = "plot.svg"
TAIL_FILE = "diagnose_tail.csv"
EXCEED_FILE = "diagnose_exceedance.csv"


class ConfigError(ValueError):
    """Invalid configuration or command-line usage."""


@dataclass
class CliConfig:
    scenario: Optional[str] = None
    n_p_grid: List[int] = field(default_factory=lambda: list(DESK_GRID))
    n_q: int = 10
    test_size: int = 5000
    runs: int = 10
    seed: int = 0
    methods: List[str] = field(default_factory=lambda: ["vicinity", "pmw"])
    r_grid: Optional[List[float]] = None
    output_dir: str = "out"
    slope_window: Optional[List[int]] = None
    trials: int = 2000
    k: int = 8
    t_grid: List[float] = field(default_factory=lambda: list(DEFAULT_T_GRID))
    draws: int = 200


_INT_KEYS = ("n_q", "test_size", "runs", "seed", "trials", "k", "draws")


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def parse_config(doc: dict) -> CliConfig:
    """Validate a decoded JSON document; unknown keys and wrong types are errors."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = set(CliConfig.__dataclass_fields__)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cfg = CliConfig(**doc)
    if cfg.scenario is not None and not isinstance(cfg.scenario, str):
        raise ConfigError("scenario must be a string")
    for key in _INT_KEYS:
        if not _is_int(getattr(cfg, key)):
            raise ConfigError(f"{key} must be an integer")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg.runs < 1 or cfg.test_size < 1 or cfg.n_q < 0:
        raise ConfigError("runs and test_size must be >= 1, n_q >= 0")
    if cfg.trials < 1:
        raise ConfigError("trials must be at least 1")
    if cfg.k < 1 or cfg.draws < 1:
        raise ConfigError("k and draws must be at least 1")
    grid = cfg.n_p_grid
    if not isinstance(grid, list) or not grid or not all(_is_int(n) and n >= 0 for n in grid):
        raise ConfigError("n_p_grid must be a nonempty array of nonnegative integers")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("n_p_grid must be strictly ascending")
    if not isinstance(cfg.methods, list) or not cfg.methods or any(m not in METHOD_NAMES for m in cfg.methods):
        raise ConfigError('methods must be a nonempty array of "vicinity" and/or "pmw"')
    if len(set(cfg.methods)) != len(cfg.methods):
        raise ConfigError("methods must not repeat")
    if cfg.r_grid is not None:
        r = cfg.r_grid
        if not isinstance(r, list) or not r or not all(_is_real(x) and x > 0 for x in r):
            raise ConfigError("r_grid must be a nonempty array of positive numbers")
        if any(b <= a for a, b in zip(r, r[1:])):
            raise ConfigError("r_grid must be strictly ascending")
    if not isinstance(cfg.t_grid, list) or not cfg.t_grid or not all(_is_real(t) and t > 0 for t in cfg.t_grid):
        raise ConfigError("t_grid must be a nonempty array of positive numbers")
    if cfg.slope_window is not None:
        w = cfg.slope_window
        if not isinstance(w, list) or len(w) != 2 or not all(_is_int(x) for x in w) or w[0] > w[1]:
            raise ConfigError("slope_window must be [lo, hi] with lo <= hi")
    if not isinstance(cfg.output_dir, str) or not cfg.output_dir:
        raise ConfigError("output_dir must be a nonempty string")
    return cfg


def load_config(path: Optional[str]) -> CliConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc)


def _require_scenario(cfg: CliConfig):
    if cfg.scenario is None:
        raise ConfigError("config needs a scenario")
    try:
        return get_scenario(cfg.scenario)
    except KeyError:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; choose from {', '.join(scenario_names())}") from None


class _Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, directory: str):
        self.directory = directory
        self.paths: List[str] = []

    def path(self, name: str) -> str:
        os.makedirs(self.directory, exist_ok=True)
        p = os.path.join(self.directory, name)
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            if os.path.exists(p):
                os.remove(p)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# -- subcommands ---------------------------------------------------------------


def cmd_scenario(name: str, out=None) -> int:
    out = out or sys.stdout
    if name == "list":
        for n in scenario_names():
            print(n, file=out)
        return EXIT_OK
    try:
        spec = get_scenario(name)
    except KeyError:
        print(f"error: unknown scenario {name!r}; choose from {', '.join(scenario_names())}", file=sys.stderr)
        return EXIT_USAGE
    for key, value in spec.metadata().items():
        if isinstance(value, float):
            value = format_value(value)
        elif isinstance(value, list):
            value = "[" + ", ".join(format_value(v) for v in value) + "]"
        print(f"{key}: {value}", file=out)
    return EXIT_OK


SUMMARY_ORDER = ("tau_v", "psi_v", "tau_pmw", "psi_pmw", "tau_km", "psi_dm", "psi_bcn")


def dissim_curves(spec, r_grid) -> list:
    inst = spec.instance
    p, q = inst.p_x, inst.q_x
    named = [
        ("delta_v", lambda r: dissim.delta_v(inst, r)),
        ("delta_v_self", lambda r: dissim.delta_v(inst, r, p=q)),
        ("delta_pmw", lambda r: dissim.delta_pmw(p, q, r)),
        ("delta_pmw_self", lambda r: dissim.delta_pmw(q, q, r)),
        ("delta_km", lambda r: dissim.delta_km(p, q, r)),
        ("delta_dm", lambda r: dissim.delta_dm(q, r)),
        ("delta_bcn", lambda r: dissim.delta_bcn(q, r)),
    ]
    return [measure_curve(fn, r_grid, name) for name, fn in named]


def summarize_exponents(curves, d_x: float) -> dict:
    """Exponent per summary key, or None when the grid cannot support a fit."""
    by_name = {c.name: c for c in curves}
    source = dict(
        zip(SUMMARY_ORDER, ("delta_v", "delta_v_self", "delta_pmw", "delta_pmw_self", "delta_km", "delta_dm", "delta_bcn"))
    )
    out = {}
    for key in SUMMARY_ORDER:
        curve = by_name[source[key]]
        if len(curve.r_grid) < 2:
            out[key] = None
            continue
        try:
            out[key] = estimate_exponent(curve, d_x, SLOPE)
        except ValueError:
            out[key] = None
    return out


def cmd_dissim(cfg: CliConfig, out=None) -> int:
    out = out or sys.stdout
    spec = _require_scenario(cfg)
    d_x = spec.instance.ambient.length
    r_grid = np.asarray(cfg.r_grid, dtype=float) if cfg.r_grid is not None else dissim.default_r_grid(d_x)
    curves = dissim_curves(spec, r_grid)
    summary = summarize_exponents(curves, d_x)
    outputs = _Outputs(cfg.output_dir)
    try:
        dissim.write_curves_csv(curves, outputs.path(CURVES_FILE))
        rows = [(k, "unavailable" if v is None else format_value(v)) for k, v in summary.items()]
        _write_rows(outputs.path(SUMMARY_FILE), ["exponent", "value"], rows)
    except BaseException:
        outputs.discard()
        raise
    print(f"scenario {spec.name}: {len(r_grid)} radii", file=out)
    for k, v in rows:
        print(f"  {k:8s} {v}", file=out)
    return EXIT_OK


def guidelines_for(spec, result, methods) -> List[Guideline]:
    inst = spec.instance
    lines = []
    for method in methods:
        pts = result.method_means(method)
        if not pts:
            continue
        tau, psi = experiment.method_exponents(spec, method)
        rate = theoretical_rate(inst.alpha, inst.beta, tau, psi)
        n_q = result.records[0].n_q
        curve = bound_curve(rate, [n for n, _ in pts], n_q, anchor=pts[0])
        lines.append(Guideline(f"bound, {LABELS[method]} (n_P^-{rate.exp_p:.3f})", tuple(curve)))
    return lines


def report_slopes(result, methods, window=None, out=None) -> dict:
    out = out or sys.stdout
    slopes = {}
    for method in methods:
        try:
            fit = fit_loglog_slope(result.method_means(method), window)
        except ValueError as exc:
            print(f"{method}: slope unavailable ({exc})", file=out)
            slopes[method] = None
            continue
        note = f", excluded n_p={list(fit.excluded)}" if fit.excluded else ""
        print(f"{method}: slope {fit.slope:.4f} (residual {fit.residual:.4f}{note})", file=out)
        slopes[method] = fit
    return slopes


def cmd_sweep(cfg: CliConfig, out=None) -> int:
    out = out or sys.stdout
    spec = _require_scenario(cfg)
    methods = tuple(METHOD_NAMES[m] for m in cfg.methods)
    try:
        config = ExperimentConfig(
            cfg.scenario, tuple(cfg.n_p_grid), cfg.n_q, cfg.test_size, cfg.runs, cfg.seed, methods
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    result = run_sweep(config)
    outputs = _Outputs(cfg.output_dir)
    try:
        write_results(result, outputs.path(RESULTS_FILE))
        write_aggregates(result, outputs.path(AGGREGATES_FILE))
        emit_plot(result, guidelines_for(spec, result, methods), outputs.path(PLOT_FILE), title=spec.name)
    except BaseException:
        outputs.discard()
        raise
    report_slopes(result, methods, cfg.slope_window, out)
    return EXIT_OK


def cmd_plot(cfg: CliConfig, results_path: Optional[str] = None, out=None) -> int:
    out = out or sys.stdout
    path = results_path or os.path.join(cfg.output_dir, RESULTS_FILE)
    try:
        result = read_results(path)
    except (OSError, SchemaError) as exc:
        raise ConfigError(str(exc)) from exc
    if not result.records:
        raise ConfigError(f"{path} holds no records")
    names = sorted({r.scenario for r in result.records})
    if len(names) != 1:
        raise ConfigError(f"{path} mixes scenarios: {names}")
    try:
        spec = get_scenario(names[0])
    except KeyError:
        raise ConfigError(f"unknown scenario {names[0]!r} in {path}") from None
    methods = tuple(m for m in experiment.METHODS if result.method_means(m))
    outputs = _Outputs(cfg.output_dir)
    try:
        emit_plot(result, guidelines_for(spec, result, methods), outputs.path(PLOT_FILE), title=spec.name)
    except BaseException:
        outputs.discard()
        raise
    report_slopes(result, methods, cfg.slope_window, out)
    return EXIT_OK


def cmd_diagnose(cfg: CliConfig, out=None) -> int:
    out = out or sys.stdout
    spec = _require_scenario(cfg)
    inst = spec.instance
    tail_rows, exceed_rows = [], []
    failures = 0
    for n_p in cfg.n_p_grid:
        if n_p // cfg.k + cfg.n_q // cfg.k < 1:
            raise ConfigError(f"k={cfg.k} leaves batches empty at n_p={n_p}, n_q={cfg.n_q}")
        rows = knn.check_1nn_tail_bound(inst, n_p, cfg.n_q, cfg.k, cfg.t_grid, cfg.trials, cfg.seed)
        for row in rows:
            failures += not row.passed
            tail_rows.append(
                [n_p, row.variant, repr(row.t), repr(row.empirical), format_value(row.bound),
                 repr(row.sigma), "pass" if row.passed else "FAIL"]
            )
        records = knn.regression_error_study(inst, n_p, cfg.n_q, cfg.k, cfg.draws, cfg.seed)
        for t, freq in knn.exceedance_frequencies(records, cfg.t_grid):
            exceed_rows.append([n_p, repr(t), repr(freq)])
    outputs = _Outputs(cfg.output_dir)
    try:
        _write_rows(outputs.path(TAIL_FILE), ["n_p", "variant", "t", "empirical", "bound", "sigma", "status"], tail_rows)
        _write_rows(outputs.path(EXCEED_FILE), ["n_p", "t", "exceedance"], exceed_rows)
    except BaseException:
        outputs.discard()
        raise
    for r in tail_rows:
        print(f"n_p={r[0]} {r[1]:8s} t={float(r[2]):.4g} empirical={float(r[3]):.4f} bound={r[4]} {r[6]}", file=out)
    print(f"{len(tail_rows) - failures}/{len(tail_rows)} tail rows within 3 sigma", file=out)
    return EXIT_ASSERT if failures else EXIT_OK


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vicinity-shift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sc = sub.add_parser("scenario", help="list the catalog or describe one scenario")
    sc.add_argument("name", help='scenario name, or "list"')

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output-dir", help="overrides output_dir")
        p.add_argument("--seed", type=int, help="overrides seed")
        return p

    common(sub.add_parser("dissim", help="dissimilarity curves and exponents"))
    sw = common(sub.add_parser("sweep", help="excess error against n_P"))
    sw.add_argument("--full-grid", action="store_true", help="use n_P = 2^8 .. 2^18")
    common(sub.add_parser("diagnose", help="implicit 1-NN tail bound and regression error checks"))
    pl = common(sub.add_parser("plot", help="redraw the SVG from a results CSV"))
    pl.add_argument("--results", help="results CSV (default: <output_dir>/results.csv)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenario":
        return cmd_scenario(args.name)
    try:
        cfg = load_config(args.config)
        if args.output_dir is not None:
            cfg.output_dir = args.output_dir
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.seed = args.seed
        if getattr(args, "full_grid", False):
            cfg.n_p_grid = list(FULL_GRID)
        if args.command == "dissim":
            return cmd_dissim(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "diagnose":
            return cmd_diagnose(cfg)
        return cmd_plot(cfg, args.results)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        # could not read inputs or write outputs; partial files are already removed
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
