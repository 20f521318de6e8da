"""Command-line front end: sweeps, optimization, validation, reproduction."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .dequiv import (
    PhaseConfig,
    REGIMES,
    aggregate as aggregate_power,
    coverage_probability,
    knee_threshold,
    transition_thresholds,
)
from .montecarlo import estimate_coverage
from .optimizer import OptimizerConfig, coverage_gradient, optimize
from .scenario import (
    ConfigError,
    Scenario,
    cascaded_gains,
    desk_scenario,
    load_scenario,
    reference_scenario,
    scenario_to_dict,
    transmit_snr,
)
from .spatialcorr import NORMALIZATIONS, NumericalError, scenario_correlations

PHASE_SOURCES = ("initial", "optimized", "random", "file")

# deterministic build identifier derived from the release version
BUILD_ID = hashlib.sha1(("irscov-" + __version__).encode()).hexdigest()[:12]

# stride mixing the base seed with a point index into a fresh substream key
_SEED_STRIDE = 0x9E3779B97F4A7C15

CSV_COLUMNS = (
    "t_db",
    "b_value",
    "pc_closed_form",
    "pc_mc",
    "ci_low",
    "ci_high",
    "m_count",
    "n_count",
    "regime",
    "correlated",
    "seed",
)


@dataclass(frozen=True)
class SweepSpec:
    """One coverage sweep: thresholds, regime, phases, and MC settings."""

    thresholds_db: tuple[float, ...]
    regime: str = "m-finite"
    phase_source: str = "initial"
    mc_trials: int = 0
    seed: int = 0
    uncorrelated: bool = False
    normalization: str = "element-area"
    phase_seed: int = 0
    phase_file: str | None = None

    def __post_init__(self):
        if not self.thresholds_db:
            raise ConfigError("sweep: threshold grid must be non-empty")
        if any(b <= a for a, b in zip(self.thresholds_db, self.thresholds_db[1:])):
            raise ConfigError("sweep: threshold grid must be strictly increasing")
        if self.regime not in REGIMES:
            raise ConfigError("sweep: regime must be one of %r" % (REGIMES,))
        if self.phase_source not in PHASE_SOURCES:
            raise ConfigError("sweep: phase_source must be one of %r" % (PHASE_SOURCES,))
        if self.mc_trials < 0:
            raise ConfigError("sweep: mc_trials must be >= 0")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError("sweep: normalization must be one of %r" % (NORMALIZATIONS,))


@dataclass(frozen=True)
class ResultRow:
    """One sweep point in the exported table."""

    t_db: float
    b_value: float
    pc_closed_form: float
    pc_mc: float | None
    ci_low: float | None
    ci_high: float | None
    m_count: int
    n_count: int
    regime: str
    correlated: bool
    seed: int


def convert_rate_to_threshold(rate: float) -> float:
    """SNR threshold equivalent to a target rate in bit/s/Hz."""
    if rate <= 0.0:
        raise ConfigError("rate must be > 0")
    return 2.0**rate - 1.0


def worker_count() -> int:
    """Worker cap from IRSCOV_THREADS, defaulting to up to 4 local cores."""
    raw = os.environ.get("IRSCOV_THREADS", "")
    if raw:
        try:
            parsed = int(raw)
        except ValueError as exc:
            raise ConfigError("IRSCOV_THREADS: expected an integer, got %r" % raw) from exc
        if parsed < 1:
            raise ConfigError("IRSCOV_THREADS: must be >= 1")
        return parsed
    return max(1, min(4, os.cpu_count() or 1))


def point_seed(seed: int, index: int) -> int:
    """Substream seed for sweep point index, recorded in its row."""
    return (seed + _SEED_STRIDE * index) % 2**64


def resolve_phases(scenario: Scenario, spec: SweepSpec, correlations) -> PhaseConfig:
    """Phase configuration shared by all points of a sweep."""
    m, n = scenario.m_count, scenario.n_elements
    if spec.phase_source == "initial":
        return PhaseConfig.initial(m, n)
    if spec.phase_source == "random":
        return PhaseConfig.random(m, n, spec.phase_seed)
    if spec.phase_source == "file":
        if not spec.phase_file:
            raise ConfigError("sweep: phase_source 'file' needs a phase file path")
        angles = np.loadtxt(spec.phase_file, delimiter=",", ndmin=2)
        if angles.shape != (m, n):
            raise ConfigError(
                "phase file shape %r does not match scenario (%d, %d)"
                % (angles.shape, m, n)
            )
        return PhaseConfig.from_angles(angles)
    # optimized: the maximizer of the aggregate also maximizes coverage at
    # every threshold, so one run serves the whole sweep
    result = optimize(
        scenario,
        correlations,
        threshold=1.0,
        regime=spec.regime,
        config=OptimizerConfig(objective="aggregate"),
    )
    return result.phases


def run_sweep(
    scenario: Scenario, spec: SweepSpec, threads: int | None = None
) -> list[ResultRow]:
    """Closed-form (and optionally MC) coverage at every threshold point.

    Points run in a worker pool; rows come back in threshold order
    regardless of completion order, and every point derives its own MC
    substream seed, so the output is identical for any worker count.
    """
    correlations = scenario_correlations(
        scenario, uncorrelated=spec.uncorrelated, normalization=spec.normalization
    )
    phases = resolve_phases(scenario, spec, correlations)
    agg = aggregate_power(scenario, correlations, phases, spec.regime)
    gamma0 = transmit_snr(scenario.radio)
    _, beta_d = cascaded_gains(scenario)

    def one_point(index: int) -> ResultRow:
        t_db = spec.thresholds_db[index]
        threshold = 10.0 ** (t_db / 10.0)
        pc = coverage_probability(agg, threshold, gamma0, beta_d)
        row_seed = point_seed(spec.seed, index)
        pc_mc = ci_low = ci_high = None
        if spec.mc_trials > 0:
            est = estimate_coverage(
                scenario,
                phases,
                threshold,
                spec.mc_trials,
                row_seed,
                correlations=correlations,
            )
            pc_mc, ci_low, ci_high = est.coverage, est.ci_low, est.ci_high
        return ResultRow(
            t_db=float(t_db),
            b_value=float(agg),
            pc_closed_form=float(pc),
            pc_mc=None if pc_mc is None else float(pc_mc),
            ci_low=None if ci_low is None else float(ci_low),
            ci_high=None if ci_high is None else float(ci_high),
            m_count=scenario.m_count,
            n_count=scenario.n_elements,
            regime=spec.regime,
            correlated=not spec.uncorrelated,
            seed=row_seed,
        )

    indices = range(len(spec.thresholds_db))
    pool_size = threads if threads is not None else worker_count()
    if spec.mc_trials > 0 and pool_size > 1:
        with ThreadPoolExecutor(max_workers=pool_size) as pool:
            rows = list(pool.map(one_point, indices))
    else:
        rows = [one_point(i) for i in indices]
    return rows


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_rows(path: str, rows: list[ResultRow], metadata: dict):
    """RFC-4180 table with a deterministic metadata comment header."""
    meta = {
        "tool": "irscov-" + __version__,
        "build": BUILD_ID,
        "schema_version": 1,
        "sinc_convention": "normalized sin(pi x)/(pi x)",
        "rng": "philox 2x64 key=(seed, trial)",
    }
    meta.update(metadata)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write("# %s=%s\r\n" % (key, value))
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    _fmt(row.t_db),
                    _fmt(row.b_value),
                    _fmt(row.pc_closed_form),
                    _fmt(row.pc_mc),
                    _fmt(row.ci_low),
                    _fmt(row.ci_high),
                    _fmt(row.m_count),
                    _fmt(row.n_count),
                    row.regime,
                    _fmt(row.correlated),
                    _fmt(row.seed),
                ]
            )


def config_digest(scenario: Scenario) -> str:
    blob = json.dumps(scenario_to_dict(scenario), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _scenario_metadata(scenario: Scenario, command: str) -> dict:
    return {
        "command": command,
        "path_loss_convention": scenario.path_loss.sign_convention,
        "config_sha256": config_digest(scenario),
    }


def _load_or_default(path: str | None) -> Scenario:
    if path:
        return load_scenario(path)
    return desk_scenario()


def _threshold_grid(args) -> tuple[float, ...]:
    if args.t_list:
        try:
            values = tuple(float(v) for v in args.t_list.split(","))
        except ValueError as exc:
            raise ConfigError("--t-list: expected comma-separated numbers") from exc
    else:
        if args.t_points < 1:
            raise ConfigError("--t-points must be >= 1")
        values = tuple(float(v) for v in np.linspace(args.t_start, args.t_stop, args.t_points))
    if args.rate:
        linear = [convert_rate_to_threshold(r) for r in values]
        values = tuple(10.0 * math.log10(t) for t in linear)
    return values


def _add_sweep_args(parser, with_grid=True):
    parser.add_argument("--config", help="scenario JSON (default: bundled desk setup)")
    parser.add_argument("--trials", type=int, default=0, help="MC trials per point")
    parser.add_argument("--seed", type=int, default=0, help="base RNG seed")
    parser.add_argument(
        "--regime", choices=REGIMES, default="m-finite", help="aggregate evaluation form"
    )
    parser.add_argument(
        "--uncorrelated", action="store_true", help="replace correlation with a scaled identity"
    )
    parser.add_argument(
        "--normalization",
        choices=NORMALIZATIONS,
        default="element-area",
        help="correlation diagonal convention",
    )
    parser.add_argument(
        "--phases",
        choices=PHASE_SOURCES,
        default="initial",
        dest="phase_source",
        help="phase configuration for the sweep",
    )
    parser.add_argument("--phase-seed", type=int, default=0)
    parser.add_argument("--phase-file", help="CSV of phase angles, one row per surface")
    if with_grid:
        parser.add_argument("--t-start", type=float, default=-60.0)
        parser.add_argument("--t-stop", type=float, default=15.0)
        parser.add_argument("--t-points", type=int, default=76)
        parser.add_argument("--t-list", help="explicit comma-separated threshold grid")
        parser.add_argument(
            "--rate",
            action="store_true",
            help="grid values are target rates in bit/s/Hz instead of dB thresholds",
        )


def cmd_sweep(args) -> int:
    scenario = _load_or_default(args.config)
    spec = SweepSpec(
        thresholds_db=_threshold_grid(args),
        regime=args.regime,
        phase_source=args.phase_source,
        mc_trials=args.trials,
        seed=args.seed,
        uncorrelated=args.uncorrelated,
        normalization=args.normalization,
        phase_seed=args.phase_seed,
        phase_file=args.phase_file,
    )
    rows = run_sweep(scenario, spec)
    meta = _scenario_metadata(scenario, "sweep")
    meta["normalization"] = spec.normalization
    write_rows(args.out, rows, meta)
    print("sweep: %d points -> %s" % (len(rows), args.out))
    return 0


def cmd_mc_validate(args) -> int:
    scenario = _load_or_default(args.config)
    correlations = scenario_correlations(
        scenario, uncorrelated=args.uncorrelated, normalization=args.normalization
    )
    spec_for_phases = SweepSpec(
        thresholds_db=(0.0,),
        regime=args.regime,
        phase_source=args.phase_source,
        phase_seed=args.phase_seed,
        phase_file=args.phase_file,
        normalization=args.normalization,
        uncorrelated=args.uncorrelated,
    )
    phases = resolve_phases(scenario, spec_for_phases, correlations)
    agg = aggregate_power(scenario, correlations, phases, args.regime)
    gamma0 = transmit_snr(scenario.radio)
    _, beta_d = cascaded_gains(scenario)
    grid = transition_thresholds(gamma0, agg, beta_d, points=args.points)
    thresholds_db = tuple(10.0 * math.log10(t) for t in grid)
    spec = SweepSpec(
        thresholds_db=thresholds_db,
        regime=args.regime,
        phase_source=args.phase_source,
        mc_trials=args.trials,
        seed=args.seed,
        uncorrelated=args.uncorrelated,
        normalization=args.normalization,
        phase_seed=args.phase_seed,
        phase_file=args.phase_file,
    )
    rows = run_sweep(scenario, spec)
    gap = max(abs(r.pc_closed_form - r.pc_mc) for r in rows)
    meta = _scenario_metadata(scenario, "mc-validate")
    meta["normalization"] = args.normalization
    write_rows(args.out, rows, meta)
    print("mc-validate: max |closed-form - mc| = %.6f over %d points" % (gap, len(rows)))
    print("mc-validate: wrote %s" % args.out)
    return 0


def cmd_optimize(args) -> int:
    scenario = _load_or_default(args.config)
    correlations = scenario_correlations(
        scenario, uncorrelated=args.uncorrelated, normalization=args.normalization
    )
    if args.rate:
        threshold = convert_rate_to_threshold(args.t)
    else:
        threshold = 10.0 ** (args.t / 10.0)
    config = OptimizerConfig(mode=args.mode, objective=args.objective)
    result = optimize(scenario, correlations, threshold, regime=args.regime, config=config)
    print(
        "optimize: status=%s iterations=%d coverage=%.9f aggregate=%s"
        % (result.status, result.iterations, result.coverage, repr(result.aggregate))
    )
    if args.trace_out:
        with open(args.trace_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "objective", "coverage", "aggregate", "step_max", "grad_norm"]
            )
            for rec in result.trace:
                writer.writerow(
                    [
                        rec.iteration,
                        repr(rec.objective_value),
                        repr(rec.coverage),
                        repr(rec.aggregate),
                        repr(rec.step_max),
                        repr(rec.grad_norm),
                    ]
                )
        print("optimize: trace -> %s" % args.trace_out)
    if args.phases_out:
        angles = np.angle(result.phases.coefficients)
        np.savetxt(args.phases_out, angles, delimiter=",")
        print("optimize: phases -> %s" % args.phases_out)
    return 0


def _reproduce_curves(figure: str):
    # closed-form curve families over surface count, panel size, correlation
    if figure == "fig1":
        regime = "m-finite"
        combos = [
            (m, side, correlated)
            for m in (15, 34)
            for side in (10, 15)
            for correlated in (True, False)
        ]
    else:
        regime = "m-large"
        combos = [(m, side, True) for m in (15, 34) for side in (10, 15)]
    return regime, combos


def cmd_reproduce(args) -> int:
    regime, combos = _reproduce_curves(args.figure)
    os.makedirs(args.out_dir, exist_ok=True)
    grid = tuple(float(v) for v in np.linspace(args.t_start, args.t_stop, args.t_points))
    index_rows = []
    for m, side, correlated in combos:
        scenario = reference_scenario(m_count=m, panel_side=side)
        spec = SweepSpec(
            thresholds_db=grid,
            regime=regime,
            phase_source="initial" if not correlated else "optimized",
            mc_trials=args.trials,
            seed=args.seed,
            uncorrelated=not correlated,
            normalization=args.normalization,
        )
        rows = run_sweep(scenario, spec)
        name = "%s_M%d_N%d_%s.csv" % (
            args.figure,
            m,
            side * side,
            "correlated" if correlated else "uncorrelated",
        )
        path = os.path.join(args.out_dir, name)
        meta = _scenario_metadata(scenario, "reproduce " + args.figure)
        meta["normalization"] = args.normalization
        write_rows(path, rows, meta)
        knee_db = 10.0 * math.log10(
            knee_threshold(rows[0].b_value, transmit_snr(scenario.radio))
        )
        index_rows.append((name, m, side * side, correlated, knee_db))
    index_path = os.path.join(args.out_dir, "%s_index.csv" % args.figure)
    with open(index_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "m_count", "n_count", "correlated", "knee_db"])
        for name, m, n, correlated, knee_db in index_rows:
            writer.writerow([name, m, n, _fmt(correlated), repr(knee_db)])
    print("reproduce %s: %d curves -> %s" % (args.figure, len(index_rows), args.out_dir))
    return 0


def cmd_gradcheck(args) -> int:
    scenario = _load_or_default(args.config)
    correlations = scenario_correlations(
        scenario, uncorrelated=args.uncorrelated, normalization=args.normalization
    )
    phases = (
        PhaseConfig.random(scenario.m_count, scenario.n_elements, args.seed)
        if args.phase_source == "random"
        else PhaseConfig.initial(scenario.m_count, scenario.n_elements)
    )
    gamma0 = transmit_snr(scenario.radio)
    _, beta_d = cascaded_gains(scenario)
    agg = aggregate_power(scenario, correlations, phases, "m-finite")
    # put the threshold inside the fading-limited branch so the slope is live
    threshold = gamma0 * (agg + beta_d)
    worst = 0.0
    for regime in REGIMES:
        analytic = coverage_gradient(scenario, correlations, phases, threshold, regime)
        fd = _finite_difference(
            scenario, correlations, phases, threshold, regime, args.step
        )
        mapped = 2.0 * np.imag(np.conj(phases.coefficients) * analytic)
        denom = max(np.linalg.norm(mapped), 1e-300)
        err = np.linalg.norm(mapped - fd) / denom
        print("gradcheck %s: relative error %.3e" % (regime, err))
        worst = max(worst, err)
    if worst > args.tol:
        print("gradcheck: FAILED tolerance %.1e" % args.tol)
        return 3
    print("gradcheck: OK (tolerance %.1e)" % args.tol)
    return 0


def _finite_difference(scenario, correlations, phases, threshold, regime, step):
    gamma0 = transmit_snr(scenario.radio)
    _, beta_d = cascaded_gains(scenario)
    angles = np.angle(phases.coefficients)

    def value(a):
        cfg = PhaseConfig.from_angles(a)
        agg = aggregate_power(scenario, correlations, cfg, regime)
        return coverage_probability(agg, threshold, gamma0, beta_d)

    out = np.zeros_like(angles)
    for m in range(angles.shape[0]):
        for n in range(angles.shape[1]):
            up = angles.copy()
            up[m, n] += step
            down = angles.copy()
            down[m, n] -= step
            out[m, n] = (value(up) - value(down)) / (2.0 * step)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irscov",
        description="Coverage probability of a surface-assisted link: closed forms, "
        "Monte Carlo validation, and phase optimization.",
    )
    parser.add_argument("--version", action="version", version="irscov " + __version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="coverage versus threshold table")
    _add_sweep_args(p)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mc-validate", help="closed form versus Monte Carlo")
    _add_sweep_args(p, with_grid=False)
    p.add_argument("--points", type=int, default=15, help="transition grid size")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_mc_validate, trials=200000)

    p = sub.add_parser("optimize", help="phase optimization at one threshold")
    p.add_argument("--config", help="scenario JSON (default: bundled desk setup)")
    p.add_argument("--t", type=float, default=0.0, help="threshold [dB] (or rate with --rate)")
    p.add_argument("--rate", action="store_true")
    p.add_argument("--regime", choices=REGIMES, default="m-finite")
    p.add_argument("--mode", choices=("sweep", "simultaneous"), default="sweep")
    p.add_argument("--objective", choices=("coverage", "aggregate"), default="coverage")
    p.add_argument("--uncorrelated", action="store_true")
    p.add_argument("--normalization", choices=NORMALIZATIONS, default="element-area")
    p.add_argument("--trace-out", help="per-iteration trace CSV")
    p.add_argument("--phases-out", help="final phase angles CSV")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("reproduce", help="bundled reference curve families")
    p.add_argument("figure", choices=("fig1", "fig2"))
    p.add_argument("--out-dir", default=".", help="directory for the CSV bundle")
    p.add_argument("--trials", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--normalization", choices=NORMALIZATIONS, default="element-area")
    p.add_argument("--t-start", type=float, default=-60.0)
    p.add_argument("--t-stop", type=float, default=15.0)
    p.add_argument("--t-points", type=int, default=151)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("gradcheck", help="analytic gradient versus finite differences")
    p.add_argument("--config", help="scenario JSON (default: bundled desk setup)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-6, help="central difference step [rad]")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument(
        "--phases",
        choices=("initial", "random"),
        default="random",
        dest="phase_source",
    )
    p.add_argument("--uncorrelated", action="store_true")
    p.add_argument("--normalization", choices=NORMALIZATIONS, default="unit")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
