"""Command-line front end: batch ensemble runs and frequency sweeps.

Artifacts are plain CSV for bulky time series and JSON for structured
summaries; every output byte is determined by (config, master seed),
independent of the worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, load_config
from .ensemble import (
    CONTINUOUS_STREAM,
    HITTING_STREAM,
    run_continuous_ensemble,
    run_hitting_ensemble,
    run_multistream_hitting_ensemble,
)
from .equivalence import (
    collapse_statistics,
    convergence_sweep,
    engine_comparison,
    ensemble_stats,
)
from .errors import ConfigError, QReduceError
from .scenarios import BuiltScenario, build_scenario
from .trajectory import TrajectoryRecord


def _fmt(value) -> str:
    return repr(float(value))


def _write_trajectories_csv(path: Path, engine_records: dict[str, list[TrajectoryRecord]]):
    first = next(iter(engine_records.values()))[0]
    d = first.dim
    k = first.expectations.shape[1]
    header = (
        ["engine", "trajectory", "time", "event_flag"]
        + [f"w_{i}" for i in range(d)]
        + [f"exp_{p}" for p in range(k)]
    )
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for engine in sorted(engine_records):
            for idx, rec in enumerate(engine_records[engine]):
                previous = -np.inf
                for s, t in enumerate(rec.sample_times):
                    flag = rec.events_between(previous, t)
                    previous = t
                    row = [engine, str(idx), _fmt(t), str(flag)]
                    row += [_fmt(x) for x in rec.born_weights[s]]
                    row += [_fmt(x) for x in rec.expectations[s]]
                    fh.write(",".join(row) + "\n")


def _write_events_csv(path: Path, engine_records: dict[str, list[TrajectoryRecord]]):
    first = next(iter(engine_records.values()))[0]
    k = first.expectations.shape[1]
    header = ["engine", "trajectory", "time"] + [f"a_{p}" for p in range(k)]
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for engine in sorted(engine_records):
            for idx, rec in enumerate(engine_records[engine]):
                for t, centre in zip(rec.events.times, rec.events.centres):
                    row = [engine, str(idx), _fmt(t)] + [_fmt(a) for a in centre]
                    fh.write(",".join(row) + "\n")


def _collapse_json(report) -> dict:
    return {
        "outcomes": [
            {
                "eigenvalues": list(o.eigenvalues),
                "count": o.count,
                "frequency": o.frequency,
                "ci_low": o.ci_low,
                "ci_high": o.ci_high,
            }
            for o in report.outcomes
        ],
        "n_trajectories": report.n_trajectories,
        "n_resolved": report.n_resolved,
        "unresolved_count": report.unresolved_count,
        "unresolved_fraction": report.unresolved_fraction,
        "threshold": report.threshold,
        "threshold_sensitivity": {
            str(th): frac for th, frac in sorted(report.threshold_sensitivity.items())
        },
    }


def _martingale_json(records) -> dict:
    stats = ensemble_stats(records)
    base = stats.mean_weights[0]
    drift = np.abs(stats.mean_weights - base[np.newaxis, :])
    se = np.maximum(stats.mean_weight_se, 1e-300)
    z = float(np.max(drift[1:] / se[1:])) if stats.times.size > 1 else 0.0
    return {"times": stats.times.tolist(), "max_abs_zscore": z}


def _first_hit_moments(built: BuiltScenario, records) -> dict | None:
    if built.streams is not None or built.beta is None:
        return None
    firsts = np.array(
        [rec.events.centres[0] for rec in records if len(rec.events) > 0]
    )
    if firsts.size == 0:
        return None
    psi0, quantities = built.psi0, built.quantities
    expected_mean = quantities.expectations(psi0)
    expected_var = np.array(
        [
            1.0 / (2.0 * built.beta) + quantities.covariance(psi0, p, p)
            for p in range(quantities.num_quantities)
        ]
    )
    return {
        "n_events": int(firsts.shape[0]),
        "empirical_mean": firsts.mean(axis=0).tolist(),
        "expected_mean": expected_mean.tolist(),
        "empirical_variance": firsts.var(axis=0, ddof=1).tolist(),
        "expected_variance": expected_var.tolist(),
    }


def _engine_summary(built: BuiltScenario, engine: str, records) -> dict:
    summary = {
        "collapse": _collapse_json(collapse_statistics(records, built.quantities)),
        "martingale": _martingale_json(records),
    }
    if engine == "hitting":
        counts = [len(rec.events) for rec in records]
        summary["events_total"] = int(sum(counts))
        summary["mean_events_per_trajectory"] = float(np.mean(counts))
        summary["first_hitting_moments"] = _first_hit_moments(built, records)
    return summary


def _scalar(value):
    if value is None:
        return None
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    return float(arr[0]) if arr.size == 1 else arr.tolist()


def _run_engines(built: BuiltScenario, workers: int, need_states: bool):
    config = built.config
    engine_records: dict[str, list[TrajectoryRecord]] = {}
    store = config.store_states or need_states
    if config.engine in ("hitting", "both"):
        if built.streams is not None:
            engine_records["hitting"] = run_multistream_hitting_ensemble(
                built.psi0,
                built.hamiltonian,
                built.quantities,
                built.streams,
                config.t_end,
                config.record_interval,
                config.n_trajectories,
                config.seed,
                workers=workers,
                store_states=store,
                stream_tag=HITTING_STREAM,
            )
        else:
            engine_records["hitting"] = run_hitting_ensemble(
                built.psi0,
                built.hamiltonian,
                built.quantities,
                built.hitting_config(),
                config.n_trajectories,
                config.seed,
                workers=workers,
                store_states=store,
            )
    if config.engine in ("continuous", "both"):
        engine_records["continuous"] = run_continuous_ensemble(
            built.psi0,
            built.hamiltonian,
            built.quantities,
            built.continuous_config(),
            config.n_trajectories,
            config.seed,
            workers=workers,
            store_states=store,
            stream_tag=CONTINUOUS_STREAM,
        )
    return engine_records


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out_dir = Path(args.out or config.output_dir or "qreduce-out")
    out_dir.mkdir(parents=True, exist_ok=True)

    built = build_scenario(config)
    need_states = config.engine == "both"
    engine_records = _run_engines(built, args.workers, need_states)

    _write_trajectories_csv(out_dir / "trajectories.csv", engine_records)
    _write_events_csv(out_dir / "events.csv", engine_records)

    summary = {
        "scenario": config.scenario,
        "engine": config.engine,
        "seed": config.seed,
        "n_trajectories": config.n_trajectories,
        "parameters": {
            "beta": _scalar(built.beta),
            "mu": _scalar(built.mu),
            "gamma": _scalar(built.gamma),
            "dt": _scalar(config.dt),
            "schedule": config.schedule,
            "t_end": config.t_end,
            "record_interval": config.record_interval,
        },
        "engines": {
            engine: _engine_summary(built, engine, records)
            for engine, records in engine_records.items()
        },
    }
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )

    written = ["trajectories.csv", "events.csv", "summary.json"]
    if config.engine == "both":
        if built.streams is not None:
            raise ConfigError(
                "engine", "engine=both is unsupported for multistream scenarios"
            )
        comparison = engine_comparison(
            engine_records["hitting"],
            engine_records["continuous"],
            built.quantities,
            built.beta,
            built.mu,
            _scalar(built.gamma),
            hamiltonian=built.hamiltonian,
            psi0=built.psi0,
            seed=config.seed,
        )
        compare = {
            "probe_times": comparison.times.tolist(),
            "mc_trace_distance": comparison.mc_distance.tolist(),
            "mc_error": comparison.mc_error.tolist(),
            "oracle_trace_distance": comparison.oracle_distance.tolist(),
            "beta": _scalar(built.beta),
            "mu": _scalar(built.mu),
            "gamma": _scalar(built.gamma),
            "n_trajectories": config.n_trajectories,
        }
        (out_dir / "compare.json").write_text(
            json.dumps(compare, indent=2, sort_keys=True) + "\n"
        )
        written.append("compare.json")
    for name in written:
        print(f"wrote {out_dir / name}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if config.engine != "both":
        raise ConfigError("engine", "sweep requires engine=both")
    if args.param != "mu":
        raise ConfigError("param", f"sweep supports param=mu, got {args.param!r}")
    values = [float(v) for v in args.values]
    if any(v <= 0 for v in values):
        raise ConfigError("values", "sweep values must be > 0")
    ordered = sorted(values)
    if ordered != values:
        print(f"values sorted ascending before execution: {ordered}")

    built = build_scenario(config)
    if built.hamiltonian is not None or built.streams is not None:
        raise ConfigError(
            "scenario", "sweep supports single-stream scenarios without a Hamiltonian"
        )
    gamma = _scalar(built.gamma)
    if gamma is None:
        raise ConfigError("gamma", "gamma is required for a sweep")
    rows = convergence_sweep(
        built.psi0,
        built.quantities,
        gamma,
        ordered,
        config.n_trajectories,
        config.t_end,
        config.seed,
        dt=config.dt,
    )
    out_dir = Path(args.out or config.output_dir or "qreduce-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.csv"
    with path.open("w", newline="") as fh:
        fh.write("mu,beta,channel_distance,mc_distance,mc_error\n")
        for row in rows:
            fh.write(
                ",".join(
                    _fmt(x)
                    for x in (
                        row.mu,
                        row.beta,
                        row.channel_distance,
                        row.mc_distance,
                        row.mc_error,
                    )
                )
                + "\n"
            )
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qreduce",
        description="Stochastic state-vector reduction: hitting and diffusive engines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the configured ensemble(s)")
    run.add_argument("config", help="config file path or preset name")
    run.add_argument("--seed", type=int, default=None, help="override the master seed")
    run.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    run.add_argument("--out", default=None, help="output directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="hitting-frequency convergence sweep")
    sweep.add_argument("config", help="config file path or preset name")
    sweep.add_argument("--param", required=True, help="swept parameter (mu)")
    sweep.add_argument("--values", nargs="+", required=True, help="swept values")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("--out", default=None)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return 1
    except QReduceError as exc:
        seed = getattr(exc, "seed", None)
        hint = f" (trajectory seed {seed})" if seed is not None else ""
        print(f"runtime error: {exc}{hint}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
