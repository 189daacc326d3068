"""Command line experiment runner.

Subcommands::

    steinis run    --config PATH [--seed N] [--set k=v ...] [--out DIR] [--workers N]
    steinis sweep  --config PATH --axis AXIS --values V1,V2,... [same flags]
    steinis oracle --config PATH [--set k=v ...]

``run`` writes ``<name>.json`` (summary) and ``<name>.csv`` (per-iteration
trace) and prints a one-line summary.  ``sweep`` writes ``<name>_agg.csv``
with one row per axis value.  ``oracle`` prints exact target quantities as
JSON.  ``<name>`` defaults to the config file stem.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical abort
(singular transport map), 4 oracle unavailable for the target.  The default
worker count comes from ``STEINIS_WORKERS`` when ``--workers`` is absent.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from .config import ConfigError, load_config
from .results import FORMAT_VERSION
from .runner import NoOracleError, execute_trials, oracle_summary, run_sweep
from .transport import SingularMapError

WORKERS_ENV = "STEINIS_WORKERS"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NO_ORACLE = 4

AGG_COLUMNS = ("axis", "value", "trials", "mean", "std_err", "mse", "oracle")


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to a key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )


def _add_output(parser):
    parser.add_argument("--out", default=None, help="output directory (default: config's or cwd)")
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help=f"trial worker processes (default: ${WORKERS_ENV} or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steinis", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the configured method")
    _add_common(p_run)
    _add_output(p_run)

    p_sweep = sub.add_parser("sweep", help="repeat the run along one axis")
    _add_common(p_sweep)
    _add_output(p_sweep)
    p_sweep.add_argument(
        "--axis", required=True, choices=("n_followers", "transitions", "dimension")
    )
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")

    p_oracle = sub.add_parser("oracle", help="print exact target quantities")
    _add_common(p_oracle)
    return parser


def _load(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def _workers(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV, "")
    return max(1, int(env)) if env.strip() else 1


def _out_paths(args, config):
    name = config.name or Path(args.config).stem
    out_dir = Path(args.out or config.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    return name, out_dir


def _summary_value(result) -> str:
    if result.log_z is not None:
        return f"log_z={result.log_z:.6f}"
    if result.expectations:
        name, value = next(iter(result.expectations.items()))
        return f"{name}={value:.6f}"
    return "estimate=n/a"


def cmd_run(args) -> int:
    config = _load(args)
    name, out_dir = _out_paths(args, config)
    started = time.perf_counter()
    results = execute_trials(config, workers=_workers(args))
    wall = time.perf_counter() - started
    first = results[0]

    payload = first.to_json_dict()
    payload["name"] = name
    payload["config"] = {k: v for k, v in vars(config).items()}
    if config.trials > 1:
        payload["trial_results"] = [
            {
                "seed": r.seed,
                "log_z": r.log_z,
                "ess": r.ess,
                "expectations": dict(r.expectations),
            }
            for r in results
        ]
    with open(out_dir / f"{name}.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    first.write_csv(out_dir / f"{name}.csv")

    ess_text = f"{first.ess:.1f}" if first.ess is not None else "n/a"
    print(
        f"method={first.method} {_summary_value(first)} ess={ess_text} wall={wall:.2f}s"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    values = [v for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs a nonempty values list")
    try:
        values = [int(v) for v in values]
    except ValueError as exc:
        raise ConfigError(f"axis values must be integers: {args.values!r}") from exc
    name, out_dir = _out_paths(args, config)
    started = time.perf_counter()
    rows = run_sweep(config, args.axis, values, workers=_workers(args))
    wall = time.perf_counter() - started
    path = out_dir / f"{name}_agg.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGG_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row["axis"],
                    row["value"],
                    row["trials"],
                ]
                + ["" if row[k] is None else repr(float(row[k])) for k in ("mean", "std_err", "mse", "oracle")]
            )
    print(f"sweep axis={args.axis} values={len(rows)} out={path} wall={wall:.2f}s")
    return EXIT_OK


def cmd_oracle(args) -> int:
    config = _load(args)
    summary = oracle_summary(config)
    summary["format_version"] = FORMAT_VERSION
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_oracle(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        if isinstance(exc, NoOracleError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NO_ORACLE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SingularMapError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
