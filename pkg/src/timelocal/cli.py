"""Command line runner.

    simulate run --scenario fig1 [--seed S] [--dt D] [--out PATH] [--format csv|json]
    simulate run --config cfg.json [--seed S] [--dt D] [--out PATH] [--format csv|json]
    simulate list
    simulate validate --config cfg.json

Every run writes one data file and one metadata file (<out>.meta.json).
Exit codes: 0 success, 2 configuration error, 3 numerical error (blow-up,
step guard, positivity), 4 I/O error.  SIM_THREADS caps worker threads in
the trajectory engines.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

from . import __version__
from .config import config_hash, execute, load_config
from .errors import (
    ConfigError,
    DomainError,
    ImpossibleJumpError,
    NegativeRateError,
    NumericalBlowupError,
    PositivityError,
    StepSizeError,
    UndefinedSourceError,
)
from .scenarios import SCENARIOS, list_scenarios, run_scenario

GUARD_WARN_THRESHOLD = 0.05


def _format_value(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def write_data(path: str, fmt: str, columns, rows) -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_format_value(x) for x in row) + "\n")
    else:
        with open(path, "w") as fh:
            json.dump(
                {
                    "columns": list(columns),
                    "rows": [[_format_value(x) if isinstance(x, float) else x for x in row] for row in rows],
                },
                fh,
                sort_keys=True,
            )
            fh.write("\n")


def write_metadata(path: str, meta: dict) -> None:
    with open(path, "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _run(args) -> int:
    t_start = time.perf_counter()
    if bool(args.scenario) == bool(args.config):
        raise ConfigError("exactly one of --scenario or --config is required")
    if args.dt is not None and args.dt <= 0:
        raise ConfigError(f"dt must be positive, got dt={args.dt}")
    if args.scenario:
        result = run_scenario(args.scenario, seed=args.seed, dt=args.dt)
        columns, rows, meta = result.columns, result.rows, dict(result.meta)
        name = args.scenario
        hash_source = {
            "scenario": name,
            "seed": meta.get("seed"),
            "dt": meta.get("dt"),
            "n": meta.get("n"),
        }
        guard = {"max_step_probability": meta.pop("max_step_probability", 0.0)}
        out_path = args.out or f"{name}.{args.format or 'csv'}"
    else:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.raw = {**cfg.raw, "seed": args.seed}
        if args.dt is not None:
            cfg.dt = args.dt
            cfg.raw = {**cfg.raw, "dt": args.dt}
        if args.format:
            cfg.out_format = args.format
        columns, rows, guard = execute(cfg)
        name = cfg.name
        meta = {"seed": cfg.seed, "dt": cfg.dt, "n": cfg.n_ensemble, "engine": cfg.engine}
        hash_source = {k: v for k, v in cfg.raw.items() if k != "output"}
        out_path = args.out or cfg.out_path or f"{name}.{cfg.out_format}"
    fmt = args.format or ("csv" if out_path.endswith(".csv") else None) or "csv"

    max_p = guard.get("max_step_probability", 0.0)
    if max_p > GUARD_WARN_THRESHOLD:
        print(
            f"warning: max per-step jump probability {max_p:.3g} exceeds "
            f"{GUARD_WARN_THRESHOLD}; consider a smaller dt",
            file=sys.stderr,
        )

    write_data(out_path, fmt, columns, rows)
    write_metadata(
        out_path + ".meta.json",
        {
            "schema": 1,
            "toolkit_version": __version__,
            "name": name,
            "config_hash": config_hash(hash_source),
            "seed": meta.get("seed"),
            "dt": meta.get("dt"),
            "n": meta.get("n"),
            "engine": meta.get("engine"),
            "duration_s": time.perf_counter() - t_start,
            "guard": guard,
        },
    )
    print(f"wrote {out_path} and {out_path}.meta.json")
    return 0


def _list(_args) -> int:
    for name, description in list_scenarios():
        print(f"{name:14s} {description}")
    return 0


def _validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {args.config} (engine {cfg.engine}, t_end={cfg.t_end}, dt={cfg.dt})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate",
        description="Run master-equation scenarios and emit figure-ready tables.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a built-in scenario or a config file")
    run_p.add_argument("--scenario", choices=sorted(SCENARIOS), help="built-in scenario name")
    run_p.add_argument("--config", help="path to a JSON configuration")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--dt", type=float, default=None)
    run_p.add_argument("--out", help="output data file path")
    run_p.add_argument("--format", choices=("csv", "json"), default=None)
    run_p.set_defaults(func=_run)

    list_p = sub.add_parser("list", help="list built-in scenarios")
    list_p.set_defaults(func=_list)

    val_p = sub.add_parser("validate", help="validate a configuration file")
    val_p.add_argument("--config", required=True)
    val_p.set_defaults(func=_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (
        StepSizeError,
        NumericalBlowupError,
        PositivityError,
        NegativeRateError,
        DomainError,
        ImpossibleJumpError,
        UndefinedSourceError,
    ) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
