"""Command-line interface: generate, eval, stats, splits.

Exit codes: 0 success, 1 partial failure (some sequences failed or metrics
could not be produced), 2 invalid configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataio import SplitPlan
from .evalflow import BucketSpec, report
from .pipeline import (
    ConfigError,
    PipelineConfig,
    dataset_files,
    run_eval,
    run_generate,
    run_splits,
    run_stats,
    stats_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="synf",
        description="Synthetic LiDAR scene-flow data engine",
    )
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a dataset from a config file")
    g.add_argument("--config", required=True, help="pipeline config JSON")
    g.add_argument("--seed", type=int, default=None, help="override master seed")
    g.add_argument("--workers", type=int, default=None, help="override worker count")
    g.add_argument("--out", default=None, help="override output directory")

    e = sub.add_parser("eval", help="evaluate a predictor on a dataset")
    e.add_argument("--data", required=True, help="directory of .synf sequences")
    e.add_argument(
        "--pred",
        required=True,
        help="'ego', 'nn', or a directory of SYNP prediction files",
    )
    e.add_argument(
        "--buckets",
        default=None,
        help="bucket spec as 'width,max,min' in m/s (default 0.4,20,0.5)",
    )
    e.add_argument("--report", default=None, help="write the CSV report here")

    s = sub.add_parser("stats", help="dataset statistics")
    s.add_argument("--data", required=True)
    s.add_argument("--csv", default=None, help="write CSV statistics here")

    sp = sub.add_parser("splits", help="assign sequences to named splits")
    sp.add_argument("--data", required=True)
    sp.add_argument("--plan", required=True, help="split plan JSON")
    sp.add_argument("--out", default=None, help="write the assignment JSON here")
    return p


def _parse_buckets(arg: str | None) -> BucketSpec:
    if arg is None:
        return BucketSpec()
    try:
        width, max_speed, min_speed = (float(x) for x in arg.split(","))
        return BucketSpec(
            bucket_width=width, max_speed=max_speed, min_dynamic_speed=min_speed
        )
    except ValueError as exc:
        raise ConfigError(f"bad --buckets value {arg!r}: {exc}") from exc


def _cmd_generate(args) -> int:
    cfg = PipelineConfig.from_json_file(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out_dir"] = Path(args.out)
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    manifest = run_generate(cfg)
    n_ok = len(manifest["sequences"])
    n_bad = len(manifest["failures"])
    print(f"wrote {n_ok} sequences to {cfg.out_dir}" + (f", {n_bad} failed" if n_bad else ""))
    return 1 if n_bad else 0


def _cmd_eval(args) -> int:
    files = dataset_files(args.data)
    if not files:
        raise ConfigError(f"no .synf sequences under {args.data}")
    spec = _parse_buckets(args.buckets)
    results = run_eval(files, predictor=args.pred, spec=spec)
    text, csv = report(results)
    print(text)
    if args.report:
        Path(args.report).write_text(csv + "\n")
    return 0


def _cmd_stats(args) -> int:
    files = dataset_files(args.data)
    if not files:
        raise ConfigError(f"no .synf sequences under {args.data}")
    stats = run_stats(files)
    print(json.dumps(stats, indent=1, sort_keys=True))
    if args.csv:
        Path(args.csv).write_text(stats_csv(stats) + "\n")
    return 0


def _cmd_splits(args) -> int:
    files = dataset_files(args.data)
    if not files:
        raise ConfigError(f"no .synf sequences under {args.data}")
    try:
        plan = SplitPlan.from_dict(json.loads(Path(args.plan).read_text()))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad split plan {args.plan}: {exc}") from exc
    assignment = run_splits(files, plan)
    payload = json.dumps(assignment, indent=1, sort_keys=True)
    print(payload)
    if args.out:
        Path(args.out).write_text(payload + "\n")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "eval": _cmd_eval,
        "stats": _cmd_stats,
        "splits": _cmd_splits,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
