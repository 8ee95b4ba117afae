"""Command line entry point: train, meanlab, compare, validate-config.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 environment fault.  The MAPOCA_OUTPUT_ROOT environment variable, when
set, prefixes every relative output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import multiprocessing
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, meanlab
from .config import ConfigError, RunConfig, parse_config
from .envs import EnvironmentFault
from .trainer import MetricsSeries, NumericalAbort, TRAINERS, read_metrics_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ENV_FAULT = 4


def resolve_output_dir(directory: str | Path) -> Path:
    directory = Path(directory)
    root = os.environ.get("MAPOCA_OUTPUT_ROOT")
    if root and not directory.is_absolute():
        return Path(root) / directory
    return directory


def _overrides(pairs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def run_name(cfg: RunConfig) -> str:
    return f"{cfg.algorithm}_{cfg.env}_seed{cfg.seed}"


def _train_single(cfg: RunConfig) -> Path:
    """Train one configuration and write its metrics CSV and metadata."""
    out_dir = resolve_output_dir(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    series = TRAINERS[cfg.algorithm](cfg)
    wall = time.monotonic() - started
    name = run_name(cfg)
    csv_path = out_dir / f"metrics_{name}.csv"
    series.write_csv(csv_path)
    metadata = {
        "command": "train",
        "config": cfg.as_flat_dict(),
        "provenance": cfg.provenance,
        "code_version": __version__,
        "wall_time_s": wall,
        "metrics_csv": csv_path.name,
    }
    with open(out_dir / f"metadata_{name}.json", "w") as handle:
        json.dump(metadata, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return csv_path


def cmd_train(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _overrides(args.set))
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if args.seeds:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    else:
        seeds = [cfg.seed]
    configs = [replace(cfg, seed=seed) for seed in seeds]
    if args.jobs > 1 and len(configs) > 1:
        with multiprocessing.get_context("fork").Pool(args.jobs) as pool:
            paths = pool.map(_train_single, configs)
    else:
        paths = [_train_single(c) for c in configs]
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def cmd_validate_config(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _overrides(args.set))
    for key, value in cfg.as_flat_dict().items():
        origin = cfg.provenance.get(key, "default")
        print(f"{key} = {value}  [{origin}]")
    return EXIT_OK


def _parse_ranges(text: str) -> tuple[tuple[int, int], ...]:
    ranges = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            lo, hi = part.split("-", 1)
            ranges.append((int(lo), int(hi)))
        except ValueError:
            raise ConfigError(f"--ranges expects items like 2-10, got {part!r}")
    if not ranges:
        raise ConfigError("--ranges is empty")
    return tuple(ranges)


def cmd_meanlab(args: argparse.Namespace) -> int:
    ablation = tuple(
        float(x) for x in (args.o_abs_ablation.split(",") if args.o_abs_ablation else [])
    )
    config = meanlab.StudyConfig(
        ranges=_parse_ranges(args.ranges),
        models=tuple(m.strip() for m in args.models.split(",") if m.strip()),
        seeds=args.seeds,
        steps=args.steps,
        o_abs=args.o_abs,
        o_abs_ablation=ablation,
        fixed_count_variant=args.fixed_count,
        allow_ambiguous_abs=args.allow_ambiguous_abs,
        log_interval=args.log_interval,
        jobs=args.jobs,
    )
    for model in config.models:
        if model not in ("fc", "attention"):
            raise ConfigError(f"--models entries must be fc or attention, got {model!r}")
    try:
        results = meanlab.run_study(config)
    except ValueError as error:  # ambiguous o_abs guard
        raise ConfigError(str(error))
    out_dir = resolve_output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for label, by_seed in sorted(results.items()):
        for seed, rows in sorted(by_seed.items()):
            meanlab.write_run_csv(out_dir / f"meanlab_{label}_seed{seed}.csv", rows)
    aggregate_rows = meanlab.aggregate(results)
    meanlab.write_aggregate_csv(out_dir / "meanlab_aggregate.csv", aggregate_rows)
    print(f"wrote {out_dir / 'meanlab_aggregate.csv'}")
    if not args.no_figures:
        from .figures import meanlab_figures

        for path in meanlab_figures(aggregate_rows, out_dir):
            print(f"wrote {path}")
    return EXIT_OK


def _load_runs(directories: list[str]) -> dict[tuple[str, str], list[MetricsSeries]]:
    runs: dict[tuple[str, str], list[MetricsSeries]] = {}
    for directory in directories:
        directory = resolve_output_dir(directory)
        for meta_path in sorted(Path(directory).glob("metadata_*.json")):
            with open(meta_path) as handle:
                metadata = json.load(handle)
            cfg = metadata["config"]
            csv_path = meta_path.parent / metadata["metrics_csv"]
            series = read_metrics_csv(csv_path)
            if len(series) == 0:
                continue
            runs.setdefault((cfg["env"], cfg["algorithm"]), []).append(series)
    return runs


def final_window_mean(series: MetricsSeries, window: float) -> float:
    steps = series.column("step")
    rewards = series.column("mean_episode_reward")
    cutoff = steps[-1] * (1.0 - window)
    tail = rewards[steps > cutoff]
    return float(tail.mean()) if tail.size else float(rewards[-1])


def cmd_compare(args: argparse.Namespace) -> int:
    runs = _load_runs(args.dirs)
    if not runs:
        raise ConfigError(f"no completed runs found under {args.dirs}")
    summary = []
    environments = sorted({env for env, _ in runs})
    for env in environments:
        finals = {
            algorithm: [final_window_mean(s, args.window) for s in series_list]
            for (run_env, algorithm), series_list in runs.items()
            if run_env == env
        }
        means = {a: float(np.mean(v)) for a, v in finals.items()}
        if args.threshold is not None:
            threshold = args.threshold
        else:
            lo, hi = min(means.values()), max(means.values())
            threshold = lo + 0.9 * (hi - lo)
        for algorithm in sorted(finals):
            values = np.array(finals[algorithm])
            n = values.size
            ci = float(1.96 * values.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            reach_steps = []
            for series in runs[(env, algorithm)]:
                steps = series.column("step")
                rewards = series.column("mean_episode_reward")
                hits = np.nonzero(rewards >= threshold)[0]
                if hits.size:
                    reach_steps.append(float(steps[hits[0]]))
            summary.append(
                {
                    "env": env,
                    "algorithm": algorithm,
                    "n_seeds": n,
                    "final_mean": means[algorithm],
                    "ci95": ci,
                    "threshold": threshold,
                    "steps_to_threshold": float(np.mean(reach_steps)) if reach_steps else "",
                    "seeds_reaching": len(reach_steps),
                }
            )
    out_dir = resolve_output_dir(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "compare_summary.csv"
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            (
                "env", "algorithm", "n_seeds", "final_mean", "ci95",
                "threshold", "steps_to_threshold", "seeds_reaching",
            )
        )
        for row in summary:
            writer.writerow(
                (
                    row["env"], row["algorithm"], row["n_seeds"],
                    repr(row["final_mean"]), repr(row["ci95"]),
                    repr(row["threshold"]),
                    repr(row["steps_to_threshold"]) if row["steps_to_threshold"] != "" else "",
                    row["seeds_reaching"],
                )
            )
    header = f"{'env':<14} {'algorithm':<9} {'seeds':>5} {'final_mean':>12} {'ci95':>10} {'steps_to_thr':>12}"
    print(header)
    for row in summary:
        to_threshold = row["steps_to_threshold"]
        print(
            f"{row['env']:<14} {row['algorithm']:<9} {row['n_seeds']:>5} "
            f"{row['final_mean']:>12.4f} {row['ci95']:>10.4f} "
            f"{to_threshold if to_threshold == '' else format(to_threshold, '>12.0f'):>12}"
        )
    print(f"wrote {csv_path}")
    if not args.no_figures:
        from .figures import compare_figures

        for path in compare_figures(runs, out_dir):
            print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapoca",
        description="Train and compare attention-critic multi-agent runs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run one training configuration")
    train.add_argument("--config", default=None, help="key = value config file")
    train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    train.add_argument("--seeds", default=None, help="comma list overriding the seed")
    train.add_argument("--jobs", type=int, default=1, help="parallel seed runs")
    train.add_argument("--out", default=None, help="override output_dir")
    train.set_defaults(func=cmd_train)

    validate = sub.add_parser("validate-config", help="resolve and print a config")
    validate.add_argument("--config", default=None)
    validate.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    validate.set_defaults(func=cmd_validate_config)

    mean = sub.add_parser("meanlab", help="run the variable-count mean study")
    mean.add_argument("--ranges", default="2-10,4-10,6-10,8-10")
    mean.add_argument("--models", default="fc,attention")
    mean.add_argument("--seeds", type=int, default=20)
    mean.add_argument("--steps", type=int, default=2000)
    mean.add_argument("--o-abs", type=float, default=0.0, dest="o_abs")
    mean.add_argument(
        "--o-abs-ablation", default="", dest="o_abs_ablation",
        help="comma list of extra padding values to sweep (fc only)",
    )
    mean.add_argument("--fixed-count", action="store_true", dest="fixed_count")
    mean.add_argument(
        "--allow-ambiguous-abs", action="store_true", dest="allow_ambiguous_abs"
    )
    mean.add_argument("--log-interval", type=int, default=20, dest="log_interval")
    mean.add_argument("--jobs", type=int, default=1)
    mean.add_argument("--out", default="meanlab")
    mean.add_argument("--no-figures", action="store_true", dest="no_figures")
    mean.set_defaults(func=cmd_meanlab)

    compare = sub.add_parser("compare", help="summarize completed metrics dirs")
    compare.add_argument("dirs", nargs="+")
    compare.add_argument("--window", type=float, default=0.1,
                         help="final fraction of steps to average")
    compare.add_argument("--threshold", type=float, default=None)
    compare.add_argument("--out", default="compare")
    compare.add_argument("--no-figures", action="store_true", dest="no_figures")
    compare.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as error:
        print(f"config error: {error}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as error:
        print(f"numerical abort: {error}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EnvironmentFault as error:
        print(f"environment fault: {error}", file=sys.stderr)
        return EXIT_ENV_FAULT


if __name__ == "__main__":
    sys.exit(main())
