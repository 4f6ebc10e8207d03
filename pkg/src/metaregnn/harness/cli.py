"""Command-line entry point: ``metaregnn <verb> [options]``.

Verbs
-----
gen-data       write a meta-training dataset (drops + episodes) and a test period
meta-train     train an initialization (fomaml, reptile or joint) on a dataset
adapt          fine-tune a checkpoint on the first N slots of an episode
eval           score a checkpoint on an episode's held-out slots
sweep-samples  sum rate vs adaptation samples, dynamic network size
sweep-radius   relative gain vs interference radius, fixed network size
report         aggregate a sweep CSV into per-(method, x) means

Exit codes: 0 success, 1 configuration/input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..channel import load_episode, save_episode, split_episode
from ..regnn import NumericalError, init_params, load_params, save_params
from ..topology import load_drop, save_drop
from ..trainers import FOMAML, REPTILE, TaskData, TrainConfig, adapt, evaluate
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .experiments import (
    DYNAMIC,
    FIXED,
    build_meta_dataset,
    build_test_task,
    derive_seed,
    run_radius_sweep,
    run_sample_sweep,
    train_joint,
    train_meta,
)
from .results import emit_csv, read_csv

log = logging.getLogger("metaregnn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _config(args) -> ExperimentConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = (args.seed,)
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    return load_config(args.config, **overrides)


def _scenario(config: ExperimentConfig, name: str, radius):
    if name == DYNAMIC:
        rule = config.dynamic_num_links
        radius = config.require_dynamic_radius() if radius is None else radius
    elif name == FIXED:
        rule = config.fixed_num_links
        if radius is None:
            raise ConfigError("fixed-size data needs --radius")
    else:
        raise ConfigError(f"unknown scenario {name!r}")
    return rule, float(radius)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, config: ExperimentConfig, **extra) -> None:
    text = dump_config(config)
    if extra:
        parser = configparser.ConfigParser(interpolation=None)
        parser["run"] = {k: str(v) for k, v in extra.items()}
        buf = io.StringIO()
        parser.write(buf)
        text = buf.getvalue() + text
    (out / "manifest.ini").write_text(text)


def _load_dataset(data: Path, config: ExperimentConfig):
    tasks = []
    for ep_path in sorted(data.glob("task_*.episode")):
        drop_path = ep_path.with_suffix(".drop")
        period = int(ep_path.stem.split("_")[1])
        drop = load_drop(drop_path, period_index=period) if drop_path.exists() else None
        episode = split_episode(load_episode(ep_path, drop), config.train_slots, config.test_slots)
        tasks.append(TaskData(episode))
    if not tasks:
        raise ConfigError(f"no task_*.episode files in {data}")
    return tasks


# -- verbs --------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    config = _config(args)
    seed = config.seeds[0]
    rule, radius = _scenario(config, args.scenario, args.radius)
    out = _out_dir(args)
    tasks = build_meta_dataset(config, rule, radius, seed)
    for i, task in enumerate(tasks):
        save_drop(task.drop, out / f"task_{i:04d}.drop")
        save_episode(task.episode, out / f"task_{i:04d}.episode")
    pool = max(config.sample_grid) if args.scenario == DYNAMIC else max(config.radius_samples, 1)
    test = build_test_task(config, rule, radius, seed, pool)
    save_drop(test.drop, out / "test.drop")
    save_episode(test.episode, out / "test.episode")
    _write_manifest(out, config, scenario=args.scenario, radius=radius, seed=seed,
                    adaptation_pool=pool)
    print(f"wrote {len(tasks)} meta-training periods and a test period to {out}")
    return EXIT_OK


def cmd_meta_train(args) -> int:
    config = _config(args)
    seed = config.seeds[0]
    data = Path(args.data)
    tasks = _load_dataset(data, config)
    out = _out_dir(args)
    if args.init is not None:
        init = load_params(args.init)
    else:
        init = init_params(config.layers, config.filter_order, derive_seed(seed, "init"))
    if args.algorithm == "joint":
        phi = train_joint(config, tasks, init, seed)
    else:
        phi = train_meta(config, tasks, init, args.algorithm, seed, log_path=out / f"{args.algorithm}_log.csv")
    ckpt = out / f"{args.algorithm}.ckpt"
    save_params(phi, ckpt)
    print(f"wrote {ckpt}")
    return EXIT_OK


def _episode_for_eval(args, config, pool):
    episode = load_episode(args.episode)
    eval_slots = config.eval_slots if args.eval_slots is None else args.eval_slots
    if pool + eval_slots > episode.num_slots:
        raise ConfigError(
            f"episode has {episode.num_slots} slots, need {pool} adaptation + {eval_slots} held-out"
        )
    return split_episode(episode, episode.num_slots - eval_slots, eval_slots)


def cmd_adapt(args) -> int:
    config = _config(args)
    seed = config.seeds[0]
    phi = load_params(args.checkpoint)
    episode = _episode_for_eval(args, config, args.samples)
    steps = args.steps
    cfg = TrainConfig(config.adapt_rate, steps, config.adapt_batch, derive_seed(seed, "adapt", args.samples))
    adapted = adapt(phi, episode.train_slots[: args.samples], episode, cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_params(adapted, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _config(args)
    phi = load_params(args.checkpoint)
    episode = _episode_for_eval(args, config, 0)
    value = evaluate(phi, episode)
    print(repr(value))
    if args.out:
        Path(args.out).write_text(f"sum_rate_bits\n{value!r}\n")
    return EXIT_OK


def _sweep(args, runner) -> int:
    config = _config(args)
    out = _out_dir(args)
    result = runner(config)
    emit_csv(result, out / args.csv_name)
    _write_manifest(out, config)
    print(f"wrote {len(result)} rows to {out / args.csv_name}")
    return EXIT_OK


def cmd_sweep_samples(args) -> int:
    return _sweep(args, run_sample_sweep)


def cmd_sweep_radius(args) -> int:
    return _sweep(args, run_radius_sweep)


def summarize(result):
    """Per (method, scenario, x): count, mean and standard error of rate and gain."""
    groups = defaultdict(list)
    for r in result.sorted().rows:
        groups[(r.method, r.scenario, r.x_kind, r.x_value)].append(r)
    summary = []
    for key, rows in groups.items():
        rates = np.array([r.sum_rate_bits for r in rows])
        gains = np.array([r.relative_gain for r in rows if r.relative_gain is not None])
        entry = dict(zip(("method", "scenario", "x_kind", "x_value"), key))
        entry["runs"] = len(rows)
        entry["mean_sum_rate_bits"] = float(rates.mean())
        entry["se_sum_rate_bits"] = float(rates.std(ddof=1) / np.sqrt(len(rates))) if len(rates) > 1 else 0.0
        entry["mean_relative_gain"] = float(gains.mean()) if gains.size else None
        summary.append(entry)
    return summary


def cmd_report(args) -> int:
    result = read_csv(args.csv)
    summary = summarize(result)
    out = Path(args.out) if args.out else None
    columns = ("method", "scenario", "x_kind", "x_value", "runs", "mean_sum_rate_bits",
               "se_sum_rate_bits", "mean_relative_gain")
    sink = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(columns)
        for entry in summary:
            writer.writerow(["" if entry[c] is None else
                             (repr(entry[c]) if isinstance(entry[c], float) else entry[c])
                             for c in columns])
    finally:
        if out:
            sink.close()
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metaregnn", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--seed", type=int, help="run seed (overrides [experiment] seeds)")
        p.add_argument("--out", required=out_required, help="output file or directory")

    p = sub.add_parser("gen-data", help="generate a meta-training dataset")
    common(p)
    p.add_argument("--scenario", choices=(DYNAMIC, FIXED), default=DYNAMIC)
    p.add_argument("--radius", type=float, help="interference radius (fixed-size needs it)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("meta-train", help="train an initialization on a dataset")
    common(p)
    p.add_argument("--data", required=True, help="directory written by gen-data")
    p.add_argument("--algorithm", choices=(FOMAML, REPTILE, "joint"), default=FOMAML)
    p.add_argument("--init", help="starting checkpoint (default: seeded random taps)")
    p.set_defaults(func=cmd_meta_train)

    p = sub.add_parser("adapt", help="fine-tune a checkpoint on an episode")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode", required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--eval-slots", type=int, help="trailing slots reserved for evaluation")
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("eval", help="score a checkpoint on held-out slots")
    common(p, out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episode", required=True)
    p.add_argument("--eval-slots", type=int, help="trailing slots used for evaluation")
    p.set_defaults(func=cmd_eval)

    for verb, func, name in (
        ("sweep-samples", cmd_sweep_samples, "sample_sweep.csv"),
        ("sweep-radius", cmd_sweep_radius, "radius_sweep.csv"),
    ):
        p = sub.add_parser(verb, help=func.__doc__ or verb)
        common(p)
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.set_defaults(func=func, csv_name=name)

    p = sub.add_parser("report", help="aggregate a sweep CSV")
    p.add_argument("csv", help="CSV written by a sweep")
    p.add_argument("--config", help="ignored; accepted for symmetry")
    p.add_argument("--seed", type=int, help="ignored; accepted for symmetry")
    p.add_argument("--out", help="summary CSV path (default: stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
