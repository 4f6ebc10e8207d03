"""Experiment pipelines: dataset generation, the four compared policies, sweeps.

Policies, per run seed:

* ``fomaml`` / ``reptile`` -- meta-trained initialization, adapted on the
  test period's few samples;
* ``regnn-adapt`` -- one policy jointly trained on the pooled training
  slots of every meta-training period, then fine-tuned the same way;
* ``regnn`` -- the joint policy without fine-tuning.

All four see the same meta-training periods, the same test period and the
same adaptation slots, so per-seed differences are paired.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from ..channel import sample_episode
from ..regnn import RegnnParams, init_params
from ..topology import TopologyConfig, generate_drop
from ..trainers import (
    FOMAML,
    REPTILE,
    MetaState,
    TaskData,
    TrainConfig,
    adapt,
    evaluate,
    meta_train,
    pooled_sgd_train,
)
from .config import ExperimentConfig
from .results import META_METHODS, ExperimentResult, ResultRow, relative_gain

__all__ = [
    "derive_seed",
    "build_meta_dataset",
    "build_test_task",
    "adaptation_steps",
    "train_joint",
    "train_meta",
    "train_initializations",
    "run_joint_baseline",
    "run_sample_cell",
    "run_radius_cell",
    "run_sample_sweep",
    "run_radius_sweep",
]

log = logging.getLogger(__name__)

DYNAMIC = "dynamic-size"
FIXED = "fixed-size"

# period index of the meta-test topology; meta-training uses 0..meta_tasks-1
TEST_PERIOD = 1_000_000


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from integers and short string tags."""
    words = []
    for p in parts:
        if isinstance(p, str):
            words.extend(p.encode())
        else:
            words.append(int(p))
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> 1)


def build_meta_dataset(
    config: ExperimentConfig, num_links, radius: float, seed: int
) -> List[TaskData]:
    topo = TopologyConfig(num_links, radius, derive_seed(seed, "topology"))
    chan = config.channel_config(config.train_slots + config.test_slots, derive_seed(seed, "fading"))
    tasks = []
    for period in range(config.meta_tasks):
        drop = generate_drop(topo, period)
        tasks.append(TaskData(sample_episode(drop, chan, config.train_slots, config.test_slots)))
    return tasks


def build_test_task(
    config: ExperimentConfig, num_links, radius: float, seed: int, pool: int
) -> TaskData:
    """Meta-test period: ``pool`` adaptation slots then ``eval_slots`` held-out slots."""
    topo = TopologyConfig(num_links, radius, derive_seed(seed, "topology"))
    chan = config.channel_config(pool + config.eval_slots, derive_seed(seed, "test-fading"))
    drop = generate_drop(topo, TEST_PERIOD)
    return TaskData(sample_episode(drop, chan, pool, config.eval_slots))


def adaptation_steps(config: ExperimentConfig, method: str, samples: int) -> int:
    """Fine-tuning steps for a budget of ``samples`` adaptation slots.

    The per-method base count applies to small budgets; with
    ``adapt_epochs > 0`` larger budgets get enough steps to cover their
    data that many times.
    """
    base = {
        FOMAML: config.fomaml_adapt_steps,
        REPTILE: config.reptile_adapt_steps,
        "regnn-adapt": config.joint_adapt_steps,
    }[method]
    if config.adapt_epochs > 0:
        base = max(base, math.ceil(config.adapt_epochs * samples / config.adapt_batch))
    return base


def train_joint(config: ExperimentConfig, tasks: Sequence[TaskData], init: RegnnParams, seed: int):
    groups = [(t.episode, t.train_slots) for t in tasks]
    cfg = TrainConfig(config.joint_rate, config.joint_steps, config.joint_batch, derive_seed(seed, "joint"))
    return pooled_sgd_train(init, groups, cfg)


def train_meta(
    config: ExperimentConfig,
    tasks: Sequence[TaskData],
    init: RegnnParams,
    algorithm: str,
    seed: int,
    log_path=None,
) -> RegnnParams:
    if algorithm == FOMAML:
        rate, steps = config.fomaml_outer_rate, config.fomaml_inner_steps
    else:
        rate, steps = config.reptile_outer_rate, config.reptile_inner_steps
    state = MetaState(
        phi0=init,
        outer_rate=rate,
        inner=TrainConfig(config.inner_rate, steps, config.inner_batch, derive_seed(seed, algorithm)),
        meta_batch=config.meta_batch,
        algorithm=algorithm,
    )
    return meta_train(state, tasks, config.outer_steps, log_path=log_path).phi0


def train_initializations(
    config: ExperimentConfig, tasks: Sequence[TaskData], seed: int
) -> Dict[str, RegnnParams]:
    """Joint, FOMAML and REPTILE initializations from one shared random start."""
    init = init_params(config.layers, config.filter_order, derive_seed(seed, "init"))
    return {
        FOMAML: train_meta(config, tasks, init, FOMAML, seed),
        REPTILE: train_meta(config, tasks, init, REPTILE, seed),
        "regnn": train_joint(config, tasks, init, seed),
    }


def _adapt_and_score(config, method, phi, test_task, samples, seed):
    if samples == 0:
        return evaluate(phi, test_task.episode)
    steps = adaptation_steps(config, method, samples)
    cfg = TrainConfig(config.adapt_rate, steps, config.adapt_batch, derive_seed(seed, "adapt", samples))
    adapted = adapt(phi, test_task.train_slots[:samples], test_task.episode, cfg)
    return evaluate(adapted, test_task.episode)


def run_joint_baseline(
    meta_dataset: Sequence[TaskData],
    test_task: TaskData,
    adaptation_samples: int,
    steps: int,
    config: ExperimentConfig,
    seed: int = 0,
    joint: RegnnParams = None,
) -> float:
    """Joint training on pooled meta-training slots, optional fine-tune, held-out score.

    ``adaptation_samples == 0`` is the no-adaptation baseline. A
    precomputed joint policy can be passed to skip retraining.
    """
    if not meta_dataset:
        raise ValueError("joint baseline needs meta-training data")
    if joint is None:
        init = init_params(config.layers, config.filter_order, derive_seed(seed, "init"))
        joint = train_joint(config, meta_dataset, init, seed)
    if adaptation_samples == 0:
        return evaluate(joint, test_task.episode)
    cfg = TrainConfig(config.adapt_rate, steps, config.adapt_batch, derive_seed(seed, "adapt", adaptation_samples))
    adapted = adapt(joint, test_task.train_slots[:adaptation_samples], test_task.episode, cfg)
    return evaluate(adapted, test_task.episode)


def _score_methods(config, tasks, inits, test_task, samples, seed):
    scores = {
        m: _adapt_and_score(config, m, inits[m], test_task, samples, seed) for m in META_METHODS
    }
    steps = adaptation_steps(config, "regnn-adapt", samples)
    scores["regnn-adapt"] = run_joint_baseline(
        tasks, test_task, samples, steps, config, seed, joint=inits["regnn"]
    )
    return scores


def _rows(scenario, x_kind, x, seed, scores, no_adapt):
    rows = []
    for m in META_METHODS:
        rows.append(ResultRow(m, scenario, x_kind, x, seed, scores[m],
                              relative_gain(scores[m], scores["regnn-adapt"])))
    rows.append(ResultRow("regnn-adapt", scenario, x_kind, x, seed, scores["regnn-adapt"]))
    rows.append(ResultRow("regnn", scenario, x_kind, x, seed, no_adapt))
    return rows


@dataclass(frozen=True)
class _Cell:
    kind: str
    seed: int
    x: float = 0.0


def run_sample_cell(config: ExperimentConfig, seed: int) -> List[ResultRow]:
    """One run seed of the sample-efficiency sweep (every grid point)."""
    radius = config.require_dynamic_radius()
    rule = config.dynamic_num_links
    tasks = build_meta_dataset(config, rule, radius, seed)
    inits = train_initializations(config, tasks, seed)
    test_task = build_test_task(config, rule, radius, seed, max(config.sample_grid))
    no_adapt = evaluate(inits["regnn"], test_task.episode)
    rows = []
    for n in config.sample_grid:
        scores = _score_methods(config, tasks, inits, test_task, n, seed)
        rows += _rows(DYNAMIC, "samples", int(n), seed, scores, no_adapt)
    log.info("sample sweep seed %d done", seed)
    return rows


def run_radius_cell(config: ExperimentConfig, seed: int, radius: float) -> List[ResultRow]:
    """One (seed, radius) cell of the interference-radius sweep."""
    rule = config.fixed_num_links
    n = config.radius_samples
    tasks = build_meta_dataset(config, rule, radius, seed)
    inits = train_initializations(config, tasks, seed)
    test_task = build_test_task(config, rule, radius, seed, max(n, 1))
    no_adapt = evaluate(inits["regnn"], test_task.episode)
    scores = _score_methods(config, tasks, inits, test_task, n, seed)
    log.info("radius sweep seed %d radius %g done", seed, radius)
    return _rows(FIXED, "radius", float(radius), seed, scores, no_adapt)


def _run_cell(config: ExperimentConfig, cell: _Cell) -> List[ResultRow]:
    if cell.kind == "samples":
        return run_sample_cell(config, cell.seed)
    return run_radius_cell(config, cell.seed, cell.x)


def _run_cells(config: ExperimentConfig, cells: List[_Cell]) -> ExperimentResult:
    rows: List[ResultRow] = []
    if config.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for part in pool.map(_run_cell, [config] * len(cells), cells):
                rows += part
    else:
        for cell in cells:
            rows += _run_cell(config, cell)
    return ExperimentResult(rows).sorted()


def run_sample_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Sum rate against the number of adaptation samples (dynamic network size)."""
    config.require_dynamic_radius()
    return _run_cells(config, [_Cell("samples", s) for s in config.seeds])


def run_radius_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Relative rate gain of meta-learning against the interference radius (fixed size)."""
    cells = [_Cell("radius", s, float(r)) for s in config.seeds for r in config.radius_grid]
    return _run_cells(config, cells)
