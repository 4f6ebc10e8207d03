"""Gradient-ascent training of REGNN taps and first-order meta-learning.

All updates ascend the slot-averaged sum rate. Tap gradients come from
:func:`metaregnn.regnn.backward` seeded with the closed-form rate gradient.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import ChannelEpisode
from .objective import rates_and_gradient
from .regnn import NumericalError, RegnnParams, backward, forward, save_params
from .topology import NetworkDrop

__all__ = [
    "TrainConfig",
    "MetaState",
    "TaskData",
    "FOMAML",
    "REPTILE",
    "objective_and_gradient",
    "evaluate",
    "pooled_objective_and_gradient",
    "pooled_sgd_train",
    "sgd_train",
    "adapt",
    "fomaml_step",
    "reptile_step",
    "meta_objective",
    "meta_train",
    "TaskStack",
    "LOG_COLUMNS",
]

log = logging.getLogger(__name__)

FOMAML = "fomaml"
REPTILE = "reptile"
LOG_COLUMNS = ("outer_step", "algorithm", "meta_objective_bits", "wall_ms")


@dataclass(frozen=True)
class TrainConfig:
    """Inner-loop settings.

    ``batch_size`` larger than the available slot set falls back to full
    batch, so one config serves every adaptation budget.
    """

    learning_rate: float = 0.1
    steps: int = 5
    batch_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class TaskData:
    episode: ChannelEpisode
    drop: Optional[NetworkDrop] = None

    def __post_init__(self):
        if self.drop is None and self.episode.drop is not None:
            object.__setattr__(self, "drop", self.episode.drop)

    @property
    def train_slots(self) -> np.ndarray:
        return self.episode.train_slots

    @property
    def test_slots(self) -> np.ndarray:
        return self.episode.test_slots


@dataclass(frozen=True)
class MetaState:
    phi0: RegnnParams
    outer_rate: float = 0.1
    inner: TrainConfig = TrainConfig()
    meta_batch: int = 50
    algorithm: str = FOMAML
    step: int = 0  # completed outer steps; feeds the per-step seeds

    def __post_init__(self):
        if not self.outer_rate >= 0:
            raise ValueError("outer_rate must be >= 0")
        if self.meta_batch < 1:
            raise ValueError("meta_batch must be >= 1")
        if self.algorithm not in (FOMAML, REPTILE):
            raise ValueError(f"unknown meta-learning algorithm {self.algorithm!r}")


def objective_and_gradient(params: RegnnParams, episode: ChannelEpisode, slots):
    """Slot-averaged sum rate over ``slots`` and its gradient in the taps.

    The policy sees the normalized channels; the rate uses the raw ones.
    """
    slots = np.asarray(slots, dtype=np.int64)
    Hn = episode.normalized[slots]
    direct, cross = episode.squared_gains
    gains = (direct[slots], cross[slots])
    trace = forward(params, Hn, episode.p_max)
    rates, g_p = rates_and_gradient(None, trace.output, episode.config.noise_power, gains)
    value = float(rates.sum(axis=-1).mean())
    grad = backward(trace, params, Hn, g_p / len(slots))
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite sum rate or gradient")
    return value, grad


def evaluate(params: RegnnParams, episode: ChannelEpisode, slots=None) -> float:
    """Slot-averaged sum rate of the policy (test split by default)."""
    if slots is None:
        slots = episode.test_slots
    slots = np.asarray(slots, dtype=np.int64)
    if slots.size == 0:
        raise ValueError("no slots to evaluate on")
    p = forward(params, episode.normalized[slots], episode.p_max).output
    direct, cross = episode.squared_gains
    rates, _ = rates_and_gradient(None, p, episode.config.noise_power, (direct[slots], cross[slots]))
    return float(rates.sum(axis=-1).mean())


def pooled_objective_and_gradient(params: RegnnParams, groups):
    """Objective and tap gradient averaged over slots pooled from several episodes.

    ``groups`` is a sequence of ``(episode, slots)``; each group's mean is
    weighted by its share of the pooled slots and summed in order.
    """
    sizes = [len(slots) for _, slots in groups]
    n = sum(sizes)
    if n == 0:
        raise ValueError("no slots in pooled objective")
    value = 0.0
    grad = np.zeros_like(params.taps)
    for (episode, slots), size in zip(groups, sizes):
        if size == 0:
            continue
        v, g = objective_and_gradient(params, episode, slots)
        w = size / n
        value += w * v
        grad = grad + w * g
    return value, grad


def _batches(owner: np.ndarray, slots: np.ndarray, batch_size: int, steps: int, rng):
    """Yield ``steps`` batches as lists of ``(group, slot_indices)``."""
    n = len(slots)
    groups = np.unique(owner)
    if batch_size >= n:
        full = [(g, slots[owner == g]) for g in groups]
        for _ in range(steps):
            yield full
        return
    emitted = 0
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            if emitted == steps:
                return
            pick = order[start : start + batch_size]
            o, s = owner[pick], slots[pick]
            yield [(g, s[o == g]) for g in np.unique(o)]
            emitted += 1


def pooled_sgd_train(init: RegnnParams, groups, config: TrainConfig) -> RegnnParams:
    """Ascent on slots pooled across episodes (joint training).

    ``groups`` is a sequence of ``(episode, slots)``. Mini-batches are drawn
    without replacement from the pooled slots within an epoch and reshuffled
    every epoch; a batch size covering every slot is a plain full-batch step.
    """
    episodes = [ep for ep, _ in groups]
    owner = np.concatenate(
        [np.full(len(s), i, dtype=np.int64) for i, (_, s) in enumerate(groups)]
    )
    slots = np.concatenate([np.asarray(s, dtype=np.int64) for _, s in groups])
    if slots.size == 0:
        raise ValueError("training needs at least one slot")
    if config.steps == 0 or config.learning_rate == 0:
        return init
    rng = np.random.default_rng(config.seed)
    taps = init.taps
    batches = _batches(owner, slots, config.batch_size, config.steps, rng)
    for step, batch in enumerate(batches):
        try:
            _, grad = pooled_objective_and_gradient(
                RegnnParams(taps), [(episodes[g], s) for g, s in batch]
            )
        except NumericalError as exc:
            raise NumericalError(f"training diverged at step {step}: {exc}") from exc
        taps = taps + config.learning_rate * grad
        if not np.all(np.isfinite(taps)):
            raise NumericalError(
                f"taps became non-finite at step {step}; learning rate"
                f" {config.learning_rate} is too high"
            )
    return RegnnParams(taps)


def sgd_train(
    init: RegnnParams,
    slots,
    episode: ChannelEpisode,
    config: TrainConfig,
) -> RegnnParams:
    """Run ``config.steps`` ascent steps on mini-batches of ``slots``.

    Batches are drawn without replacement inside an epoch and reshuffled
    every epoch; a batch size covering every slot is a plain full-batch step.
    """
    return pooled_sgd_train(init, [(episode, slots)], config)


def adapt(
    phi0: RegnnParams,
    adaptation_slots,
    episode: ChannelEpisode,
    config: TrainConfig,
) -> RegnnParams:
    """Few-shot inner loop from a shared initialization."""
    return sgd_train(phi0, adaptation_slots, episode, config)


class TaskStack:
    """Zero-padded copy of several tasks' channels for vectorized inner loops.

    Padded links have no channel to or from anyone, so they carry zero rate
    and zero gradient; results match the per-task path up to floating-point
    reassociation.
    """

    def __init__(self, tasks: Sequence[TaskData]):
        episodes = [t.episode for t in tasks]
        kmax = max(ep.num_links for ep in episodes)
        tmax = max(ep.num_slots for ep in episodes)
        n = len(episodes)
        self.direct = np.zeros((n, tmax, kmax))
        self.cross = np.zeros((n, tmax, kmax, kmax))
        self.normalized = np.zeros((n, tmax, kmax, kmax))
        self.p_max = np.ones((n, 1, kmax))
        self.noise = np.empty((n, 1, 1))
        for i, ep in enumerate(episodes):
            T, K = ep.num_slots, ep.num_links
            self.direct[i, :T, :K] = ep.squared_gains[0]
            self.cross[i, :T, :K, :K] = ep.squared_gains[1]
            self.normalized[i, :T, :K, :K] = ep.normalized
            self.p_max[i, 0, :K] = ep.p_max
            self.noise[i] = ep.config.noise_power

    def __len__(self):
        return self.normalized.shape[0]

    def objective_and_gradient(self, taps: np.ndarray, members, slots: np.ndarray):
        """Per-task slot-mean sum rate and tap gradient.

        ``taps`` is ``(N, L, M)``, ``members`` selects N stacked tasks and
        ``slots`` is an ``(N, B)`` index array into each task's slots.
        """
        rows = np.asarray(members)[:, None]
        Hn = self.normalized[rows, slots]
        gains = (self.direct[rows, slots], self.cross[rows, slots])
        trace = forward(taps, Hn, self.p_max[members])
        rates, g_p = rates_and_gradient(None, trace.output, self.noise[members], gains)
        values = rates.sum(axis=-1).mean(axis=-1)
        grads = backward(trace, taps, Hn, g_p / slots.shape[1])
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(grads))):
            raise NumericalError("non-finite sum rate or gradient")
        return values, grads


def _task_config(state: MetaState, index: int) -> TrainConfig:
    seed = np.random.SeedSequence([int(state.inner.seed), state.step, index])
    return replace(state.inner, seed=int(seed.generate_state(1, dtype=np.uint64)[0]))


def _stacked_adapt(phi0, stack, members, slot_sets, configs):
    """Vectorized :func:`adapt` for several tasks sharing one step schedule."""
    n = len(members)
    taps = np.broadcast_to(phi0.taps, (n,) + phi0.taps.shape).copy()
    cfg = configs[0]
    if cfg.steps == 0 or cfg.learning_rate == 0:
        return taps
    streams = [
        _batches(np.zeros(len(s), dtype=np.int64), np.asarray(s, dtype=np.int64),
                 c.batch_size, c.steps, np.random.default_rng(c.seed))
        for s, c in zip(slot_sets, configs)
    ]
    members = np.asarray(members)
    for step in range(cfg.steps):
        batches = [next(st)[0][1] for st in streams]
        sizes = {len(b) for b in batches}
        if len(sizes) == 1:
            _, grads = stack.objective_and_gradient(taps, members, np.stack(batches))
        else:
            grads = np.stack([
                stack.objective_and_gradient(taps[i : i + 1], members[i : i + 1], b[None])[1][0]
                for i, b in enumerate(batches)
            ])
        taps = taps + cfg.learning_rate * grads
        if not np.all(np.isfinite(taps)):
            raise NumericalError(
                f"inner loop diverged at step {step}; learning rate {cfg.learning_rate} is too high"
            )
    return taps


def fomaml_step(state: MetaState, tasks: Sequence[TaskData]) -> MetaState:
    """One first-order MAML update of the shared initialization.

    Each task adapts from ``phi0`` on its training split; the gradient of
    the test-split rate at the adapted taps is averaged over tasks and
    ascended with ``outer_rate``.
    """
    state, _ = _fomaml_step(state, tasks, TaskStack(tasks), range(len(tasks)))
    return state


def _check_tasks(tasks, need_split):
    if not tasks:
        raise ValueError("meta-step needs at least one task")
    for i, task in enumerate(tasks):
        if need_split and (task.test_slots.size == 0 or task.train_slots.size == 0):
            raise ValueError(f"task {i} needs nonempty train and test splits")


def _fomaml_step(state, tasks, stack, members):
    _check_tasks(tasks, need_split=True)
    configs = [_task_config(state, int(m)) for m in members]
    adapted = _stacked_adapt(
        state.phi0, stack, members, [t.train_slots for t in tasks], configs
    )
    total = np.zeros_like(state.phi0.taps)
    objective = 0.0
    w = 1 / len(tasks)
    for task, taps in zip(tasks, adapted):
        value, grad = objective_and_gradient(RegnnParams(taps), task.episode, task.test_slots)
        total = total + w * grad
        objective += value
    taps = state.phi0.taps + state.outer_rate * total
    new = replace(state, phi0=RegnnParams(taps), step=state.step + 1)
    return new, objective / len(tasks)


def reptile_step(state: MetaState, tasks: Sequence[TaskData]) -> MetaState:
    """One REPTILE update: interpolate ``phi0`` toward the mean adapted taps.

    Tasks adapt on all their slots (train and test together).
    """
    state, _ = _reptile_step(state, tasks, TaskStack(tasks), range(len(tasks)))
    return state


def _reptile_step(state, tasks, stack, members):
    _check_tasks(tasks, need_split=False)
    configs = [_task_config(state, int(m)) for m in members]
    slot_sets = [np.concatenate([t.train_slots, t.test_slots]) for t in tasks]
    adapted = _stacked_adapt(state.phi0, stack, members, slot_sets, configs)
    objective = 0.0
    for task, taps in zip(tasks, adapted):
        if task.test_slots.size:
            objective += evaluate(RegnnParams(taps), task.episode, task.test_slots)
    eps = state.outer_rate
    if configs[0].steps == 0 or configs[0].learning_rate == 0:
        # every task stayed at phi0; skip the arithmetic so phi0 is kept bit for bit
        taps = state.phi0.taps
    else:
        taps = (1.0 - eps) * state.phi0.taps + eps * np.mean(adapted, axis=0)
    new = replace(state, phi0=RegnnParams(taps), step=state.step + 1)
    return new, objective / len(tasks)


def meta_objective(state: MetaState, tasks: Sequence[TaskData]) -> float:
    """Post-adaptation test sum rate averaged over ``tasks``."""
    values = []
    for i, task in enumerate(tasks):
        phi = adapt(state.phi0, task.train_slots, task.episode, _task_config(state, i))
        values.append(evaluate(phi, task.episode, task.test_slots))
    return float(np.mean(values))


def meta_train(
    state: MetaState,
    dataset: Sequence[TaskData],
    outer_steps: int,
    log_path=None,
    checkpoint_dir=None,
    checkpoint_every: int = 0,
    callback: Optional[Callable[[int, float], None]] = None,
) -> MetaState:
    """Repeat meta-steps over sampled meta-batches.

    When ``meta_batch`` covers the dataset every step uses all tasks in
    order; otherwise a seeded subset is drawn per step. Each step's
    meta-objective (mean post-adaptation test rate of the batch) goes to
    ``log_path`` as CSV and to ``callback``.
    """
    if not dataset:
        raise ValueError("meta-training needs at least one task")
    step_fn = _fomaml_step if state.algorithm == FOMAML else _reptile_step
    stack = TaskStack(dataset)
    writer = fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
    try:
        for _ in range(outer_steps):
            started = time.perf_counter()
            members = _meta_batch(state, len(dataset))
            state, objective = step_fn(state, [dataset[i] for i in members], stack, members)
            wall_ms = (time.perf_counter() - started) * 1e3
            log.debug("%s step %d: %.4f bit/s/Hz", state.algorithm, state.step, objective)
            if writer is not None:
                writer.writerow([state.step, state.algorithm, repr(objective), f"{wall_ms:.3f}"])
            if callback is not None:
                callback(state.step, objective)
            if checkpoint_dir is not None and checkpoint_every > 0 and state.step % checkpoint_every == 0:
                save_params(state.phi0, Path(checkpoint_dir) / f"phi0_step{state.step:06d}.ckpt")
    finally:
        if fh is not None:
            fh.close()
    return state


def _meta_batch(state: MetaState, n_tasks: int) -> np.ndarray:
    if state.meta_batch >= n_tasks:
        return np.arange(n_tasks)
    rng = np.random.default_rng([int(state.inner.seed), state.step, 0xBA7C])
    return np.sort(rng.choice(n_tasks, size=state.meta_batch, replace=False))
