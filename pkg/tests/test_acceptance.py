"""Acceptance suite: every criterion at its stated tolerance.

Each test records one ``PASS``/``FAIL`` line, shown in the terminal summary.
The two sweep reproductions run the default configuration on 20 seeds and
take several minutes each on one core.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import grid_optimum
from test_objective import rate_gradient_error
from test_regnn import tap_gradient_error
from test_trainers import (
    fomaml_direction_agrees,
    hand_gradient,
    make_task,
)

from metaregnn.channel import ChannelConfig, sample_episode
from metaregnn.harness.config import ExperimentConfig, dump_config, load_config
from metaregnn.harness.experiments import run_radius_sweep, run_sample_sweep
from metaregnn.harness.results import format_csv
from metaregnn.regnn import forward, init_params, normalize_channel
from metaregnn.topology import TopologyConfig, generate_drop
from metaregnn.trainers import (
    REPTILE,
    MetaState,
    TrainConfig,
    adapt,
    evaluate,
    fomaml_step,
    pooled_sgd_train,
    reptile_step,
    sgd_train,
)

HOUR = 3600.0


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    print(ACCEPTANCE_LINES[-1])
    return ok


def mean_se(values):
    v = np.asarray(values, float)
    return v.mean(), v.std(ddof=1) / np.sqrt(len(v))


# -- 1-5: properties and oracles ----------------------------------------------------


def test_1_gradient_correctness():
    rng = np.random.default_rng(2024)
    sizes = rng.integers(2, 9, size=200)
    tap_errors = np.array([tap_gradient_error(rng, int(K)) for K in sizes])
    rate_errors = np.array([rate_gradient_error(rng, int(K)) for K in sizes])
    ok = bool(np.all(np.isfinite(tap_errors)) and tap_errors.max() <= 1e-5 and rate_errors.max() <= 1e-6)
    assert record(1, ok, f"200 instances, K in 2..8: max tap rel err {tap_errors.max():.2e} (<=1e-5), "
                         f"max rate rel err {rate_errors.max():.2e} (<=1e-6)")


def test_2_permutation_equivariance():
    rng = np.random.default_rng(7)
    worst = 0.0
    for K, perms in ((4, list(itertools.permutations(range(4)))), (10, [rng.permutation(10) for _ in range(50)])):
        H = normalize_channel(rng.rayleigh(size=(K, K)) * rng.uniform(0.01, 1, size=(K, K)))[0]
        params = init_params(seed=K)
        base = forward(params, H, np.ones(K)).output
        for perm in perms:
            P = np.eye(K)[list(perm)]
            out = forward(params, P @ H @ P.T, np.ones(K)).output
            worst = max(worst, float(np.max(np.abs(out - P @ base))))
    assert record(2, worst <= 1e-12, f"24 perms at K=4 and 50 at K=10: max deviation {worst:.1e} (<=1e-12)")


def test_3_oracle_near_optimality():
    # fully connected K=2 drops: the radius of the dynamic-size scenario exceeds the region size
    cfg = ChannelConfig(slots=200)
    ratios = []
    started = time.perf_counter()
    for seed in range(20):
        drop = generate_drop(TopologyConfig(2, ExperimentConfig().dynamic_radius, seed))
        ep = sample_episode(drop, cfg, 200, 0)
        optimum = grid_optimum(ep.matrices, cfg.max_power, cfg.noise_power, points=101)
        phi = sgd_train(init_params(seed=seed), ep.train_slots, ep, TrainConfig(30.0, 500, 200, seed))
        ratios.append(evaluate(phi, ep, ep.train_slots) / optimum)
    ratios = np.array(ratios)
    elapsed = time.perf_counter() - started
    ok = bool(ratios.min() >= 0.95 and elapsed < 60)
    assert record(3, ok, f"{int((ratios >= 0.95).sum())}/20 drops at >=95% of the 101x101 grid optimum; "
                         f"min ratio {ratios.min():.3f}, mean {ratios.mean():.3f}; {elapsed:.0f}s")


def test_4_degenerate_equivalences():
    # (a) FOMAML with a zero inner rate is one pooled joint ascent step on the test slots
    tasks = [make_task(s, K=k) for s, k in ((1, 3), (2, 6), (3, 4))]
    phi0 = init_params(seed=8)
    state = MetaState(phi0, outer_rate=25.0, inner=TrainConfig(0.0, 5, 4), meta_batch=3)
    pooled = pooled_sgd_train(phi0, [(t.episode, t.test_slots) for t in tasks], TrainConfig(25.0, 1, 10**6))
    a = np.array_equal(fomaml_step(state, tasks).phi0.taps, pooled.taps)
    # (b) REPTILE without inner steps keeps phi0 for any outer rate
    b = all(
        reptile_step(MetaState(phi0, eps, TrainConfig(50.0, 0, 5), algorithm=REPTILE), tasks).phi0 == phi0
        for eps in (0.1, 0.5, 1.0)
    )
    # (c) one full-batch adaptation step is the textbook update
    task = tasks[1]
    eta = 37.0
    adapted = adapt(phi0, task.train_slots, task.episode, TrainConfig(eta, 1, 10**6))
    c = np.array_equal(adapted.taps, phi0.taps + eta * hand_gradient(phi0, task.episode, task.train_slots))
    assert record(4, a and b and c, f"(a) FOMAML eta=0 bit-match {a}; (b) REPTILE fixed point {b}; "
                                    f"(c) one-step adapt bit-match {c}")


def test_5_fomaml_direction():
    started = time.perf_counter()
    agree = sum(fomaml_direction_agrees(s) for s in range(100))
    elapsed = time.perf_counter() - started
    ok = agree >= 95 and elapsed < 60
    assert record(5, ok, f"positive inner product with the exact meta-gradient in {agree}/100 trials "
                         f"(K=2, L=1, M=2, inner rate 1); {elapsed:.0f}s")


# -- 6-8: sweep reproductions ------------------------------------------------------


@pytest.fixture(scope="module")
def default_config():
    return ExperimentConfig()


@pytest.fixture(scope="module")
def sample_sweep(default_config):
    started = time.perf_counter()
    result = run_sample_sweep(default_config)
    return result, time.perf_counter() - started


@pytest.fixture(scope="module")
def radius_sweep(default_config):
    started = time.perf_counter()
    result = run_radius_sweep(default_config)
    return result, time.perf_counter() - started


def _rates(result, method, x):
    return [r.sum_rate_bits for r in sorted(result.select(method=method, x_value=x), key=lambda r: r.seed)]


def test_6_sample_efficiency(default_config, sample_sweep):
    result, elapsed = sample_sweep
    grid = default_config.sample_grid
    small = [n for n in grid if n <= 10]
    lines = []
    ordering = True
    for n in small:
        joint = np.mean(_rates(result, "regnn-adapt", n))
        for m in ("fomaml", "reptile"):
            meta = np.mean(_rates(result, m, n))
            ordering &= bool(meta > joint)
        lines.append(f"n={n}: F {np.mean(_rates(result, 'fomaml', n)):.2f} R {np.mean(_rates(result, 'reptile', n)):.2f} J {joint:.2f}")
    largest = grid[-1]
    joint, _ = mean_se(_rates(result, "regnn-adapt", largest))
    reversal = True
    for m in ("fomaml", "reptile"):
        meta, se = mean_se(_rates(result, m, largest))
        reversal &= bool(joint >= meta - se)
        lines.append(f"n={largest}: {m} {meta:.2f}+-{se:.2f} vs J {joint:.2f}")
    meta_small = [np.mean(_rates(result, m, n)) for m in ("fomaml", "reptile") for n in small]
    absolute = bool(all(21.0 <= v <= 39.0 for v in meta_small))
    in_time = elapsed <= HOUR
    record("6a", ordering, "meta > joint+adaptation at every budget <= 10 samples; " + "; ".join(lines[: len(small)]))
    record("6b", reversal, "joint+adaptation >= meta - 1 SE at the largest budget; " + "; ".join(lines[len(small):]))
    record("6c", absolute, f"meta rates at <= 10 samples within 30% of 30 bit/s/Hz: "
                           f"{min(meta_small):.2f}..{max(meta_small):.2f}")
    record("6d", in_time, f"sample sweep runtime {elapsed / 60:.1f} min (<= 60)")
    assert ordering and reversal and absolute and in_time


def test_7_task_diversity(default_config, radius_sweep):
    result, elapsed = radius_sweep
    grid = default_config.radius_grid
    ok = True
    parts = []
    for m in ("fomaml", "reptile"):
        gains = {x: np.mean([r.relative_gain for r in result.select(method=m, x_value=x)]) for x in grid}
        best_x = max(grid[1:-1], key=gains.get)
        ok &= bool(gains[best_x] > gains[grid[0]] and gains[best_x] > gains[grid[-1]])
        parts.append(f"{m}: gain {gains[best_x]:+.4f} at r={best_x:g} vs {gains[grid[0]]:+.4f} (r={grid[0]:g}) "
                     f"and {gains[grid[-1]]:+.4f} (r={grid[-1]:g})")
    seeds = len({r.seed for r in result.rows})
    ok &= seeds >= 20 and elapsed <= HOUR
    record(7, ok, "; ".join(parts) + f"; {seeds} seeds, {elapsed / 60:.1f} min")
    assert ok


def test_8_determinism(default_config, sample_sweep):
    result, _ = sample_sweep
    manifest = load_config(text=dump_config(default_config))
    again = run_sample_sweep(manifest)
    ok = format_csv(again).encode() == format_csv(result).encode()
    record(8, ok, "sample sweep rerun from its manifest reproduces the CSV byte-for-byte")
    assert ok
