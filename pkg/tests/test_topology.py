import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metaregnn.topology import (
    SizeRule,
    TopologyConfig,
    drop_from_text,
    drop_to_text,
    generate_drop,
    load_drop,
    parse_size_rule,
    sample_network_size,
    save_drop,
)

seeds = st.integers(min_value=0, max_value=2**63 - 1)


def brute_force_sets(tx, rx, r):
    K = len(tx)
    return tuple(
        frozenset(j for j in range(K) if j != k and np.hypot(*(tx[j] - rx[k])) <= r)
        for k in range(K)
    )


@given(K=st.integers(1, 25), r=st.floats(0, 60), seed=seeds, period=st.integers(0, 10**6))
def test_drop_invariants(K, r, seed, period):
    drop = generate_drop(TopologyConfig(K, r, seed), period)
    tx, rx = drop.tx_positions, drop.rx_positions
    assert tx.shape == rx.shape == (K, 2)
    assert np.all(np.abs(tx) <= K)
    assert np.all(np.abs(rx - tx) <= K / 4)
    assert all(k not in s for k, s in enumerate(drop.neighbor_sets))
    assert drop.neighbor_sets == brute_force_sets(tx, rx, r)
    assert drop.period_index == period


def test_region_box_for_ten_links():
    for seed in range(20):
        drop = generate_drop(TopologyConfig(10, 3.0, seed))
        assert np.all(np.abs(drop.tx_positions) <= 10)
        assert np.all(np.abs(drop.rx_positions - drop.tx_positions) <= 2.5)


def test_zero_radius_disconnects_and_huge_radius_connects():
    for seed in range(10):
        empty = generate_drop(TopologyConfig(8, 0.0, seed))
        assert all(len(s) == 0 for s in empty.neighbor_sets)
        # region diameter for K=8 is well under 10 * 8 * 3
        full = generate_drop(TopologyConfig(8, 10 * 8 * 3.0, seed))
        assert all(s == frozenset(range(8)) - {k} for k, s in enumerate(full.neighbor_sets))


@given(seed=seeds, r1=st.floats(0, 30), r2=st.floats(0, 30))
def test_radius_monotone(seed, r1, r2):
    lo, hi = sorted((r1, r2))
    a = generate_drop(TopologyConfig(12, lo, seed), 3)
    b = generate_drop(TopologyConfig(12, hi, seed), 3)
    assert all(x <= y for x, y in zip(a.neighbor_sets, b.neighbor_sets))


def test_deterministic_and_period_dependent():
    cfg = TopologyConfig("uniform-int[4,20]", 5.0, 77)
    assert generate_drop(cfg, 4) == generate_drop(cfg, 4)
    assert not generate_drop(cfg, 4) == generate_drop(cfg, 5)


def test_edges_can_be_asymmetric():
    # some drop must show j -> k without k -> j at a moderate radius
    found = False
    for seed in range(50):
        adj = generate_drop(TopologyConfig(10, 4.0, seed)).adjacency
        if np.any(adj != adj.T):
            found = True
            break
    assert found


def test_rejects_bad_configs():
    with pytest.raises(ValueError):
        TopologyConfig(0, 1.0)
    with pytest.raises(ValueError):
        TopologyConfig(5, -1.0)
    with pytest.raises(ValueError):
        parse_size_rule("uniform[4,20]")


@pytest.mark.parametrize("text,expected", [
    (10, SizeRule(10, 10)),
    ("10", SizeRule(10, 10)),
    ("fixed(10)", SizeRule(10, 10)),
    ("uniform-int[4,20]", SizeRule(4, 20)),
])
def test_parse_size_rule(text, expected):
    assert parse_size_rule(text) == expected


def test_fixed_rule_is_constant():
    assert all(sample_network_size("fixed(10)", s) == 10 for s in range(100))


def test_uniform_rule_frequencies():
    n = 100_000
    draws = np.array([sample_network_size("uniform-int[4,20]", s) for s in range(n)])
    assert draws.min() >= 4 and draws.max() <= 20
    counts = np.bincount(draws, minlength=21)[4:21]
    p = 1 / 17
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= 5 * sigma)


@given(K=st.integers(1, 15), r=st.floats(0, 40), seed=seeds)
def test_text_round_trip(K, r, seed):
    drop = generate_drop(TopologyConfig(K, r, seed), 2)
    back = drop_from_text(drop_to_text(drop), period_index=2)
    assert back == drop
    assert back.interference_radius == drop.interference_radius


def test_text_format_layout(tmp_path):
    drop = generate_drop(TopologyConfig(3, 100.0, 5))
    lines = drop_to_text(drop).splitlines()
    assert lines[0] == "3 100.0 5"
    assert len(lines[1].split()) == 4
    assert lines[4] == "0: 1 2"
    path = tmp_path / "d.txt"
    save_drop(drop, path)
    assert load_drop(path) == drop


def test_text_rejects_truncation():
    text = drop_to_text(generate_drop(TopologyConfig(4, 5.0, 1)))
    with pytest.raises(ValueError):
        drop_from_text("\n".join(text.splitlines()[:-1]))
