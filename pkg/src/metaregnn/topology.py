"""Random link drops and the interference graphs they induce.

A drop places ``K`` transmitters uniformly in ``[-K, K]^2`` and each paired
receiver uniformly in a box of half-width ``K/4`` around its transmitter.
Transmitter ``j`` interferes with link ``k`` when ``||Tx_j - Rx_k|| <= r``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "SizeRule",
    "TopologyConfig",
    "NetworkDrop",
    "parse_size_rule",
    "sample_network_size",
    "generate_drop",
    "neighbor_sets_for_radius",
    "drop_to_text",
    "drop_from_text",
    "save_drop",
    "load_drop",
]

_FIXED_RE = re.compile(r"^\s*fixed\(\s*(\d+)\s*\)\s*$")
_UNIFORM_RE = re.compile(r"^\s*uniform-int\[\s*(\d+)\s*,\s*(\d+)\s*\]\s*$")

# stream tags keep size sampling and placement independent for one seed
_SIZE_STREAM = 0x51
_PLACE_STREAM = 0x9A


@dataclass(frozen=True)
class SizeRule:
    """Network-size rule: ``low == high`` is a fixed size."""

    low: int
    high: int

    def __post_init__(self):
        if self.low < 1 or self.high < self.low:
            raise ValueError(f"invalid size rule bounds [{self.low}, {self.high}]")

    @property
    def is_fixed(self) -> bool:
        return self.low == self.high

    def __str__(self) -> str:
        if self.is_fixed:
            return f"fixed({self.low})"
        return f"uniform-int[{self.low},{self.high}]"


def parse_size_rule(rule: Union[int, str, SizeRule]) -> SizeRule:
    """Accept ``10``, ``"fixed(10)"``, ``"10"`` or ``"uniform-int[4,20]"``."""
    if isinstance(rule, SizeRule):
        return rule
    if isinstance(rule, (int, np.integer)) and not isinstance(rule, bool):
        return SizeRule(int(rule), int(rule))
    if isinstance(rule, str):
        text = rule.strip()
        if text.isdigit():
            return SizeRule(int(text), int(text))
        m = _FIXED_RE.match(text)
        if m:
            return SizeRule(int(m.group(1)), int(m.group(1)))
        m = _UNIFORM_RE.match(text)
        if m:
            return SizeRule(int(m.group(1)), int(m.group(2)))
    raise ValueError(f"unrecognised network size rule: {rule!r}")


def sample_network_size(rule, seed: int) -> int:
    """Draw a link count from ``rule``; uniform rules are discrete uniform."""
    rule = parse_size_rule(rule)
    if rule.is_fixed:
        return rule.low
    rng = np.random.default_rng([_SIZE_STREAM, int(seed)])
    return int(rng.integers(rule.low, rule.high + 1))


@dataclass(frozen=True)
class TopologyConfig:
    num_links: Union[int, str, SizeRule]
    interference_radius: float
    seed: int = 0

    def __post_init__(self):
        rule = parse_size_rule(self.num_links)
        object.__setattr__(self, "num_links", rule)
        if not self.interference_radius >= 0:
            raise ValueError("interference_radius must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True, eq=False)
class NetworkDrop:
    """One period's placement of links and its interference graph.

    ``neighbor_sets[k]`` holds the (0-based) indices ``j`` of the
    transmitters that interfere with receiver ``k``.
    """

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    neighbor_sets: tuple
    period_index: int = 0
    interference_radius: float = 0.0
    seed: int = 0
    _adjacency: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tx = np.asarray(self.tx_positions, dtype=float)
        rx = np.asarray(self.rx_positions, dtype=float)
        if tx.ndim != 2 or tx.shape[1] != 2 or tx.shape != rx.shape:
            raise ValueError("tx/rx positions must both be (K, 2) arrays")
        object.__setattr__(self, "tx_positions", tx)
        object.__setattr__(self, "rx_positions", rx)
        K = tx.shape[0]
        sets = tuple(frozenset(int(j) for j in s) for s in self.neighbor_sets)
        if len(sets) != K:
            raise ValueError("need one neighbor set per link")
        adj = np.zeros((K, K), dtype=bool)
        for k, s in enumerate(sets):
            if k in s:
                raise ValueError(f"link {k} listed as its own interferer")
            for j in s:
                adj[j, k] = True
        object.__setattr__(self, "neighbor_sets", sets)
        object.__setattr__(self, "_adjacency", adj)

    @property
    def num_links(self) -> int:
        return self.tx_positions.shape[0]

    @property
    def adjacency(self) -> np.ndarray:
        """Boolean ``(K, K)`` mask, entry ``[j, k]`` true iff ``j`` interferes with ``k``."""
        return self._adjacency.copy()

    def cross_distances(self) -> np.ndarray:
        """``D[j, k] = ||Tx_j - Rx_k||``."""
        diff = self.tx_positions[:, None, :] - self.rx_positions[None, :, :]
        return np.sqrt(np.sum(diff * diff, axis=-1))

    def __eq__(self, other):
        if not isinstance(other, NetworkDrop):
            return NotImplemented
        return (
            np.array_equal(self.tx_positions, other.tx_positions)
            and np.array_equal(self.rx_positions, other.rx_positions)
            and self.neighbor_sets == other.neighbor_sets
            and self.period_index == other.period_index
        )

    __hash__ = None


def neighbor_sets_for_radius(tx: np.ndarray, rx: np.ndarray, radius: float) -> tuple:
    diff = tx[:, None, :] - rx[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    mask = dist <= radius
    np.fill_diagonal(mask, False)
    return tuple(frozenset(np.flatnonzero(mask[:, k]).tolist()) for k in range(tx.shape[0]))


def generate_drop(config: TopologyConfig, period_index: int = 0) -> NetworkDrop:
    """Drop the links of one period.

    The result depends only on ``(config.seed, period_index)`` and the
    radius. Placements never depend on the radius, so sweeping the radius
    with a fixed seed only grows the neighbor sets.
    """
    K = sample_network_size(config.num_links, _mix(config.seed, period_index))
    if K < 1:
        raise ValueError("a drop needs at least one link")
    rng = np.random.default_rng([_PLACE_STREAM, int(config.seed), int(period_index)])
    half = K / 4.0
    while True:
        tx = rng.uniform(-K, K, size=(K, 2))
        rx = tx + rng.uniform(-half, half, size=(K, 2))
        diff = tx[:, None, :] - rx[None, :, :]
        # coincident Tx/Rx pairs give an infinite path-loss gain; redraw
        if np.all(np.sum(diff * diff, axis=-1) > 0):
            break
    return NetworkDrop(
        tx_positions=tx,
        rx_positions=rx,
        neighbor_sets=neighbor_sets_for_radius(tx, rx, config.interference_radius),
        period_index=int(period_index),
        interference_radius=float(config.interference_radius),
        seed=int(config.seed),
    )


def _mix(seed: int, period_index: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(period_index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# -- line-oriented text format ------------------------------------------------


def drop_to_text(drop: NetworkDrop) -> str:
    lines = [f"{drop.num_links} {drop.interference_radius!r} {drop.seed}"]
    for t, r in zip(drop.tx_positions, drop.rx_positions):
        lines.append(" ".join(repr(float(v)) for v in (*t, *r)))
    for k, s in enumerate(drop.neighbor_sets):
        lines.append(f"{k}: " + " ".join(str(j) for j in sorted(s)))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def drop_from_text(text: str, period_index: int = 0) -> NetworkDrop:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty drop file")
    head = lines[0].split()
    if len(head) != 3:
        raise ValueError("drop header must be 'K r seed'")
    K, radius, seed = int(head[0]), float(head[1]), int(head[2])
    if len(lines) != 1 + 2 * K:
        raise ValueError(f"expected {1 + 2 * K} lines for K={K}, got {len(lines)}")
    coords = np.array([[float(v) for v in ln.split()] for ln in lines[1 : 1 + K]])
    if coords.shape != (K, 4):
        raise ValueError("position rows must hold 'txx txy rxx rxy'")
    sets = [None] * K
    for ln in lines[1 + K :]:
        idx, _, rest = ln.partition(":")
        sets[int(idx)] = frozenset(int(j) for j in rest.split())
    if any(s is None for s in sets):
        raise ValueError("missing adjacency rows")
    return NetworkDrop(
        tx_positions=coords[:, :2],
        rx_positions=coords[:, 2:],
        neighbor_sets=tuple(sets),
        period_index=period_index,
        interference_radius=radius,
        seed=seed,
    )


def save_drop(drop: NetworkDrop, path) -> None:
    Path(path).write_text(drop_to_text(drop))


def load_drop(path, period_index: int = 0) -> NetworkDrop:
    return drop_from_text(Path(path).read_text(), period_index=period_index)
