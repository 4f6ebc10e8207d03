"""Per-slot channel matrices for a network drop.

Entry ``[j, k]`` of a channel matrix is the magnitude of the channel from
transmitter ``j`` to receiver ``k``: a constant path-loss gain times an
i.i.d. Rayleigh fast-fading draw. Pairs outside the interference graph are
exactly zero. Powers are kept in linear milliwatts.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .topology import NetworkDrop

__all__ = [
    "dbm_to_mw",
    "mw_to_dbm",
    "ChannelConfig",
    "ChannelEpisode",
    "pathloss_gain",
    "pathloss_matrix",
    "sample_episode",
    "split_episode",
    "save_episode",
    "load_episode",
]


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw)


@dataclass(frozen=True)
class ChannelConfig:
    pathloss_exponent: float = 2.2
    rayleigh_scale: float = 1.0
    noise_power: float = dbm_to_mw(-70.0)
    max_power: float = dbm_to_mw(-35.0)
    slots: int = 400
    seed: int = 0

    def __post_init__(self):
        for name in ("pathloss_exponent", "rayleigh_scale", "noise_power", "max_power"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value!r}")
        if int(self.slots) < 1:
            raise ValueError("slots must be >= 1")


@dataclass(frozen=True, eq=False)
class ChannelEpisode:
    """Channel matrices ``(T, K, K)`` of one period plus its slot split.

    Slot indices are 0-based positions into ``matrices``.
    """

    matrices: np.ndarray
    train_slots: np.ndarray
    test_slots: np.ndarray
    config: ChannelConfig = field(default_factory=ChannelConfig)
    drop: Optional[NetworkDrop] = None

    def __post_init__(self):
        H = np.asarray(self.matrices, dtype=float)
        if H.ndim != 3 or H.shape[1] != H.shape[2]:
            raise ValueError("matrices must have shape (T, K, K)")
        train = np.asarray(self.train_slots, dtype=np.int64).reshape(-1)
        test = np.asarray(self.test_slots, dtype=np.int64).reshape(-1)
        T = H.shape[0]
        for name, idx in (("train", train), ("test", test)):
            if idx.size and (idx.min() < 0 or idx.max() >= T):
                raise ValueError(f"{name} slot index out of range for T={T}")
        if np.intersect1d(train, test).size:
            raise ValueError("train and test slots overlap")
        H.setflags(write=False)
        object.__setattr__(self, "matrices", H)
        object.__setattr__(self, "train_slots", train)
        object.__setattr__(self, "test_slots", test)

    @property
    def num_links(self) -> int:
        return self.matrices.shape[1]

    @property
    def num_slots(self) -> int:
        return self.matrices.shape[0]

    @property
    def p_max(self) -> np.ndarray:
        return np.full(self.num_links, self.config.max_power)

    @cached_property
    def normalized(self) -> np.ndarray:
        """Per-slot normalized matrices fed to the REGNN."""
        from .regnn import normalize_channel

        Hn, _ = normalize_channel(self.matrices)
        Hn.setflags(write=False)
        return Hn

    @cached_property
    def squared_gains(self):
        """``(direct, cross)`` squared magnitudes used by the rate objective."""
        from .objective import squared_gains

        direct, cross = squared_gains(self.matrices)
        direct.setflags(write=False)
        cross.setflags(write=False)
        return direct, cross


def pathloss_gain(tx_point, rx_point, gamma: float) -> float:
    """``||tx - rx||^(-gamma)``; coincident points are rejected."""
    d = float(np.linalg.norm(np.asarray(tx_point, float) - np.asarray(rx_point, float)))
    if d <= 0.0:
        raise ValueError("coincident transmitter and receiver: path loss is singular")
    return d ** (-gamma)


def pathloss_matrix(drop: NetworkDrop, gamma: float) -> np.ndarray:
    """Path-loss gains on the direct links and interference edges, zero elsewhere.

    The ``j -> k`` gain uses ``||Tx_j - Rx_k||``.
    """
    dist = drop.cross_distances()
    mask = drop.adjacency
    np.fill_diagonal(mask, True)
    if np.any(dist[mask] <= 0):
        raise ValueError("coincident transmitter and receiver: path loss is singular")
    gains = np.zeros_like(dist)
    gains[mask] = dist[mask] ** (-gamma)
    return gains


def sample_episode(
    drop: NetworkDrop,
    config: ChannelConfig,
    n_train: Optional[int] = None,
    n_test: int = 0,
) -> ChannelEpisode:
    """Draw ``config.slots`` fading realizations on top of the drop's path loss.

    Without ``n_train`` every slot lands in the training split.
    """
    gains = pathloss_matrix(drop, config.pathloss_exponent)
    rng = np.random.default_rng([int(config.seed), int(drop.seed), int(drop.period_index)])
    K = drop.num_links
    fading = rng.rayleigh(scale=config.rayleigh_scale, size=(config.slots, K, K))
    episode = ChannelEpisode(
        matrices=gains[None, :, :] * fading,
        train_slots=np.arange(config.slots),
        test_slots=np.arange(0),
        config=config,
        drop=drop,
    )
    if n_train is not None:
        episode = split_episode(episode, n_train, n_test)
    return episode


def split_episode(episode: ChannelEpisode, n_train: int, n_test: int) -> ChannelEpisode:
    """First ``n_train`` slots train, the next ``n_test`` test.

    Slots are i.i.d., so a contiguous split is as good as a random one.
    """
    if n_train < 0 or n_test < 0:
        raise ValueError("split sizes must be nonnegative")
    if n_train + n_test > episode.num_slots:
        raise ValueError(
            f"cannot split {episode.num_slots} slots into {n_train} train + {n_test} test"
        )
    return replace(
        episode,
        train_slots=np.arange(n_train),
        test_slots=np.arange(n_train, n_train + n_test),
    )


# -- binary container ---------------------------------------------------------
# header: K, T (int64), seed (uint64), gamma, alpha, noise, p_max (float64),
# all little-endian; then T row-major K x K float64 matrices.

_HEADER = struct.Struct("<qqQdddd")


def save_episode(episode: ChannelEpisode, path) -> None:
    cfg = episode.config
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                episode.num_links,
                episode.num_slots,
                int(cfg.seed),
                cfg.pathloss_exponent,
                cfg.rayleigh_scale,
                cfg.noise_power,
                cfg.max_power,
            )
        )
        fh.write(np.ascontiguousarray(episode.matrices, dtype="<f8").tobytes())


def load_episode(path, drop: Optional[NetworkDrop] = None) -> ChannelEpisode:
    """Read an episode back; every slot is placed in the training split."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated episode header")
    K, T, seed, gamma, alpha, noise, pmax = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size :]
    if K < 1 or T < 1 or len(body) != 8 * T * K * K:
        raise ValueError("episode body does not match header dimensions")
    H = np.frombuffer(body, dtype="<f8").reshape(T, K, K).astype(float)
    cfg = ChannelConfig(gamma, alpha, noise, pmax, T, seed)
    return ChannelEpisode(H, np.arange(T), np.arange(0), config=cfg, drop=drop)
