"""Achievable rates (bit/s/Hz) and their gradient with respect to power."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RateReport",
    "squared_gains",
    "link_rate",
    "link_rates",
    "sum_rate",
    "rate_gradient",
    "rates_and_gradient",
]

_INV_LN2 = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class RateReport:
    per_link_rates: np.ndarray  # slot-averaged rate of each link
    sum_rate: float  # slot-averaged sum over links
    per_slot_sum_rates: np.ndarray


def squared_gains(H):
    """Split ``|H|^2`` into direct gains ``(..., K)`` and cross gains ``(..., K, K)``.

    The cross-gain matrix has a zero diagonal.
    """
    G = np.square(np.asarray(H, dtype=float))
    K = G.shape[-1]
    direct = np.diagonal(G, axis1=-2, axis2=-1).copy()
    G[..., np.arange(K), np.arange(K)] = 0.0
    return direct, G


def _check_power(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("transmit powers must be nonnegative")
    return p


def _terms(direct, cross, p, noise_power):
    interference = np.matmul(p[..., None, :], cross)[..., 0, :]
    denom = noise_power + interference
    signal = direct * p
    return signal, denom


def _rates(signal, denom):
    return np.log2(1.0 + signal / denom)


def _gradient(direct, cross, signal, denom):
    # p_j raises its own rate via G_jj / T_j and lowers each victim k
    # it reaches by G_jk S_k / (T_k D_k), with T = D + S
    total = denom + signal
    own = direct / total
    cross_term = np.matmul(cross, (signal / (total * denom))[..., None])[..., 0]
    return _INV_LN2 * (own - cross_term)


def link_rates(H, p, noise_power) -> np.ndarray:
    """Rates of all links, broadcasting over leading batch dimensions."""
    p = _check_power(p)
    direct, cross = squared_gains(H)
    return _rates(*_terms(direct, cross, p, noise_power))


def link_rate(H, p, k: int, noise_power: float) -> float:
    """``log2(1 + |h_kk|^2 p_k / (noise + sum_{j != k} |h_jk|^2 p_j))``."""
    p = _check_power(p)
    H = np.asarray(H, dtype=float)
    col = np.square(H[:, k])
    interference = float(np.dot(np.delete(col, k), np.delete(p, k)))
    return float(np.log2(1.0 + col[k] * p[k] / (noise_power + interference)))


def sum_rate(H_slots, policy_outputs, noise_power: float) -> RateReport:
    """Sum rate over links, averaged over slots."""
    H_slots = np.asarray(H_slots, dtype=float)
    P = np.asarray(policy_outputs, dtype=float)
    if H_slots.ndim == 2:
        H_slots, P = H_slots[None], P[None]
    if H_slots.shape[0] == 0:
        raise ValueError("sum_rate needs at least one slot")
    if H_slots.shape[0] != P.shape[0]:
        raise ValueError("channel and power sequences differ in length")
    rates = link_rates(H_slots, P, noise_power)
    per_slot = rates.sum(axis=-1)
    return RateReport(
        per_link_rates=rates.mean(axis=0),
        sum_rate=float(per_slot.mean()),
        per_slot_sum_rates=per_slot,
    )


def rate_gradient(H, p, noise_power) -> np.ndarray:
    """Closed-form gradient of the sum of link rates with respect to ``p``."""
    return rates_and_gradient(H, p, noise_power)[1]


def rates_and_gradient(H, p, noise_power, gains=None):
    """Link rates and the sum-rate gradient in one pass.

    ``gains`` may carry a precomputed :func:`squared_gains` of ``H``.
    """
    p = _check_power(p)
    direct, cross = squared_gains(H) if gains is None else gains
    signal, denom = _terms(direct, cross, p, noise_power)
    return _rates(signal, denom), _gradient(direct, cross, signal, denom)
