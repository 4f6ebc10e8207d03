"""Random-edge GNN power policy with hand-written reverse-mode gradients.

Each layer applies a polynomial graph filter ``sum_m phi[l, m] H^m z`` to its
input. Hidden layers use ReLU; the last layer uses a logistic sigmoid scaled
componentwise by the per-link power budget. The input signal is all ones.

All functions broadcast over leading batch dimensions: ``H`` may be
``(K, K)`` or ``(..., K, K)`` with matching ``(..., K)`` vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

__all__ = [
    "NumericalError",
    "RegnnParams",
    "ForwardTrace",
    "init_params",
    "graph_conv",
    "normalize_channel",
    "forward",
    "backward",
    "policy",
    "save_params",
    "load_params",
    "params_to_text",
    "params_from_text",
]


class NumericalError(ArithmeticError):
    """A forward/backward pass or training step produced non-finite values."""


@dataclass(frozen=True, eq=False)
class RegnnParams:
    """Filter taps ``taps[l, m]`` for layer ``l`` and matrix power ``m + 1``."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=float)
        if taps.ndim != 2 or taps.shape[0] < 1 or taps.shape[1] < 1:
            raise ValueError("taps must be a nonempty (L, M) matrix")
        if not np.all(np.isfinite(taps)):
            raise ValueError("taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def layers(self) -> int:
        return self.taps.shape[0]

    @property
    def filter_order(self) -> int:
        return self.taps.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RegnnParams):
            return NotImplemented
        return np.array_equal(self.taps, other.taps)

    __hash__ = None


def init_params(layers: int = 2, filter_order: int = 4, seed=None) -> RegnnParams:
    """I.i.d. uniform taps in ``[-1/sqrt(M), 1/sqrt(M)]``."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / math.sqrt(filter_order)
    return RegnnParams(rng.uniform(-bound, bound, size=(layers, filter_order)))


def _matvec(H, x):
    return np.matmul(H, x[..., None])[..., 0]


def _rmatvec(H, x):
    return np.matmul(x[..., None, :], H)[..., 0, :]


def _check_shapes(H, x):
    H = np.asarray(H, dtype=float)
    x = np.asarray(x, dtype=float)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ValueError(f"channel matrix must be square, got shape {H.shape}")
    if x.shape[-1] != H.shape[-1]:
        raise ValueError(f"signal length {x.shape[-1]} does not match K={H.shape[-1]}")
    return H, x


def graph_conv(taps_row, H, x) -> np.ndarray:
    """Return ``sum_m taps_row[m] H^(m+1) x`` without forming matrix powers."""
    H, x = _check_shapes(H, x)
    taps_row = np.asarray(taps_row, dtype=float).reshape(-1)
    y = x
    out = np.zeros(np.broadcast_shapes(H.shape[:-1], x.shape))
    for phi in taps_row:
        y = _matvec(H, y)
        out = out + phi * y
    return out


def _powers(H, x, order):
    """Stack ``[H x, H^2 x, ..., H^order x]`` along axis -2."""
    ys = []
    y = x
    for _ in range(order):
        y = _matvec(H, y)
        ys.append(y)
    return np.stack(ys, axis=-2)


def normalize_channel(H):
    """Scale each matrix by its largest absolute row sum.

    The scale bounds the spectral radius, so ``||(H/s)^m x||_inf <= ||x||_inf``.
    All-zero matrices come back unchanged with scale 1.

    Returns
    -------
    (H_norm, scale) : with ``scale`` of shape ``H.shape[:-2]``.
    """
    H = np.asarray(H, dtype=float)
    scale = np.max(np.sum(np.abs(H), axis=-1), axis=-1)
    scale = np.where(scale > 0, scale, 1.0)
    return H / scale[..., None, None], scale


def _sigmoid(u):
    # split by sign so neither branch overflows
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediate values of one forward pass, kept for :func:`backward`.

    ``matrix_powers[l]`` has shape ``(..., M, K)`` and row ``m`` holds
    ``H^(m+1) z_l``.
    """

    layer_inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    matrix_powers: List[np.ndarray]
    output: np.ndarray
    p_max: np.ndarray


def _taps_of(params):
    return params.taps if isinstance(params, RegnnParams) else np.asarray(params, dtype=float)


def _row(taps, l, batch_ndim):
    # taps[..., l, :] shaped to broadcast against (..., *batch, M, K)
    t = taps[..., l, :]
    return t.reshape(t.shape[:-1] + (1,) * batch_ndim + (t.shape[-1], 1))


def forward(params: RegnnParams, H, p_max) -> ForwardTrace:
    """Run the policy on (normalized) channel matrices.

    ``params`` may also be a raw tap array of shape ``(*P, L, M)``; its
    leading dims ``P`` then index the leading dims of ``H``, one tap matrix
    per group of slots.
    """
    H = np.asarray(H, dtype=float)
    if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
        raise ValueError(f"channel matrix must be square, got shape {H.shape}")
    p_max = np.asarray(p_max, dtype=float)
    if np.any(p_max <= 0):
        raise ValueError("p_max must be positive")
    taps = _taps_of(params)
    L, M = taps.shape[-2:]
    batch_ndim = H.ndim - 2 - (taps.ndim - 2)
    if batch_ndim < 0 or H.shape[: taps.ndim - 2] != taps.shape[:-2]:
        raise ValueError("tap batch dims do not lead the channel batch dims")
    z = np.ones(H.shape[:-1])
    inputs, pre, powers = [], [], []
    for l in range(L):
        # overflow is reported below as a NumericalError, not a warning
        with np.errstate(over="ignore", invalid="ignore"):
            Y = _powers(H, z, M)
            u = np.sum(_row(taps, l, batch_ndim) * Y, axis=-2)
        if not np.all(np.isfinite(u)):
            raise NumericalError(
                f"non-finite pre-activation in layer {l + 1}; is the channel normalized?"
            )
        inputs.append(z)
        powers.append(Y)
        pre.append(u)
        z = np.maximum(u, 0.0) if l < L - 1 else _sigmoid(u)
    return ForwardTrace(inputs, pre, powers, p_max * z, p_max)


def policy(params: RegnnParams, H, p_max) -> np.ndarray:
    """Power allocation for raw channel matrices (normalizes internally)."""
    Hn, _ = normalize_channel(H)
    return forward(params, Hn, p_max).output


def backward(trace: ForwardTrace, params: RegnnParams, H, grad_wrt_power) -> np.ndarray:
    """Gradient of a scalar loss with respect to the taps.

    ``grad_wrt_power`` is the loss gradient with respect to the output
    powers, shaped like ``trace.output``. Contributions of every batch entry
    are summed into one ``(L, M)`` matrix, or into ``(*P, L, M)`` when
    ``params`` is a batched tap array (see :func:`forward`).
    """
    H = np.asarray(H, dtype=float)
    taps = _taps_of(params)
    L, M = taps.shape[-2:]
    if len(trace.pre_activations) != L or trace.matrix_powers[0].shape[-2] != M:
        raise ValueError("trace was produced with different parameters")
    g = np.asarray(grad_wrt_power, dtype=float)
    if g.shape != trace.output.shape:
        raise ValueError(f"gradient shape {g.shape} != output shape {trace.output.shape}")
    n_lead = taps.ndim - 2
    batch_ndim = H.ndim - 2 - n_lead
    reduce_axes = tuple(range(n_lead, n_lead + batch_ndim)) + (-1,)
    grad = np.zeros(taps.shape)
    s = trace.output / trace.p_max
    u_bar = g * trace.p_max * s * (1.0 - s)
    for l in range(L - 1, -1, -1):
        Y = trace.matrix_powers[l]
        grad[..., l, :] = np.sum(u_bar[..., None, :] * Y, axis=reduce_axes)
        if l == 0:
            break
        # adjoint of sum_m phi_m H^m z, Horner form in H^T
        row = _row(taps, l, batch_ndim)[..., 0]
        acc = row[..., M - 1 : M] * u_bar
        for m in range(M - 2, -1, -1):
            acc = row[..., m : m + 1] * u_bar + _rmatvec(H, acc)
        z_bar = _rmatvec(H, acc)
        u_bar = z_bar * (trace.pre_activations[l - 1] > 0)
    return grad


# -- checkpoints --------------------------------------------------------------

_CKPT_MAGIC = "regnn-ckpt"
_CKPT_VERSION = "v1"


def params_to_text(params: RegnnParams) -> str:
    L, M = params.taps.shape
    rows = [f"{_CKPT_MAGIC} {_CKPT_VERSION} {L} {M}"]
    rows += [" ".join(repr(float(v)) for v in row) for row in params.taps]
    return "\n".join(rows) + "\n"


def params_from_text(text: str) -> RegnnParams:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty checkpoint")
    head = lines[0].split()
    if len(head) != 4 or head[0] != _CKPT_MAGIC:
        raise ValueError(f"not a REGNN checkpoint: {lines[0]!r}")
    if head[1] != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {head[1]!r}")
    L, M = int(head[2]), int(head[3])
    if len(lines) != 1 + L:
        raise ValueError(f"expected {L} tap rows, found {len(lines) - 1}")
    taps = np.array([[float(v) for v in ln.split()] for ln in lines[1:]])
    if taps.shape != (L, M):
        raise ValueError(f"tap rows do not form an {L}x{M} matrix")
    return RegnnParams(taps)


def save_params(params: RegnnParams, path) -> None:
    Path(path).write_text(params_to_text(params))


def load_params(path) -> RegnnParams:
    return params_from_text(Path(path).read_text())
