"""Masked cross-entropy, the global-local prototype loss and their weighted sum."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import LossConfig
from .errors import ContractError, DimensionError
from .tensor import Var, add, as_var, record_op, scale

LOG_FLOOR = 1e-12


def _mask_index(mask, n: int) -> np.ndarray:
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64).ravel()
    if idx.size == 0:
        raise ContractError("loss mask selects no nodes")
    if idx.min() < 0 or idx.max() >= n:
        raise ContractError("loss mask index out of range")
    return idx


def cross_entropy(y_hat, y, mask) -> Var:
    """-mean over masked nodes of log(max(y_hat[i, y_i], 1e-12))."""
    y_hat = as_var(y_hat)
    n, k = y_hat.shape
    idx = _mask_index(mask, n)
    lab = np.asarray(y, dtype=np.int64)[idx]
    if lab.min() < 0 or lab.max() >= k:
        raise ContractError("masked node has no valid label")
    picked = y_hat.value[idx, lab]
    clamped = np.maximum(picked, LOG_FLOOR)
    m = idx.size
    value = np.array([[-np.log(clamped).sum() / m]])

    def backward(g):
        grad = np.zeros((n, k))
        live = picked > LOG_FLOOR
        np.add.at(grad, (idx[live], lab[live]), -g[0, 0] / (m * picked[live]))
        return (grad,)

    return record_op(value, (y_hat,), backward, "cross_entropy")


def global_local_loss(g, fL, y, mask, r: float) -> Var:
    """Attract masked nodes to their own class vector, repel them from the others.

    sum_q [ sum_{y_i = q} |g_q - f_i|^2 - sum_{y_i != q} min(|g_q - f_i|^2, r) ]
    over masked nodes, with no averaging.
    """
    g, fL = as_var(g), as_var(fL)
    k, c = g.shape
    n = fL.shape[0]
    if fL.shape[1] != c:
        raise DimensionError(f"global_local_loss: node width {fL.shape[1]} vs label width {c}")
    idx = _mask_index(mask, n)
    lab = np.asarray(y, dtype=np.int64)[idx]
    if lab.min() < 0 or lab.max() >= k:
        raise ContractError("masked node has no valid label")
    F = fL.value[idx]
    G = g.value
    diff = G[None, :, :] - F[:, None, :]            # m x k x c
    dist = np.einsum("mkc,mkc->mk", diff, diff)
    own = np.zeros(dist.shape, dtype=bool)
    own[np.arange(idx.size), lab] = True
    attract = dist[own].sum()
    repel = np.minimum(dist[~own], r).sum()
    value = np.array([[attract - repel]])
    # d(loss)/d(dist): +1 own class, -1 other classes below the cut-off, 0 once clamped
    w = np.where(own, 1.0, np.where(dist < r, -1.0, 0.0))

    def backward(gr):
        s = gr[0, 0]
        wd = w[:, :, None] * diff                    # m x k x c
        gg = 2.0 * s * wd.sum(axis=0)
        gf = np.zeros((n, c))
        np.add.at(gf, idx, -2.0 * s * wd.sum(axis=1))
        return gg, gf

    return record_op(value, (g, fL), backward, "global_local_loss")


@dataclass
class LossTerms:
    total: Var
    ce: Var
    gl: Optional[Var]
    gl_per_node: float


def total_loss(y_hat, g, fL, y, mask, cfg: LossConfig) -> LossTerms:
    """CE + gamma * GL. With gamma = 0 (or no label features) the total is the CE node itself."""
    ce = cross_entropy(y_hat, y, mask)
    if g is None:
        return LossTerms(ce, ce, None, float("nan"))
    gl = global_local_loss(g, fL, y, mask, cfg.r)
    m = _mask_index(mask, as_var(fL).shape[0]).size
    total = ce if cfg.gamma == 0 else add(ce, scale(gl, cfg.gamma))
    return LossTerms(total, ce, gl, gl.item() / m)
