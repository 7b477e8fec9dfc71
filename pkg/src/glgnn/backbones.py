"""GCN, GAT and GCNII layers expressed over the tape ops.

Weights act on the channel axis from the right: features are ``n x c`` and a
layer computes ``f @ K``.
"""
from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from .config import BackboneConfig
from .errors import ConfigError, DimensionError
from .graph import Graph
from .tensor import (SparseMatrix, Var, add, as_var, add_bias, dropout, gather_rows, leaky_relu,
                     matmul, relu, scale, segment_softmax, slice_rows, spmm)


def _check_square(f: Var, K: Var, op: str):
    if K.shape != (f.shape[1], f.shape[1]):
        raise DimensionError(f"{op}: weight {K.shape} does not match features {f.shape}")


def embed(f_in, W, b, p: float, training: bool, rng=None) -> Var:
    """Opening layer: ReLU(dropout(f_in) @ W + b).

    ``f_in`` may be a :class:`SparseMatrix`; dropout then acts on the stored
    entries only, which is equivalent since dropped zeros stay zero.
    """
    if isinstance(f_in, SparseMatrix):
        vals = dropout(f_in.values.reshape(-1, 1), p, training, rng)
        return relu(add_bias(spmm(f_in, W, vals), b))
    x = dropout(f_in, p, training, rng)
    return relu(add_bias(matmul(x, W), b))


def gcn_layer(f, P: SparseMatrix, K, p: float, training: bool, rng=None) -> Var:
    """ReLU(P @ dropout(f) @ K)."""
    f = as_var(f)
    K = as_var(K)
    _check_square(f, K, "gcn_layer")
    x = dropout(f, p, training, rng)
    return relu(matmul(spmm(P, x), K))


def gat_coefficients(f, pattern: SparseMatrix, Kt, a, slope: float = 0.2) -> Var:
    """Attention weights on the stored entries of ``pattern`` (A + I).

    Returns an nnz x 1 column aligned with ``pattern.col_indices``; each CSR row
    of it is a softmax over the node's neighborhood including itself.
    """
    h = matmul(f, Kt)
    c = h.shape[1]
    a = as_var(a)
    if a.shape != (2 * c, 1):
        raise DimensionError(f"gat_coefficients: score vector must be ({2 * c}, 1), got {a.shape}")
    a_self = slice_rows(a, 0, c)
    a_nbr = slice_rows(a, c, 2 * c)
    src = matmul(h, a_self)
    dst = matmul(h, a_nbr)
    scores = leaky_relu(add(gather_rows(src, pattern.row_ids), gather_rows(dst, pattern.col_indices)), slope)
    return segment_softmax(scores, pattern.row_offsets)


def gat_layer(f, S: SparseMatrix, S_values, K, p: float, training: bool, rng=None) -> Var:
    """ReLU(S @ dropout(f) @ K) with S's values taken from ``S_values``."""
    f = as_var(f)
    K = as_var(K)
    _check_square(f, K, "gat_layer")
    x = dropout(f, p, training, rng)
    return relu(matmul(spmm(S, x, S_values), K))


def gcnii_propagate(f, f0, P: SparseMatrix, alpha: float) -> Var:
    """(1 - alpha) P f + alpha f0."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"GCNII alpha must lie in [0, 1], got {alpha}")
    return add(scale(spmm(P, f), 1.0 - alpha), scale(f0, alpha))


def gcnii_beta(layer: int, lam: float) -> float:
    """Identity-mapping strength for 1-based layer index: ln(lam / layer + 1)."""
    return math.log(lam / layer + 1.0)


def gcnii_layer(f, f0, P: SparseMatrix, K, alpha: float, beta: float, p: float,
                training: bool, rng=None) -> Var:
    """ReLU(beta * S @ K + (1 - beta) * S) with S the initial-residual propagation."""
    if not 0.0 <= beta <= 1.0:
        raise ConfigError(f"GCNII beta must lie in [0, 1], got {beta}")
    f = as_var(f)
    K = as_var(K)
    _check_square(f, K, "gcnii_layer")
    x = dropout(f, p, training, rng)
    S = gcnii_propagate(x, f0, P, alpha)
    return relu(add(scale(matmul(S, K), beta), scale(S, 1.0 - beta)))


def run_backbone(cfg: BackboneConfig, params: Mapping[str, Var], graph: Graph, f_in,
                 training: bool, rng: Optional[np.random.Generator] = None) -> tuple[Var, Var]:
    """Embedding followed by ``cfg.layers`` backbone layers; returns (f0, fL)."""
    p = cfg.dropout
    f0 = embed(f_in, params["embed.W"], params["embed.b"], p, training, rng)
    f = f0
    P = graph.propagation
    for l in range(cfg.layers):
        K = params[f"gnn.{l}.K"]
        if cfg.kind == "gcn":
            f = gcn_layer(f, P, K, p, training, rng)
        elif cfg.kind == "gat":
            pattern = graph.attention_pattern
            alpha = gat_coefficients(f, pattern, params[f"gnn.{l}.Kt"], params[f"gnn.{l}.a"], cfg.leaky_slope)
            f = gat_layer(f, pattern, alpha, K, p, training, rng)
        elif cfg.kind == "gcnii":
            f = gcnii_layer(f, f0, P, K, cfg.alpha, gcnii_beta(l + 1, cfg.lam), p, training, rng)
        else:
            raise ConfigError(f"unknown backbone {cfg.kind!r}")
    return f0, f
