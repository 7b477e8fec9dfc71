"""Global label features and the node-label prediction map.

The head turns the backbone output into class scores by way of one learned
vector per class:

* a graph-wide readout ``s`` (column max over a ReLU'd affine map of the
  concatenated embedding and final node features),
* ``k`` independent expand/shrink MLPs mapping ``s`` to label features ``g``,
* node-label scores ``z = fL @ g.T`` and ``y_hat = softmax(z)`` per row.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError
from .tensor import (Var, add_bias, as_var, col_max_pool, col_sum, concat_cols, concat_rows,
                     matmul, relu, row_softmax, transpose)


def global_readout(f0, fL, Wg, bg) -> Var:
    """1 x c readout: column max of ReLU([f0 | fL] @ Wg + bg)."""
    f0, fL = as_var(f0), as_var(fL)
    if f0.shape[0] != fL.shape[0]:
        raise DimensionError(f"global_readout: row mismatch {f0.shape} vs {fL.shape}")
    return col_max_pool(relu(add_bias(matmul(concat_cols(f0, fL), Wg), bg)))


def label_features(s, We: Sequence, be: Sequence, Ws: Sequence, bs: Sequence) -> Var:
    """Stack ``g_q = relu(s @ We[q] + be[q]) @ Ws[q] + bs[q]`` into a k x c matrix."""
    if not (len(We) == len(be) == len(Ws) == len(bs)) or not We:
        raise DimensionError("label_features: need the same non-zero number of blocks per class")
    rows = [add_bias(matmul(relu(add_bias(matmul(s, We[q]), be[q])), Ws[q]), bs[q]) for q in range(len(We))]
    return concat_rows(rows)


def correspondence(fL, g) -> Var:
    fL, g = as_var(fL), as_var(g)
    if fL.shape[1] != g.shape[1]:
        raise DimensionError(f"correspondence: feature width {fL.shape[1]} vs label width {g.shape[1]}")
    return matmul(fL, transpose(g))


def predict(z) -> Var:
    return row_softmax(z)


def graph_add_pool(fL) -> Var:
    """Sum of node features, for graph-level readout."""
    return col_sum(fL)


def head_params(params, k: int) -> tuple:
    We = [params[f"head.We.{q}"] for q in range(k)]
    be = [params[f"head.be.{q}"] for q in range(k)]
    Ws = [params[f"head.Ws.{q}"] for q in range(k)]
    bs = [params[f"head.bs.{q}"] for q in range(k)]
    return We, be, Ws, bs


def run_head(params, f0, fL, k: int) -> tuple[Var, Var]:
    """Returns (y_hat, g)."""
    s = global_readout(f0, fL, params["head.Wg"], params["head.bg"])
    g = label_features(s, *head_params(params, k))
    return predict(correspondence(fL, g)), g


def run_linear_head(params, fL) -> Var:
    """Plain classifier used for the baseline backbone: softmax(fL @ W + b)."""
    return row_softmax(add_bias(matmul(fL, params["out.W"]), params["out.b"]))


# --------------------------------------------------------------------------- export


def write_matrix_text(path, m) -> None:
    """``# rows cols`` header, then one comma-separated row per line."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got {m.shape}")
    lines = [f"# {m.shape[0]} {m.shape[1]}"]
    lines += [",".join(format(x, ".17g") for x in row) for row in m]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_text(path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    rows, cols = (int(t) for t in lines[0].lstrip("#").split())
    if rows == 0 or cols == 0:
        return np.zeros((rows, cols))
    data = np.array([[float(x) for x in line.split(",")] for line in lines[1:1 + rows]])
    return data.reshape(rows, cols)


def export_embeddings(out_dir, fL, g) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    nodes, labels = out / "node_features.csv", out / "label_features.csv"
    write_matrix_text(nodes, as_var(fL).value)
    write_matrix_text(labels, as_var(g).value)
    return nodes, labels
