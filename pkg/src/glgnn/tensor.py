"""Dense/CSR matrix algebra and a small reverse-mode autodiff tape.

Dense matrices are plain 2-D ``float64`` numpy arrays. Sparse matrices use the
CSR triple held by :class:`SparseMatrix`. Differentiable values are wrapped in
:class:`Var`; every op that touches a taped ``Var`` appends one node to that
``Var``'s :class:`Tape`, and :meth:`Tape.backward` walks the nodes in reverse.

Ops also accept bare arrays. When none of the inputs lives on a tape the op is
evaluated eagerly and returns an untaped constant ``Var``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractError, DimensionError, EmptyInputError, NumericError

DenseMatrix = np.ndarray


def as_dense(x, what: str = "matrix") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{what} must be 2-D, got shape {arr.shape}")
    return arr


# --------------------------------------------------------------------------- sparse


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ro = np.asarray(self.row_offsets, dtype=np.int64)
        ci = np.asarray(self.col_indices, dtype=np.int64)
        va = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "row_offsets", ro)
        object.__setattr__(self, "col_indices", ci)
        object.__setattr__(self, "values", va)
        if self.rows < 0 or self.cols < 0:
            raise DimensionError(f"negative sparse shape ({self.rows}, {self.cols})")
        if ro.shape != (self.rows + 1,) or ro[0] != 0 or ro[-1] != ci.size:
            raise DimensionError("row_offsets must have length rows+1, start at 0 and end at nnz")
        if va.shape != ci.shape:
            raise DimensionError("col_indices and values differ in length")
        if np.any(np.diff(ro) < 0):
            raise DimensionError("row_offsets must be monotone")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.cols:
                raise DimensionError("column index out of range")
            rid = np.repeat(np.arange(self.rows), np.diff(ro))
            same_row = rid[1:] == rid[:-1]
            if np.any(np.diff(ci)[same_row] <= 0):
                raise DimensionError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(va)):
            raise NumericError("sparse matrix holds non-finite values")

    @classmethod
    def from_coo(cls, rows: int, cols: int, r, c, v=None) -> "SparseMatrix":
        """Build a CSR matrix from coordinate triples. Duplicate coordinates
        collapse to the first occurrence's value."""
        r = np.asarray(r, dtype=np.int64).ravel()
        c = np.asarray(c, dtype=np.int64).ravel()
        v = np.ones(r.size) if v is None else np.asarray(v, dtype=np.float64).ravel()
        if not (r.size == c.size == v.size):
            raise DimensionError("coordinate arrays differ in length")
        if r.size and (r.min() < 0 or r.max() >= rows or c.min() < 0 or c.max() >= cols):
            raise DimensionError(f"coordinate out of range for shape ({rows}, {cols})")
        order = np.lexsort((c, r))
        r, c, v = r[order], c[order], v[order]
        if r.size:
            keep = np.ones(r.size, dtype=bool)
            keep[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
            r, c, v = r[keep], c[keep], v[keep]
        offsets = np.zeros(rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(r, minlength=rows), out=offsets[1:])
        return cls(rows, cols, offsets, c, v)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    @classmethod
    def from_dense(cls, m) -> "SparseMatrix":
        m = as_dense(m)
        r, c = np.nonzero(m)
        return cls.from_coo(m.shape[0], m.shape[1], r, c, m[r, c])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    @cached_property
    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry (COO rows)."""
        return np.repeat(np.arange(self.rows), np.diff(self.row_offsets))

    def with_values(self, values) -> "SparseMatrix":
        return SparseMatrix(self.rows, self.cols, self.row_offsets, self.col_indices,
                            np.asarray(values, dtype=np.float64).ravel())

    def to_scipy(self, values=None) -> sp.csr_matrix:
        v = self.values if values is None else np.asarray(values, dtype=np.float64).ravel()
        return sp.csr_matrix((v, self.col_indices, self.row_offsets), shape=self.shape)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return self.to_scipy()

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.row_ids, self.col_indices] = self.values
        return out

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_coo(self.cols, self.rows, self.col_indices, self.row_ids, self.values)

    def equals(self, other: "SparseMatrix") -> bool:
        return (self.shape == other.shape
                and np.array_equal(self.row_offsets, other.row_offsets)
                and np.array_equal(self.col_indices, other.col_indices)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"SparseMatrix(shape={self.shape}, nnz={self.nnz})"


# --------------------------------------------------------------------------- tape


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Var:
    """A value on (or off) a tape. ``grad`` is filled by :meth:`Tape.backward`."""

    __slots__ = ("value", "grad", "tape", "parents", "backward_fn", "requires_grad", "name", "op")
    __array_priority__ = 1000

    def __init__(self, value, tape=None, parents=(), backward_fn=None,
                 requires_grad=False, name=None, op="const"):
        self.value = value
        self.grad = None
        self.tape = tape
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Var<{self.op}{label} {self.shape}>"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])


class Tape:
    """Append-only record of differentiable ops in topological order."""

    def __init__(self):
        self.nodes: list[Var] = []
        self._consumed = False

    def param(self, value, name: str) -> Var:
        """Register a trainable leaf. The array is used as-is, not copied."""
        v = Var(np.asarray(value, dtype=np.float64), tape=self, requires_grad=True, name=name, op="param")
        self.nodes.append(v)
        return v

    def record(self, value, parents, backward_fn, op) -> Var:
        v = Var(value, tape=self, parents=parents, backward_fn=backward_fn, requires_grad=True, op=op)
        self.nodes.append(v)
        return v

    def reset(self):
        for node in self.nodes:
            node.grad = None
        self._consumed = False

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        if self._consumed:
            raise ContractError("backward() already ran on this tape; call reset() first")
        if not isinstance(loss, Var) or loss.tape is not self:
            raise ContractError("loss is not a node of this tape")
        if loss.value.shape != (1, 1):
            raise ContractError(f"loss must be a 1x1 scalar node, got shape {loss.value.shape}")
        self._consumed = True
        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            g = node.grad
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(pg, dtype=np.float64, copy=True)
                else:
                    parent.grad += pg
        for node in self.nodes:
            if node.grad is None:
                node.grad = np.zeros_like(node.value)
        return {n.name: n.grad for n in self.nodes if n.op == "param"}


def as_var(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x, dtype=np.float64))


def record_op(value, parents, backward_fn, op) -> Var:
    if not np.all(np.isfinite(value)):
        raise NumericError(f"op {op!r} produced non-finite values")
    tape = next((p.tape for p in parents if p.requires_grad and p.tape is not None), None)
    if tape is None:
        return Var(value, op=op)
    return tape.record(value, parents, backward_fn, op)


def _same_shape(a: Var, b: Var, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --------------------------------------------------------------------------- ops


def matmul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value

    def backward(g):
        # constant inputs (e.g. node features) need no gradient
        return (g @ bv.T if a.requires_grad else None, av.T @ g if b.requires_grad else None)

    return record_op(av @ bv, (a, b), backward, "matmul")


dense_matmul = matmul


def spmm(s: SparseMatrix, d, values=None) -> Var:
    """``s @ d`` with ``s`` sparse. ``values`` (nnz x 1) optionally replaces the
    stored values with differentiable ones."""
    d = as_var(d)
    if d.value.ndim != 2 or s.cols != d.shape[0]:
        raise DimensionError(f"spmm: cannot multiply sparse {s.shape} by {d.shape}")
    if values is None:
        vals = Var(s.values.reshape(-1, 1))
    else:
        vals = as_var(values)
        if vals.shape != (s.nnz, 1):
            raise DimensionError(f"spmm: values must be ({s.nnz}, 1), got {vals.shape}")
    mat = s.csr if values is None else s.to_scipy(vals.value[:, 0])
    dv = d.value
    out = np.asarray(mat @ dv)

    def backward(g):
        gd = np.asarray(mat.T @ g) if d.requires_grad else None
        gv = None
        if vals.requires_grad:
            gv = np.einsum("ij,ij->i", g[s.row_ids], dv[s.col_indices]).reshape(-1, 1)
        return gd, gv

    return record_op(out, (d, vals), backward, "spmm")


def relu(a) -> Var:
    a = as_var(a)
    on = a.value > 0
    return record_op(np.where(on, a.value, 0.0), (a,), lambda g: (g * on,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Var:
    a = as_var(a)
    factor = np.where(a.value > 0, 1.0, slope)
    return record_op(a.value * factor, (a,), lambda g: (g * factor,), "leaky_relu")


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _same_shape(a, b, "add")
    return record_op(a.value + b.value, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _same_shape(a, b, "sub")
    return record_op(a.value - b.value, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return record_op(av * bv, (a, b), lambda g: (g * bv, g * av), "mul")


def square(a) -> Var:
    a = as_var(a)
    av = a.value
    return record_op(av * av, (a,), lambda g: (2.0 * av * g,), "square")


def scale(a, c: float) -> Var:
    a = as_var(a)
    return record_op(a.value * c, (a,), lambda g: (g * c,), "scale")


def add_bias(a, b) -> Var:
    """Add the 1 x cols row ``b`` to every row of ``a``."""
    a, b = as_var(a), as_var(b)
    if b.shape != (1, a.shape[1]):
        raise DimensionError(f"add_bias: bias shape {b.shape} does not fit {a.shape}")
    return record_op(a.value + b.value, (a, b), lambda g: (g, g.sum(axis=0, keepdims=True)), "add_bias")


def elementwise(kind: str, *args, slope: float = 0.2) -> Var:
    """Dispatch by name: relu, leaky_relu, add, sub, mul, square."""
    table = {"relu": relu, "add": add, "sub": sub, "mul": mul, "square": square}
    if kind == "leaky_relu":
        return leaky_relu(*args, slope=slope)
    if kind not in table:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    return table[kind](*args)


def row_softmax(m) -> Var:
    m = as_var(m)
    if m.value.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"row_softmax needs a non-empty 2-D input, got {m.shape}")
    shifted = m.value - m.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return record_op(y, (m,), backward, "row_softmax")


def concat_cols(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"concat_cols: row mismatch {a.shape} vs {b.shape}")
    ca = a.shape[1]
    return record_op(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :ca], g[:, ca:]), "concat_cols")


def concat_rows(parts) -> Var:
    parts = [as_var(p) for p in parts]
    widths = {p.shape[1] for p in parts}
    if len(widths) != 1:
        raise DimensionError(f"concat_rows: column mismatch {[p.shape for p in parts]}")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return record_op(np.vstack([p.value for p in parts]), tuple(parts), backward, "concat_rows")


def transpose(a) -> Var:
    a = as_var(a)
    return record_op(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


def col_max_pool(m) -> Var:
    """Column-wise max as a 1 x cols row. Gradient goes to the first argmax."""
    m = as_var(m)
    if m.shape[0] == 0:
        raise EmptyInputError("col_max_pool on a matrix with zero rows")
    idx = np.argmax(m.value, axis=0)
    cols = np.arange(m.shape[1])
    out = m.value[idx, cols].reshape(1, -1)
    n = m.shape[0]

    def backward(g):
        gm = np.zeros((n, len(cols)))
        gm[idx, cols] = g[0]
        return (gm,)

    return record_op(out, (m,), backward, "col_max_pool")


def col_sum(m) -> Var:
    m = as_var(m)
    n = m.shape[0]
    return record_op(m.value.sum(axis=0, keepdims=True), (m,),
                 lambda g: (np.broadcast_to(g, (n, g.shape[1])),), "col_sum")


def sum_all(m) -> Var:
    m = as_var(m)
    shape = m.shape
    return record_op(np.array([[m.value.sum()]]), (m,), lambda g: (np.full(shape, g[0, 0]),), "sum_all")


def gather_rows(m, index) -> Var:
    """Rows of ``m`` picked by ``index`` (repeats allowed)."""
    m = as_var(m)
    index = np.asarray(index, dtype=np.int64)
    n = m.shape[0]

    def backward(g):
        if g.shape[1] == 1:
            return (np.bincount(index, weights=g[:, 0], minlength=n).reshape(-1, 1),)
        out = np.zeros((n, g.shape[1]))
        np.add.at(out, index, g)
        return (out,)

    return record_op(m.value[index], (m,), backward, "gather_rows")


def segment_softmax(e, row_offsets) -> Var:
    """Softmax of the nnz x 1 score column within each CSR row segment.
    Every segment must be non-empty."""
    e = as_var(e)
    ro = np.asarray(row_offsets, dtype=np.int64)
    counts = np.diff(ro)
    if np.any(counts == 0):
        raise EmptyInputError("segment_softmax: empty segment")
    x = e.value[:, 0]
    starts = ro[:-1]
    seg_max = np.maximum.reduceat(x, starts)
    ex = np.exp(x - np.repeat(seg_max, counts))
    denom = np.add.reduceat(ex, starts)
    alpha = ex / np.repeat(denom, counts)

    def backward(g):
        gg = g[:, 0]
        dots = np.add.reduceat(alpha * gg, starts)
        return ((alpha * (gg - np.repeat(dots, counts))).reshape(-1, 1),)

    return record_op(alpha.reshape(-1, 1), (e,), backward, "segment_softmax")


def dropout(m, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Var:
    """Inverted dropout. Eval mode and ``p == 0`` return the input unchanged and
    draw no random numbers."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    m = as_var(m)
    if not training or p == 0.0:
        return m
    if rng is None:
        raise ContractError("training-mode dropout needs a random generator")
    keep = (rng.random(m.shape) >= p) * (1.0 / (1.0 - p))
    return record_op(m.value * keep, (m,), lambda g: (g * keep,), "dropout")


def slice_rows(m, start: int, stop: int) -> Var:
    m = as_var(m)
    n = m.shape[0]

    def backward(g):
        out = np.zeros((n, g.shape[1]))
        out[start:stop] = g
        return (out,)

    return record_op(m.value[start:stop].copy(), (m,), backward, "slice_rows")
