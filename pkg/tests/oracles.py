"""Slow, independent reference implementations used as test oracles.

Everything here is written with explicit Python loops over plain arrays and
shares no code with the package beyond the input data.
"""
from __future__ import annotations

import math
from decimal import Decimal, getcontext

import numpy as np


def naive_matmul(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n, m = a.shape
    m2, p = b.shape
    assert m == m2
    out = np.zeros((n, p))
    for i in range(n):
        for j in range(p):
            out[i, j] = math.fsum(a[i, t] * b[t, j] for t in range(m))
    return out


def csr_to_dense(rows, cols, row_offsets, col_indices, values):
    out = np.zeros((rows, cols))
    for i in range(rows):
        for t in range(row_offsets[i], row_offsets[i + 1]):
            out[i, col_indices[t]] += values[t]
    return out


def dense_adjacency(n, edges):
    a = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            a[u, v] = a[v, u] = 1.0
    return a


def dense_normalized_adjacency(n, edges):
    a = dense_adjacency(n, edges) + np.eye(n)
    d = a.sum(axis=1)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = a[i, j] / math.sqrt(d[i] * d[j])
    return out


def softmax_extended(row):
    getcontext().prec = 50
    xs = [Decimal(float(x)) for x in row]
    mx = max(xs)
    ex = [(x - mx).exp() for x in xs]
    tot = sum(ex)
    return [float(e / tot) for e in ex]


def leaky(x, slope):
    return x if x > 0 else slope * x


def gat_attention(f, n, edges, Kt, a, slope=0.2):
    """Dense n x n attention matrix over each node's neighbors plus itself."""
    adj = dense_adjacency(n, edges) + np.eye(n)
    h = naive_matmul(f, Kt)
    c = h.shape[1]
    out = np.zeros((n, n))
    for i in range(n):
        nbrs = [j for j in range(n) if adj[i, j] > 0]
        scores = []
        for j in nbrs:
            s = sum(a[t, 0] * h[i, t] for t in range(c)) + sum(a[c + t, 0] * h[j, t] for t in range(c))
            scores.append(leaky(s, slope))
        mx = max(scores)
        ex = [math.exp(s - mx) for s in scores]
        tot = sum(ex)
        for j, e in zip(nbrs, ex):
            out[i, j] = e / tot
    return out


def readout(f0, fL, Wg, bg):
    n, c = f0.shape
    cat = np.hstack([f0, fL])
    s = np.full(Wg.shape[1], -np.inf)
    for i in range(n):
        for j in range(Wg.shape[1]):
            v = math.fsum(cat[i, t] * Wg[t, j] for t in range(2 * c)) + bg[0, j]
            s[j] = max(s[j], max(v, 0.0))
    return s


def label_features(s, We, be, Ws, bs):
    k = len(We)
    rows = []
    for q in range(k):
        hidden = [max(math.fsum(s[t] * We[q][t, j] for t in range(len(s))) + be[q][0, j], 0.0)
                  for j in range(We[q].shape[1])]
        rows.append([math.fsum(hidden[t] * Ws[q][t, j] for t in range(len(hidden))) + bs[q][0, j]
                     for j in range(Ws[q].shape[1])])
    return np.array(rows)


def correspondence(fL, g):
    n, k = fL.shape[0], g.shape[0]
    return np.array([[math.fsum(fL[i, t] * g[q, t] for t in range(fL.shape[1])) for q in range(k)]
                     for i in range(n)])


def cross_entropy(y_hat, y, idx):
    return -sum(math.log(max(y_hat[i, y[i]], 1e-12)) for i in idx) / len(idx)


def global_local(g, fL, y, idx, r):
    total = 0.0
    for q in range(g.shape[0]):
        for i in idx:
            d = sum((g[q, t] - fL[i, t]) ** 2 for t in range(g.shape[1]))
            total += d if y[i] == q else -min(d, r)
    return total


def adam_scalar(theta, grad_fn, lr, steps, wd=0.0, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(theta) + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        theta = theta - lr * mh / (math.sqrt(vh) + eps)
        out.append(theta)
    return out


def accuracy(y_hat, y, idx):
    hits = 0
    for i in idx:
        best = 0
        for q in range(1, y_hat.shape[1]):
            if y_hat[i, q] > y_hat[i, best]:
                best = q
        hits += best == y[i]
    return hits / len(idx)


def finite_difference(fn, x, h=1e-5):
    """Central differences of scalar ``fn`` w.r.t. array ``x`` (modified in place, restored)."""
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = fn()
        x[idx] = orig - h
        down = fn()
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    s = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if s == 0 else float(np.linalg.norm(a - b) / s)


def random_edges(rng, n, p=0.3):
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
