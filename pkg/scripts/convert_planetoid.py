"""Convert the Planetoid raw files (ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index})
into the glgnn dataset directory format, including the fixed public split.

    python scripts/convert_planetoid.py RAW_DIR cora citeseer --out data/

The public split is train = the first len(y) nodes, val = the next 500,
test = the nodes listed in ind.<name>.test.index.  Citeseer has test indices
with no feature row; those nodes get zero features and label -1.
"""
import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from glgnn.data import Dataset, Split, write_dataset
from glgnn.graph import build_adjacency


def _load(raw: Path, name: str, part: str):
    with open(raw / f"ind.{name}.{part}", "rb") as fh:
        # the original files were pickled under python 2
        return pickle.load(fh, encoding="latin1")


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=np.float64)


def convert(raw_dir, name: str, out_root) -> Path:
    raw = Path(raw_dir)
    x, y, tx, ty, allx, ally, graph = (_load(raw, name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_order = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64, ndmin=1)
    test_sorted = np.sort(test_order)

    tx, ty = _dense(tx), np.asarray(ty)
    lo, hi = int(test_sorted.min()), int(test_sorted.max())
    if hi - lo + 1 > tx.shape[0]:
        # isolated test nodes missing from tx/ty
        full_x = np.zeros((hi - lo + 1, tx.shape[1]))
        full_y = np.zeros((hi - lo + 1, ty.shape[1]))
        full_x[test_sorted - lo] = tx
        full_y[test_sorted - lo] = ty
        tx, ty = full_x, full_y

    features = np.vstack([_dense(allx), tx])
    onehot = np.vstack([np.asarray(ally), ty])
    features[test_order] = features[test_sorted]
    onehot[test_order] = onehot[test_sorted]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1)

    n = features.shape[0]
    edges = {(min(u, v), max(u, v)) for u, nbrs in graph.items() for v in nbrs if u != v and v < n and u < n}
    g = build_adjacency(sorted(edges), n)

    n_train = len(y)
    split = Split("public", np.arange(n_train), np.arange(n_train, n_train + 500), test_sorted)
    test = split.test[labels[split.test] >= 0]
    split = Split("public", split.train, split.val, test).validate(n, labels)
    ds = Dataset(name, g, features, labels, int(onehot.shape[1]), {"public": split})
    return write_dataset(ds, Path(out_root) / name)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("raw_dir")
    ap.add_argument("names", nargs="+")
    ap.add_argument("--out", default="data")
    args = ap.parse_args(argv)
    for name in args.names:
        path = convert(args.raw_dir, name, args.out)
        print(f"{name}: wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
