"""Fully-supervised protocol: mean test accuracy over 10 stratified 48/32/20 random splits.

    python scripts/fully_supervised.py data/cora --set loss.gamma=0.01
"""
import argparse
import sys

import numpy as np

from glgnn.config import TrainConfig, apply_overrides, parse_assignments
from glgnn.data import load_dataset, make_random_splits
from glgnn.training import train


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset")
    ap.add_argument("--splits", type=int, default=10)
    ap.add_argument("--split-seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args(argv)

    ds = load_dataset(args.dataset)
    cfg = apply_overrides(TrainConfig(), parse_assignments(args.set)).validate()
    accs = []
    for split in make_random_splits(ds, seed=args.split_seed, count=args.splits):
        accs.append(train(ds, split, cfg).test_acc)
        print(f"{split.name}: {accs[-1]:.4f}")
    print(f"mean {np.mean(accs):.4f} +- {np.std(accs):.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
