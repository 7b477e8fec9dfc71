"""Single-axis sweeps over expansion e, cut-off r, dropout p and loss weight gamma.

Each axis is a one-key grid run through ``grid_search``; results land in
``<out>/<axis>.csv`` for plotting.

    python scripts/ablation.py data/cora --axis loss.r --workers 4
    python scripts/ablation.py --sbm --epochs 100      # quick synthetic smoke run
"""
import argparse
import os
import sys
from pathlib import Path

from glgnn.config import TrainConfig, apply_overrides, parse_assignments
from glgnn.data import generate_sbm, load_dataset
from glgnn.training import grid_search, write_grid_results

AXES = {
    "head.expansion": [1, 2, 4, 8, 12, 16],
    "loss.r": [0.1, 1.0, 10.0, 100.0, 1000.0],
    "backbone.dropout": [0.0, 0.3, 0.5, 0.6, 0.7],
    "loss.gamma": [0.0, 1e-2, 1e-1, 1.0, 10.0, 100.0],
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("dataset", nargs="?")
    ap.add_argument("--sbm", action="store_true", help="use a seeded 3-block SBM instead of a dataset")
    ap.add_argument("--split", default="public")
    ap.add_argument("--axis", action="append", choices=sorted(AXES), help="default: all axes")
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args(argv)
    if args.sbm == (args.dataset is not None):
        ap.error("give exactly one of DATASET or --sbm")

    if args.sbm:
        ds = generate_sbm([40, 40, 40], 0.3, 0.03, sigma=1.0, seed=0)
        split = ds.split("default")
    else:
        ds = load_dataset(args.dataset)
        split = ds.split(args.split)
    over = dict(parse_assignments(args.set))
    if args.epochs is not None:
        over.update(max_epochs=args.epochs, patience=min(100, args.epochs))
    base = apply_overrides(TrainConfig(), over).validate()

    for axis in args.axis or sorted(AXES):
        res = grid_search(ds, split, {axis: AXES[axis]}, base, budget=None, workers=args.workers)
        path = write_grid_results(Path(args.out) / f"{axis}.csv", res)
        best = res.best
        print(f"{axis}: best {best.point[axis]} (val {best.metrics.best_val:.4f}, "
              f"test {best.metrics.test_acc:.4f}) -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
