"""Budgeted grid search on the public split, then 10 seeds of the winner and of the
linear-head baseline with the same hyper-parameters.

    GLGNN_DATA_ROOT=data python scripts/semi_supervised.py cora citeseer --workers 4
"""
import argparse
import logging
import os
import sys
from pathlib import Path

from glgnn.config import TrainConfig, with_backbone
from glgnn.data import load_dataset
from glgnn.protocols import tuned_run
from glgnn.training import write_grid_results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="+")
    ap.add_argument("--data-root", default=os.environ.get("GLGNN_DATA_ROOT", "data"))
    ap.add_argument("--backbone", default="gcn", choices=["gcn", "gat", "gcnii"])
    ap.add_argument("--budget", type=int, default=60)
    ap.add_argument("--grid-seed", type=int, default=0)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--out", default="runs/semi_supervised")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    base = with_backbone(TrainConfig(), args.backbone).validate()
    for name in args.names:
        ds = load_dataset(Path(args.data_root) / name)
        res = tuned_run(ds, ds.split("public"), base, budget=args.budget, grid_seed=args.grid_seed,
                        seeds=range(args.seeds), with_baseline=True, workers=args.workers)
        write_grid_results(Path(args.out) / name / "grid.csv", res.grid)
        print(f"{name}: GLGNN {res.mean:.4f}  linear head {res.baseline_mean:.4f}  "
              f"({res.seconds / 60:.1f} min)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
