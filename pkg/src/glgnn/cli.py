"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric abort,
5 gradient mismatch, 1 anything else raised by the library.
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import training
from .config import DEFAULT_LAYERS, TrainConfig, apply_overrides, parse_assignments, read_config_file
from .data import Dataset, Split, generate_sbm, load_dataset, make_random_splits, write_dataset
from .errors import ConfigError, DataError, GLGNNError, NumericError, SplitError
from .gradcheck import check_all
from .head import export_embeddings
from .model import forward, init_params

log = logging.getLogger("glgnn")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_GRADIENT = 2, 3, 4, 5
GRAD_TOL = 1e-4


# --------------------------------------------------------------------------- helpers


def build_config(args) -> TrainConfig:
    """defaults < --config file < --backbone/--seed flags < --set assignments."""
    file_items = read_config_file(args.config) if getattr(args, "config", None) else []
    set_items = parse_assignments(getattr(args, "set", None) or [])
    cfg = apply_overrides(TrainConfig(), file_items)
    if getattr(args, "backbone", None):
        flag = {"backbone.kind": args.backbone}
        explicit = {k for k, _ in file_items + set_items}
        if "backbone.layers" not in explicit:
            flag["backbone.layers"] = DEFAULT_LAYERS[args.backbone]
        cfg = apply_overrides(cfg, flag)
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, {"seed": args.seed})
    return apply_overrides(cfg, set_items).validate()


def resolve_split(ds: Dataset, name: Optional[str]) -> Split:
    if name is None:
        for guess in ("public", "default"):
            if guess in ds.splits:
                return ds.splits[guess]
        if ds.splits:
            return ds.splits[sorted(ds.splits)[0]]
        raise SplitError(f"dataset {ds.name!r} has no splits; pass --split random_0")
    if name in ds.splits:
        return ds.splits[name]
    m = re.fullmatch(r"random_(\d+)", name)
    if m:
        i = int(m.group(1))
        return make_random_splits(ds, seed=0, count=i + 1)[i]
    return ds.split(name)


def _out_dir(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --------------------------------------------------------------------------- commands


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(args.dataset)
    split = resolve_split(ds, args.split)
    metrics = training.train(ds, split, cfg)
    out = _out_dir(args, "runs/train")
    training.write_metrics(out / "metrics.csv", metrics)
    summary = training.summary_dict(metrics, cfg, ds, split)
    training.write_summary(out / "summary.txt", summary)
    training.save_checkpoint(out / "checkpoint.bin", metrics.params, cfg)
    for key in ("dataset", "split", "test_acc", "best_val_acc", "best_epoch", "last_epoch"):
        print(f"{key}: {summary[key]}")
    print(f"outputs: {out}")
    return 0


def cmd_eval(args) -> int:
    params, cfg = training.load_checkpoint(args.checkpoint)
    if cfg is None:
        cfg = build_config(args)
    ds = load_dataset(args.dataset)
    split = resolve_split(ds, args.split)
    for part, acc in training.evaluate(ds, split, params, cfg).items():
        print(f"{part}_acc: {acc}")
    return 0


def _parse_grid(items: Sequence[str]) -> dict[str, list]:
    grid = {}
    for key, raw in parse_assignments(items):
        values = [v for v in raw.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"grid key {key!r} has no values")
        grid[key] = values
    return grid


def cmd_gridsearch(args) -> int:
    base = build_config(args)
    grid = _parse_grid(args.grid) if args.grid else training.SEARCH_GRID
    ds = load_dataset(args.dataset)
    split = resolve_split(ds, args.split)
    result = training.grid_search(ds, split, grid, base, budget=args.budget, seed=args.grid_seed,
                                  workers=args.workers)
    out = _out_dir(args, "runs/gridsearch")
    training.write_grid_results(out / "results.csv", result)
    best = result.best
    training.write_summary(out / "best_summary.txt", training.summary_dict(best.metrics, best.cfg, ds, split))
    print(f"trials: {len(result.trials)}")
    print(f"best: {best.point}")
    print(f"best_val_acc: {best.metrics.best_val}")
    print(f"test_acc: {best.metrics.test_acc}")
    print(f"outputs: {out}")
    return 0


def cmd_gradcheck(args) -> int:
    reports = check_all(seed=args.seed or 0, flip=args.flip_gradient)
    bad = []
    for rep in reports:
        for name, err in rep.errors.items():
            status = "ok" if err < GRAD_TOL else "MISMATCH"
            print(f"{rep.backbone} {name} {err:.3e} {status}")
            if err >= GRAD_TOL:
                bad.append(f"{rep.backbone}:{name}")
    if bad:
        print(f"gradient mismatch in {', '.join(bad)}", file=sys.stderr)
        return EXIT_GRADIENT
    return 0


def cmd_flops(args) -> int:
    cfg = build_config(args)
    ds = load_dataset(args.dataset)
    est = training.flops_for(ds, cfg)
    for line in est.lines():
        print(line)
    return 0


def cmd_gen_sbm(args) -> int:
    blocks = [int(b) for b in args.blocks.split(",")]
    ds = generate_sbm(blocks, args.p_in, args.p_out, args.feature_dim, args.sigma, args.seed or 0, args.name)
    out = write_dataset(ds, args.out or "data/sbm")
    print(f"wrote {ds.num_nodes} nodes, {ds.graph.num_edges} edges to {out}")
    return 0


def cmd_export_embeddings(args) -> int:
    ds = load_dataset(args.dataset)
    if args.checkpoint:
        params, cfg = training.load_checkpoint(args.checkpoint)
        cfg = cfg or build_config(args)
    else:
        cfg = build_config(args)
        params = init_params(cfg, ds.num_features, ds.num_classes, np.random.default_rng(cfg.seed))
    if cfg.head.kind != "glgnn":
        raise ConfigError("embedding export needs the label-feature head")
    fw = forward(cfg, params, ds.graph, ds.model_input, ds.num_classes, training=False, record=False)
    nodes, labels = export_embeddings(_out_dir(args, "runs/embeddings"), fw.fL, fw.g)
    print(f"node features: {nodes}")
    print(f"label features: {labels}")
    return 0


# --------------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, dataset: bool = True):
    if dataset:
        p.add_argument("--dataset", required=True, help="dataset directory")
        p.add_argument("--split", help="split name (default: public, else default, else first)")
    p.add_argument("--backbone", choices=("gcn", "gat", "gcnii"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override (repeatable)")
    p.add_argument("--config", help="key: value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glgnn", description="Global-local graph neural network node classifier")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gridsearch", help="budgeted hyper-parameter search")
    _common(p)
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2", help="search axis (repeatable); default full ranges")
    p.add_argument("--budget", type=int, default=60)
    p.add_argument("--grid-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flip-gradient", metavar="NAME", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="analytic FLOP estimate")
    _common(p)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("gen-sbm", help="write a synthetic block-model dataset")
    _common(p, dataset=False)
    p.add_argument("--blocks", default="50,50", help="comma-separated block sizes")
    p.add_argument("--p-in", type=float, default=0.9)
    p.add_argument("--p-out", type=float, default=0.05)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--name", default="sbm")
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("export-embeddings", help="write node and label feature matrices")
    _common(p)
    p.add_argument("--checkpoint", help="trained parameters; omitted: untrained model initialized from --seed")
    p.set_defaults(func=cmd_export_embeddings)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GLGNNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
