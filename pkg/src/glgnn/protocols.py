"""Evaluation protocols: seed sweeps, tuned runs and the matched linear-head baseline."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import TrainConfig, apply_overrides
from .data import Dataset, Split
from .training import SEARCH_GRID, GridResult, grid_search, train

log = logging.getLogger(__name__)


def baseline_config(cfg: TrainConfig) -> TrainConfig:
    """Same hyper-parameters with the label-feature head swapped for a linear classifier."""
    return apply_overrides(cfg, {"head.kind": "linear", "loss.gamma": 0.0}).validate()


def seed_sweep(ds: Dataset, split: Split, cfg: TrainConfig, seeds: Sequence[int]) -> list[float]:
    return [train(ds, split, apply_overrides(cfg, {"seed": s})).test_acc for s in seeds]


@dataclass
class ProtocolResult:
    dataset: str
    best_cfg: TrainConfig
    grid: Optional[GridResult]
    accs: list[float]
    baseline_accs: list[float] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def mean(self) -> float:
        return float(np.mean(self.accs))

    @property
    def baseline_mean(self) -> float:
        return float(np.mean(self.baseline_accs)) if self.baseline_accs else float("nan")


def tuned_run(ds: Dataset, split: Split, base_cfg: TrainConfig, grid: Optional[Mapping] = None,
              budget: int = 60, grid_seed: int = 0, seeds: Sequence[int] = range(10),
              with_baseline: bool = False, workers: int = 1) -> ProtocolResult:
    """Grid search on the validation set, then repeat the winner over ``seeds``."""
    t0 = time.perf_counter()
    result = grid_search(ds, split, grid if grid is not None else SEARCH_GRID, base_cfg, budget=budget,
                         seed=grid_seed, workers=workers)
    best = result.best.cfg
    log.info("%s: best grid point %s (val %.4f)", ds.name, result.best.point, result.best.metrics.best_val)
    accs = seed_sweep(ds, split, best, seeds)
    base = seed_sweep(ds, split, baseline_config(best), seeds) if with_baseline else []
    return ProtocolResult(ds.name, best, result, accs, base, time.perf_counter() - t0)
