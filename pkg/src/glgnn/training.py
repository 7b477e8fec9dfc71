"""Optimizer, training loop with early stopping, evaluation, grid search and FLOP counts."""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from .config import TrainConfig, apply_overrides, flatten
from .data import Dataset, Split
from .errors import ConfigError, ContractError, NumericError, SplitError
from .losses import total_loss
from .model import Params, forward, init_params, param_group

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float, wd: float) -> dict[str, np.ndarray]:
    """One bias-corrected Adam step with L2 decay folded into the gradient.

    Returns new parameter arrays; ``state`` is advanced in place.
    """
    state.t += 1
    b1, b2, t = state.beta1, state.beta2, state.t
    out = {}
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        if g.shape != theta.shape:
            raise ContractError(f"adam_step: gradient {g.shape} vs parameter {theta.shape} for {name!r}")
        g = g + wd * theta if wd else g
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m, v = np.zeros_like(theta), np.zeros_like(theta)
        elif m.shape != theta.shape:
            raise ContractError(f"adam_step: moment shape {m.shape} vs parameter {theta.shape} for {name!r}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        out[name] = theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


# --------------------------------------------------------------------------- evaluation


def accuracy(y_hat: np.ndarray, labels: np.ndarray, idx) -> float:
    """Fraction of ``idx`` whose argmax (lowest index on ties) equals the label."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ContractError("accuracy over an empty node set")
    return float(np.mean(np.argmax(y_hat[idx], axis=1) == labels[idx]))


def predict_probs(dataset: Dataset, params: Params, cfg: TrainConfig) -> np.ndarray:
    fw = forward(cfg, params, dataset.graph, dataset.model_input, dataset.num_classes,
                 training=False, record=False)
    return fw.y_hat.value


def evaluate(dataset: Dataset, split: Split, params: Params, cfg: TrainConfig) -> dict[str, float]:
    y_hat = predict_probs(dataset, params, cfg)
    return {part: accuracy(y_hat, dataset.labels, getattr(split, part)) for part in ("train", "val", "test")}


# --------------------------------------------------------------------------- training


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    val_acc: float
    test_acc: float
    loss_ce: float
    loss_gl: float


@dataclass
class Metrics:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val: float = float("nan")
    test_acc: float = float("nan")
    init_acc: dict[str, float] = field(default_factory=dict)
    params: Params = field(default_factory=dict)
    stopped_early: bool = False

    @property
    def last_epoch(self) -> int:
        return self.history[-1].epoch if self.history else 0


def _rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_seq, drop_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(drop_seq)


def _epoch(dataset, split, cfg, params, states, hyper, drop_rng):
    fw = forward(cfg, params, dataset.graph, dataset.model_input, dataset.num_classes, training=True, rng=drop_rng)
    terms = total_loss(fw.y_hat, fw.g, fw.fL, dataset.labels, split.train, cfg.loss)
    if not math.isfinite(terms.total.item()):
        raise NumericError(f"non-finite loss {terms.total.item()}")
    grads = fw.tape.backward(terms.total)
    new = {}
    for group, (lr, wd) in hyper.items():
        members = {n: v for n, v in params.items() if param_group(n) == group}
        if members:
            new.update(adam_step(members, grads, states[group], lr, wd))
    params = {n: new[n] for n in params}
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise NumericError("parameters became non-finite")
    return params, terms, evaluate(dataset, split, params, cfg)


def train(dataset: Dataset, split: Split, cfg: TrainConfig, params: Optional[Params] = None) -> Metrics:
    """Full-batch training with early stopping on validation accuracy.

    The reported test accuracy belongs to the epoch with the best validation
    accuracy (first such epoch on ties).
    """
    cfg.validate()
    split.validate(dataset.num_nodes, dataset.labels)
    for part in ("val", "test"):
        if getattr(split, part).size == 0:
            raise SplitError(f"split {split.name!r}: empty {part} set")
    init_rng, drop_rng = _rngs(cfg.seed)
    k = dataset.num_classes
    if params is None:
        params = init_params(cfg, dataset.num_features, k, init_rng)
    params = {n: np.array(v, dtype=np.float64) for n, v in params.items()}
    states = {"main": AdamState(), "gnn": AdamState()}
    hyper = {"main": (cfg.lr, cfg.wd), "gnn": (cfg.lr_gnn, cfg.wd_gnn)}

    metrics = Metrics()
    metrics.init_acc = evaluate(dataset, split, params, cfg)
    metrics.params = params
    best_val = -1.0
    for epoch in range(1, cfg.max_epochs + 1):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                params, terms, acc = _epoch(dataset, split, cfg, params, states, hyper, drop_rng)
        except NumericError as exc:
            raise NumericError(f"epoch {epoch}: {exc}") from None
        gl = terms.gl.item() if terms.gl is not None else float("nan")
        metrics.history.append(EpochRecord(epoch, acc["train"], acc["val"], acc["test"], terms.ce.item(), gl))
        if acc["val"] > best_val:
            best_val = acc["val"]
            metrics.best_epoch, metrics.best_val, metrics.test_acc = epoch, acc["val"], acc["test"]
            metrics.params = params
        elif epoch - metrics.best_epoch >= cfg.patience:
            metrics.stopped_early = True
            break
    if not metrics.history:
        metrics.best_val, metrics.test_acc = metrics.init_acc["val"], metrics.init_acc["test"]
    log.info("trained %d epochs, best val %.4f at epoch %d, test %.4f",
             metrics.last_epoch, metrics.best_val, metrics.best_epoch, metrics.test_acc)
    return metrics


# --------------------------------------------------------------------------- grid search

# search ranges for each tunable hyper-parameter
SEARCH_GRID: dict[str, list] = {
    "lr": [1e-1, 1e-2, 1e-3, 1e-4],
    "lr_gnn": [1e-1, 1e-2, 1e-3, 1e-4],
    "wd": [1e-3, 1e-4, 1e-5, 0.0],
    "wd_gnn": [1e-3, 1e-4, 1e-5, 0.0],
    "loss.gamma": [1e2, 1e1, 1.0, 1e-1, 1e-2],
    "backbone.dropout": [0.5, 0.6, 0.7],
}


@dataclass
class Trial:
    index: int
    point: dict[str, Any]
    cfg: TrainConfig
    metrics: Metrics


@dataclass
class GridResult:
    best: Trial
    trials: list[Trial]

    @property
    def ranked(self) -> list[Trial]:
        return sorted(self.trials, key=_rank_key)


def _rank_key(t: Trial):
    # best validation first; ties go to smaller gamma, then smaller lr
    return (-t.metrics.best_val, t.cfg.loss.gamma, t.cfg.lr, t.index)


def grid_points(grid: Mapping[str, Sequence], budget: Optional[int] = None, seed: int = 0) -> list[dict[str, Any]]:
    """Cross product of ``grid`` in key order; a seeded subsample of ``budget`` points when larger."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("grid must have at least one value per key")
    keys = list(grid)
    total = math.prod(len(grid[k]) for k in keys)
    if budget is not None and budget < 1:
        raise ConfigError("grid budget must be >= 1")
    if budget is None or total <= budget:
        chosen = range(total)
    else:
        chosen = np.sort(np.random.default_rng(seed).choice(total, size=budget, replace=False))
    combos = itertools.product(*(grid[k] for k in keys))
    wanted = set(int(i) for i in chosen)
    return [dict(zip(keys, c)) for i, c in enumerate(combos) if i in wanted]


def grid_search(dataset: Dataset, split: Split, grid: Mapping[str, Sequence], base_cfg: TrainConfig,
                budget: Optional[int] = 60, seed: int = 0, workers: int = 1) -> GridResult:
    """Train one model per grid point and keep the best by validation accuracy."""
    points = grid_points(grid, budget, seed)
    cfgs = [apply_overrides(base_cfg, p).validate() for p in points]

    def run(i):
        return Trial(i, points[i], cfgs[i], train(dataset, split, cfgs[i]))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(run, range(len(points))))
    else:
        trials = [run(i) for i in range(len(points))]
    best = min(trials, key=_rank_key)
    return GridResult(best, trials)


def write_grid_results(path, result: GridResult) -> Path:
    keys = list(result.trials[0].point)
    lines = [",".join(["rank", *keys, "best_val", "test_acc", "best_epoch"])]
    for rank, t in enumerate(result.ranked, 1):
        vals = [str(t.point[k]) for k in keys]
        lines.append(",".join([str(rank), *vals, repr(t.metrics.best_val), repr(t.metrics.test_acc),
                               str(t.metrics.best_epoch)]))
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    return out


# --------------------------------------------------------------------------- FLOPs


@dataclass
class FlopEstimate:
    terms: dict[str, float]

    @property
    def total(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def millions(self) -> float:
        return self.total / 1e6

    def lines(self) -> list[str]:
        out = [f"{name}: {value / 1e6:.4f}M" for name, value in self.terms.items()]
        out.append(f"total: {self.millions:.4f}M")
        return out


def estimate_flops(n: int, c_in: int, c: int, k: int, layers: int, expansion: int = 12,
                   backbone: str = "gcn", avg_degree: Optional[float] = None,
                   head: str = "glgnn") -> FlopEstimate:
    """Multiply-accumulate count of one forward pass, following the layer cost model.

    Backbone layers cost ``n c^2`` each, plus ``n d c`` for attention with average
    degree ``d``. The class MLPs act on a single readout vector, so their cost
    does not grow with ``n``.
    """
    if min(n, c_in, c, k, expansion) < 1 or layers < 0:
        raise ConfigError("flop estimate needs positive dimensions")
    terms = {"embedding": float(n * c_in * c)}
    if backbone in ("gcn", "gcnii"):
        terms["backbone"] = float(n * c * c * layers)
    elif backbone == "gat":
        if avg_degree is None:
            raise ConfigError("GAT flop estimate needs the average degree")
        terms["backbone"] = (n * c * c + n * avg_degree * c) * layers
    else:
        raise ConfigError(f"unknown backbone {backbone!r}")
    if head == "glgnn":
        terms["readout"] = float(n * 2 * c * c)
        terms["label_mlps"] = float(2 * expansion * c * k)
        terms["correspondence"] = float(n * c * k)
    else:
        terms["classifier"] = float(n * c * k)
    return FlopEstimate(terms)


def flops_for(dataset: Dataset, cfg: TrainConfig) -> FlopEstimate:
    return estimate_flops(dataset.num_nodes, dataset.num_features, cfg.backbone.hidden, dataset.num_classes,
                          cfg.backbone.layers, cfg.head.expansion, cfg.backbone.kind,
                          dataset.graph.average_degree, cfg.head.kind)


# --------------------------------------------------------------------------- files


def _num(x: float) -> str:
    return repr(float(x))


def write_metrics(path, metrics: Metrics) -> Path:
    lines = ["epoch,train_acc,val_acc,test_acc,loss_ce,loss_gl"]
    for r in metrics.history:
        lines.append(",".join([str(r.epoch), _num(r.train_acc), _num(r.val_acc), _num(r.test_acc),
                               _num(r.loss_ce), _num(r.loss_gl)]))
    out = Path(path)
    out.write_text("\n".join(lines) + "\n")
    return out


def read_metrics(path) -> list[EpochRecord]:
    lines = Path(path).read_text().splitlines()[1:]
    out = []
    for line in lines:
        e, *rest = line.split(",")
        out.append(EpochRecord(int(e), *(float(x) for x in rest)))
    return out


def summary_dict(metrics: Metrics, cfg: TrainConfig, dataset: Optional[Dataset] = None,
                 split: Optional[Split] = None) -> dict[str, Any]:
    s: dict[str, Any] = {}
    if dataset is not None:
        s["dataset"] = dataset.name
    if split is not None:
        s["split"] = split.name
    s.update({"test_acc": metrics.test_acc, "best_val_acc": metrics.best_val,
              "best_epoch": metrics.best_epoch, "last_epoch": metrics.last_epoch,
              "stopped_early": metrics.stopped_early})
    if metrics.history:
        last = metrics.history[-1]
        s["final_loss_ce"] = last.loss_ce
        s["final_loss_gl"] = last.loss_gl
        if dataset is not None and split is not None:
            s["final_loss_gl_per_node"] = last.loss_gl / max(split.train.size, 1)
    for key, value in flatten(cfg).items():
        s[f"config.{key}"] = value
    return s


def write_summary(path, summary: Mapping[str, Any]) -> Path:
    out = Path(path)
    out.write_text("".join(f"{k}: {v}\n" for k, v in summary.items()))
    return out


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if ": " in line:
            k, v = line.split(": ", 1)
            out[k] = v
    return out


CHECKPOINT_MAGIC = "glgnn-checkpoint 1"


def save_checkpoint(path, params: Mapping[str, np.ndarray], cfg: Optional[TrainConfig] = None) -> Path:
    """Text manifest (config, then parameter names and shapes) followed by raw little-endian float64."""
    head = [CHECKPOINT_MAGIC]
    if cfg is not None:
        head += [f"config {k} {v}" for k, v in flatten(cfg).items()]
    for name, v in params.items():
        if v.ndim != 2:
            raise ContractError(f"checkpoint parameter {name!r} must be 2-D, got {v.shape}")
        head.append(f"param {name} {v.shape[0]} {v.shape[1]}")
    head.append("end")
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in params.values())
    out = Path(path)
    out.write_bytes(("\n".join(head) + "\n").encode("ascii") + body)
    return out


def load_checkpoint(path) -> tuple[Params, Optional[TrainConfig]]:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if not raw.startswith(CHECKPOINT_MAGIC.encode()) or cut < 0:
        raise ContractError(f"{path}: not a checkpoint file")
    lines = raw[:cut].decode("ascii").split("\n")[1:]
    body = raw[cut + len(marker):]
    shapes, overrides = [], []
    for line in lines:
        kind, rest = line.split(" ", 1)
        if kind == "config":
            key, _, value = rest.partition(" ")
            overrides.append((key, value))
        elif kind == "param":
            name, r, c = rest.rsplit(" ", 2)
            shapes.append((name, int(r), int(c)))
    flat = np.frombuffer(body, dtype="<f8")
    need = sum(r * c for _, r, c in shapes)
    if flat.size != need:
        raise ContractError(f"{path}: expected {need} values, found {flat.size}")
    params, pos = {}, 0
    for name, r, c in shapes:
        params[name] = flat[pos:pos + r * c].reshape(r, c).astype(np.float64)
        pos += r * c
    cfg = apply_overrides(TrainConfig(), overrides) if overrides else None
    return params, cfg
