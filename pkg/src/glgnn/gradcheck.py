"""Central finite-difference check of tape gradients on a tiny random model."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .config import BackboneConfig, HeadConfig, LossConfig, TrainConfig, DEFAULT_LAYERS
from .data import Dataset
from .errors import ConfigError
from .graph import build_adjacency
from .losses import total_loss
from .model import Params, forward, init_params


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), zero when both vanish."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def numeric_gradient(fn: Callable[[Params], float], params: Params, h: float = 1e-5) -> Params:
    out = {}
    for name, value in params.items():
        grad = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + h
            up = fn(params)
            value[idx] = orig - h
            down = fn(params)
            value[idx] = orig
            grad[idx] = (up - down) / (2 * h)
        out[name] = grad
    return out


def tiny_problem(backbone: str, seed: int = 0, n: int = 8, k: int = 3, c: int = 5, c_in: int = 4,
                 expansion: int = 2) -> tuple[Dataset, np.ndarray, TrainConfig, Params]:
    """Random connected graph, features, labels and perturbed parameters."""
    rng = np.random.default_rng(seed)
    ring = [(i, (i + 1) % n) for i in range(n)]
    extra = [(i, j) for i in range(n) for j in range(i + 2, n) if rng.random() < 0.3]
    graph = build_adjacency(np.array(ring + extra), n)
    features = rng.standard_normal((n, c_in))
    labels = np.arange(n) % k
    cfg = TrainConfig(backbone=BackboneConfig(kind=backbone, layers=DEFAULT_LAYERS[backbone], hidden=c, dropout=0.0),
                      head=HeadConfig(expansion=expansion), loss=LossConfig(gamma=1.0, r=10.0))
    params = init_params(cfg, c_in, k, rng)
    # move off identity/zero initial values so every code path carries signal
    params = {name: v + 0.3 * rng.standard_normal(v.shape) for name, v in params.items()}
    ds = Dataset("gradcheck", graph, features, labels, k)
    mask = np.arange(n)
    return ds, mask, cfg, params


def loss_and_grads(ds: Dataset, mask, cfg: TrainConfig, params: Params, record: bool = True):
    fw = forward(cfg, params, ds.graph, ds.features, ds.num_classes, training=False, record=record)
    terms = total_loss(fw.y_hat, fw.g, fw.fL, ds.labels, mask, cfg.loss)
    if not record:
        return terms.total.item(), None
    return terms.total.item(), fw.tape.backward(terms.total)


@dataclass
class GradReport:
    backbone: str
    errors: dict[str, float]

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]


def check_backbone(backbone: str, seed: int = 0, h: float = 1e-5,
                   flip: Optional[str] = None) -> GradReport:
    """Compare tape and finite-difference gradients block by block.

    ``flip`` negates the tape gradient of one block, used to exercise the
    failure path.
    """
    ds, mask, cfg, params = tiny_problem(backbone, seed)
    _, tape_grads = loss_and_grads(ds, mask, cfg, params)
    if flip is not None:
        if flip not in tape_grads:
            raise ConfigError(f"no parameter block named {flip!r}")
        tape_grads[flip] = -tape_grads[flip]
    fd = numeric_gradient(lambda p: loss_and_grads(ds, mask, cfg, p, record=False)[0], params, h)
    return GradReport(backbone, {name: relative_error(tape_grads[name], fd[name]) for name in params})


def check_all(seed: int = 0, h: float = 1e-5, flip: Optional[str] = None,
              backbones=("gcn", "gat", "gcnii")) -> list[GradReport]:
    return [check_backbone(b, seed, h, flip) for b in backbones]
