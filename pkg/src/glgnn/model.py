"""Parameter initialization and the full forward pass of one model instance."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backbones import run_backbone
from .config import TrainConfig
from .graph import Graph
from .head import run_head, run_linear_head
from .tensor import Tape, Var

Params = dict[str, np.ndarray]


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_params(cfg: TrainConfig, c_in: int, k: int, rng: np.random.Generator) -> Params:
    """Glorot for embedding, attention and head weights; identity for backbone K; zero biases."""
    c = cfg.backbone.hidden
    p: Params = {
        "embed.W": glorot(rng, c_in, c),
        "embed.b": np.zeros((1, c)),
    }
    for l in range(cfg.backbone.layers):
        p[f"gnn.{l}.K"] = np.eye(c)
        if cfg.backbone.kind == "gat":
            p[f"gnn.{l}.Kt"] = glorot(rng, c, c)
            p[f"gnn.{l}.a"] = glorot(rng, 2 * c, 1)
    if cfg.head.kind == "glgnn":
        ec = cfg.head.expansion * c
        p["head.Wg"] = glorot(rng, 2 * c, c)
        p["head.bg"] = np.zeros((1, c))
        for q in range(k):
            p[f"head.We.{q}"] = glorot(rng, c, ec)
            p[f"head.be.{q}"] = np.zeros((1, ec))
            p[f"head.Ws.{q}"] = glorot(rng, ec, c)
            p[f"head.bs.{q}"] = np.zeros((1, c))
    else:
        p["out.W"] = glorot(rng, c, k)
        p["out.b"] = np.zeros((1, k))
    return p


def param_group(name: str) -> str:
    """'gnn' for backbone propagation weights, 'main' for embedding and head."""
    return "gnn" if name.startswith("gnn.") else "main"


@dataclass
class Forward:
    tape: Optional[Tape]
    leaves: dict[str, Var]
    f0: Var
    fL: Var
    y_hat: Var
    g: Optional[Var]


def forward(cfg: TrainConfig, params: Params, graph: Graph, features: np.ndarray, k: int,
            training: bool, rng: Optional[np.random.Generator] = None, record: bool = True) -> Forward:
    """Run backbone and head. With ``record=False`` nothing is taped."""
    tape = Tape() if record else None
    if tape is not None:
        leaves = {name: tape.param(v, name) for name, v in params.items()}
    else:
        leaves = {name: Var(v) for name, v in params.items()}
    f0, fL = run_backbone(cfg.backbone, leaves, graph, features, training, rng)
    if cfg.head.kind == "glgnn":
        y_hat, g = run_head(leaves, f0, fL, k)
    else:
        y_hat, g = run_linear_head(leaves, fL), None
    return Forward(tape, leaves, f0, fL, y_hat, g)
