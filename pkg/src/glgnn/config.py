"""Hyper-parameter records and dot-keyed overrides.

Overrides are ``section.field=value`` strings (``loss.r=10``, ``lr_gnn=0.01``).
They are applied in the order: built-in defaults, config file, command line.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .errors import ConfigError

BACKBONES = ("gcn", "gat", "gcnii")
HEADS = ("glgnn", "linear")

# depth used when only the backbone kind is chosen
DEFAULT_LAYERS = {"gcn": 2, "gat": 2, "gcnii": 8}


@dataclass
class BackboneConfig:
    kind: str = "gcn"
    layers: int = 2
    hidden: int = 64
    dropout: float = 0.5
    alpha: float = 0.1      # GCNII initial-residual weight
    lam: float = 0.5        # GCNII identity-mapping strength
    heads: int = 1
    leaky_slope: float = 0.2

    def validate(self):
        if self.kind not in BACKBONES:
            raise ConfigError(f"backbone.kind must be one of {BACKBONES}, got {self.kind!r}")
        if self.layers < 0:
            raise ConfigError("backbone.layers must be >= 0")
        if self.hidden < 1:
            raise ConfigError("backbone.hidden must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"backbone.dropout must lie in [0, 1), got {self.dropout}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"backbone.alpha must lie in [0, 1], got {self.alpha}")
        if self.lam < 0:
            raise ConfigError("backbone.lam must be >= 0")
        if self.heads != 1:
            raise ConfigError("only single-head attention is implemented (backbone.heads=1)")


@dataclass
class HeadConfig:
    kind: str = "glgnn"
    expansion: int = 12

    def validate(self):
        if self.kind not in HEADS:
            raise ConfigError(f"head.kind must be one of {HEADS}, got {self.kind!r}")
        if self.expansion < 1:
            raise ConfigError("head.expansion must be >= 1")


@dataclass
class LossConfig:
    gamma: float = 0.1
    r: float = 10.0

    def validate(self):
        if self.gamma < 0:
            raise ConfigError(f"loss.gamma must be >= 0, got {self.gamma}")
        if self.r <= 0:
            raise ConfigError(f"loss.r must be > 0, got {self.r}")


@dataclass
class TrainConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    lr: float = 1e-2        # embedding + head
    wd: float = 1e-4
    lr_gnn: float = 1e-2    # backbone layers
    wd_gnn: float = 0.0
    max_epochs: int = 1500
    patience: int = 100
    seed: int = 0

    def validate(self) -> "TrainConfig":
        self.backbone.validate()
        self.head.validate()
        self.loss.validate()
        for name in ("lr", "lr_gnn"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("wd", "wd_gnn"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError(f"patience must lie in [0, max_epochs], got {self.patience}")
        return self

    def to_flat(self) -> dict[str, Any]:
        return flatten(self)

    def copy(self) -> "TrainConfig":
        return apply_overrides(self, {})


def flatten(cfg, prefix: str = "") -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out.update(flatten(v, prefix + f.name + "."))
        else:
            out[prefix + f.name] = v
    return out


def _coerce(key: str, raw: Any, current: Any) -> Any:
    if isinstance(raw, str):
        text = raw.strip()
    else:
        text = raw
    try:
        if isinstance(current, bool):
            if isinstance(text, bool):
                return text
            if str(text).lower() in ("1", "true", "yes", "on"):
                return True
            if str(text).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            val = float(text)
            if val != int(val):
                raise ValueError(text)
            return int(val)
        if isinstance(current, float):
            return float(text)
        return str(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {raw!r} as {type(current).__name__}") from None


def apply_overrides(cfg: TrainConfig, overrides: dict[str, Any] | Iterable[tuple[str, Any]]) -> TrainConfig:
    """Return a deep copy of ``cfg`` with dot-keyed overrides applied.

    Unknown keys raise :class:`ConfigError`. Validation is left to the caller so
    that several override layers can be stacked before checking invariants.
    """
    new = dataclasses.replace(
        cfg,
        backbone=dataclasses.replace(cfg.backbone),
        head=dataclasses.replace(cfg.head),
        loss=dataclasses.replace(cfg.loss),
    )
    items = overrides.items() if isinstance(overrides, dict) else overrides
    for key, raw in items:
        parts = key.split(".")
        target = new
        for p in parts[:-1]:
            sub = getattr(target, p, None)
            if not dataclasses.is_dataclass(sub):
                raise ConfigError(f"unknown config key {key!r}")
            target = sub
        leaf = parts[-1]
        if leaf not in {f.name for f in dataclasses.fields(target)} or dataclasses.is_dataclass(getattr(target, leaf)):
            raise ConfigError(f"unknown config key {key!r}")
        setattr(target, leaf, _coerce(key, raw, getattr(target, leaf)))
    return new


def parse_assignments(items: Iterable[str]) -> list[tuple[str, str]]:
    out = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out.append((k.strip(), v.strip()))
    return out


def read_config_file(path) -> list[tuple[str, str]]:
    """Parse a ``key: value`` text file. Blank lines and ``#`` comments are skipped."""
    out = []
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key: value'")
        k, v = line.split(":", 1)
        out.append((k.strip(), v.strip()))
    return out


def with_backbone(cfg: TrainConfig, kind: str) -> TrainConfig:
    """Switch backbone kind and adopt that kind's default depth."""
    return apply_overrides(cfg, {"backbone.kind": kind, "backbone.layers": DEFAULT_LAYERS.get(kind, 2)})
