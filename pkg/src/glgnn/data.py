"""Dataset directory format, split construction and a seeded block-model generator.

On-disk layout of a dataset directory::

    meta.json        {"name", "num_nodes", "num_features", "num_classes"}
    edges.tsv        one "u<TAB>v" 0-based pair per line
    features.csv     n comma-separated rows
    labels.csv       one integer per line, -1 for unknown
    splits/<name>/{train,val,test}.txt   one 0-based index per line
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, IntegrityError, LoadError, ParseError, SplitError
from .graph import Graph, build_adjacency
from .tensor import SparseMatrix

log = logging.getLogger(__name__)

SPARSE_INPUT_DENSITY = 0.1
CITATION_DATASETS = {"cora", "citeseer", "pubmed"}
SPLIT_PARTS = ("train", "val", "test")


@dataclass
class Split:
    name: str
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for part in SPLIT_PARTS:
            setattr(self, part, np.asarray(getattr(self, part), dtype=np.int64).ravel())

    def validate(self, n: int, labels: Optional[np.ndarray] = None) -> "Split":
        if self.train.size == 0:
            raise SplitError(f"split {self.name!r}: empty training set")
        seen = np.concatenate([self.train, self.val, self.test])
        if seen.size and (seen.min() < 0 or seen.max() >= n):
            raise SplitError(f"split {self.name!r}: index outside [0, {n})")
        if np.unique(seen).size != seen.size:
            raise SplitError(f"split {self.name!r}: train/val/test overlap or repeat an index")
        if labels is not None and np.any(labels[self.train] < 0):
            raise SplitError(f"split {self.name!r}: training node without a label")
        return self


@dataclass(eq=False)
class Dataset:
    name: str
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    splits: dict[str, Split] = field(default_factory=dict)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def num_features(self) -> int:
        return int(self.features.shape[1])

    @cached_property
    def model_input(self):
        """Features as fed to the model: CSR when at most 10% of entries are nonzero."""
        f = self.features
        if f.size and np.count_nonzero(f) <= SPARSE_INPUT_DENSITY * f.size:
            return SparseMatrix.from_dense(f)
        return f

    def split(self, name: str) -> Split:
        try:
            return self.splits[name]
        except KeyError:
            raise SplitError(f"dataset {self.name!r} has no split {name!r} "
                             f"(available: {sorted(self.splits)})") from None

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.name == other.name
                and self.num_classes == other.num_classes
                and self.graph.num_nodes == other.graph.num_nodes
                and np.array_equal(self.graph.edges, other.graph.edges)
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.labels, other.labels)
                and self.splits.keys() == other.splits.keys()
                and all(np.array_equal(getattr(self.splits[s], p), getattr(other.splits[s], p))
                        for s in self.splits for p in SPLIT_PARTS))


# --------------------------------------------------------------------------- reading


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise LoadError(f"missing file {path}")
    try:
        text = path.read_text(encoding="ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not ASCII ({exc})") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _parse_ints(path: Path, lines: list[str], per_line: int, sep=None) -> np.ndarray:
    out = np.empty((len(lines), per_line), dtype=np.int64)
    for i, line in enumerate(lines):
        parts = line.split(sep)
        if len(parts) != per_line:
            raise ParseError(f"{path}:{i + 1}: expected {per_line} integer field(s), got {line!r}")
        try:
            out[i] = [int(p) for p in parts]
        except ValueError:
            raise ParseError(f"{path}:{i + 1}: not an integer: {line!r}") from None
    return out


def _parse_features(path: Path, lines: list[str], width: int) -> np.ndarray:
    if width == 0:
        return np.zeros((len(lines), 0))
    try:
        data = np.loadtxt(lines, delimiter=",", ndmin=2, dtype=np.float64) if lines else np.zeros((0, width))
        if data.shape[1] == width and np.all(np.isfinite(data)):
            return data
    except ValueError:
        pass
    # slow path: locate the first bad line
    for i, line in enumerate(lines):
        parts = line.split(",")
        if len(parts) != width:
            raise ParseError(f"{path}:{i + 1}: expected {width} values, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"{path}:{i + 1}: malformed number") from None
        if not all(np.isfinite(vals)):
            raise ParseError(f"{path}:{i + 1}: non-finite feature value")
    raise ParseError(f"{path}: could not parse features")


def row_normalize(features: np.ndarray) -> np.ndarray:
    sums = features.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return features / sums


def load_dataset(path, row_normalize_features: Optional[bool] = None) -> Dataset:
    """Read and validate a dataset directory.

    ``row_normalize_features=None`` normalizes rows to sum 1 for the citation
    benchmarks (cora, citeseer, pubmed) and leaves other datasets untouched.
    """
    root = Path(path)
    if not root.is_dir():
        raise LoadError(f"dataset directory not found: {root}")
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise LoadError(f"missing file {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{meta_path}:{exc.lineno}: {exc.msg}") from None
    for key in ("name", "num_nodes", "num_features", "num_classes"):
        if key not in meta:
            raise IntegrityError(f"{meta_path}: missing field {key!r}")
    n, c_in, k = int(meta["num_nodes"]), int(meta["num_features"]), int(meta["num_classes"])

    edge_path = root / "edges.tsv"
    edges = _parse_ints(edge_path, _read_lines(edge_path), 2, sep="\t")
    graph = build_adjacency(edges, n)

    feat_path = root / "features.csv"
    feat_lines = _read_lines(feat_path)
    if len(feat_lines) != n:
        raise IntegrityError(f"{feat_path}: num_nodes is {n} in meta.json but file has {len(feat_lines)} rows")
    features = _parse_features(feat_path, feat_lines, c_in)

    lab_path = root / "labels.csv"
    lab_lines = _read_lines(lab_path)
    if len(lab_lines) != n:
        raise IntegrityError(f"{lab_path}: num_nodes is {n} in meta.json but file has {len(lab_lines)} rows")
    labels = _parse_ints(lab_path, lab_lines, 1)[:, 0]
    bad = np.flatnonzero((labels < -1) | (labels >= k))
    if bad.size:
        raise IntegrityError(f"{lab_path}:{bad[0] + 1}: label {labels[bad[0]]} outside num_classes={k}")

    splits = {}
    split_root = root / "splits"
    if split_root.is_dir():
        for d in sorted(p for p in split_root.iterdir() if p.is_dir()):
            parts = {}
            for part in SPLIT_PARTS:
                fp = d / f"{part}.txt"
                parts[part] = _parse_ints(fp, _read_lines(fp), 1)[:, 0]
            try:
                splits[d.name] = Split(d.name, **parts).validate(n, labels)
            except SplitError as exc:
                raise IntegrityError(str(exc)) from None

    name = str(meta["name"])
    if row_normalize_features is None:
        row_normalize_features = name.lower() in CITATION_DATASETS
    if row_normalize_features:
        features = row_normalize(features)
    log.info("loaded %s: %d nodes, %d undirected edges (%d edge lines), %d features, %d classes",
             name, n, graph.num_edges, graph.raw_edge_lines, c_in, k)
    return Dataset(name, graph, features, labels, k, splits)


# --------------------------------------------------------------------------- writing


def write_dataset(ds: Dataset, path) -> Path:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"name": ds.name, "num_nodes": ds.num_nodes,
            "num_features": ds.num_features, "num_classes": ds.num_classes}
    (root / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    (root / "edges.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in ds.graph.edges))
    with open(root / "features.csv", "w") as fh:
        if ds.num_features:
            np.savetxt(fh, ds.features, fmt="%.17g", delimiter=",")
        else:
            fh.write("\n" * ds.num_nodes)
    (root / "labels.csv").write_text("".join(f"{int(y)}\n" for y in ds.labels))
    for name, s in ds.splits.items():
        d = root / "splits" / name
        d.mkdir(parents=True, exist_ok=True)
        for part in SPLIT_PARTS:
            (d / f"{part}.txt").write_text("".join(f"{i}\n" for i in getattr(s, part)))
    return root


# --------------------------------------------------------------------------- splits


def largest_remainder(total: int, ratios: Sequence[float]) -> list[int]:
    """Integer sizes proportional to ``ratios`` summing to ``floor(sum(ratios) * total)``.
    Leftover units go to the largest fractional parts, earlier parts first on ties."""
    quotas = [r * total for r in ratios]
    target = int(np.floor(round(sum(ratios) * total, 9)))
    sizes = [int(np.floor(q + 1e-9)) for q in quotas]
    leftover = target - sum(sizes)
    order = sorted(range(len(ratios)), key=lambda j: (-(quotas[j] - sizes[j]), j))
    for j in order[:max(leftover, 0)]:
        sizes[j] += 1
    return sizes


def make_random_splits(ds: Dataset, ratios=(0.48, 0.32, 0.20), seed: int = 0, count: int = 10) -> list[Split]:
    """Stratified train/val/test splits; split ``i`` is drawn with seed ``seed + i``."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or sum(ratios) > 1 + 1e-12:
        raise ConfigError(f"ratios must be three positive numbers summing to <= 1, got {ratios}")
    by_class = []
    for q in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == q)
        if members.size < 3:
            raise SplitError(f"class {q} has only {members.size} labeled node(s); need at least 3")
        by_class.append(members)
    out = []
    for i in range(count):
        rng = np.random.default_rng(seed + i)
        parts = ([], [], [])
        for members in by_class:
            shuffled = rng.permutation(members)
            sizes = largest_remainder(members.size, ratios)
            bounds = np.cumsum([0] + sizes)
            for j in range(3):
                parts[j].append(shuffled[bounds[j]:bounds[j + 1]])
        train, val, test = (np.sort(np.concatenate(p)) for p in parts)
        out.append(Split(f"random_{i}", train, val, test).validate(ds.num_nodes, ds.labels))
    return out


# --------------------------------------------------------------------------- synthetic


def generate_sbm(block_sizes: Sequence[int], p_in: float, p_out: float, feature_dim: int = 16,
                 sigma: float = 0.5, seed: int = 0, name: str = "sbm") -> Dataset:
    """Planted-partition graph with noisy one-hot class features.

    Node features are the one-hot vector of the node's block plus Gaussian noise
    of standard deviation ``sigma``. A stratified 48/32/20 split is attached as
    ``"default"``.
    """
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ConfigError(f"edge probabilities must lie in [0, 1], got p_in={p_in}, p_out={p_out}")
    sizes = [int(b) for b in block_sizes]
    if not sizes or any(b < 1 for b in sizes):
        raise ConfigError(f"block sizes must be positive, got {block_sizes}")
    k = len(sizes)
    if feature_dim < k:
        raise ConfigError(f"feature_dim={feature_dim} cannot hold {k} one-hot class prototypes")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(k), sizes)
    n = labels.size
    iu, ju = np.triu_indices(n, 1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    hit = rng.random(iu.size) < prob
    graph = build_adjacency(np.stack([iu[hit], ju[hit]], axis=1), n)
    features = np.zeros((n, feature_dim))
    features[np.arange(n), labels] = 1.0
    features += sigma * rng.standard_normal((n, feature_dim))
    ds = Dataset(name, graph, features, labels, k)
    if min(sizes) >= 3:
        split = make_random_splits(ds, seed=seed, count=1)[0]
        split.name = "default"
        ds.splits["default"] = split
    return ds
