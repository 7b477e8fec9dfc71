import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import data_root
from glgnn.data import (Dataset, Split, generate_sbm, largest_remainder, load_dataset, make_random_splits,
                        write_dataset)
from glgnn.errors import ConfigError, IntegrityError, LoadError, ParseError, SplitError
from glgnn.graph import build_adjacency, node_homophily


def write_minimal(root, labels="0\n1\n", edges="0\t1\n", features="1,0\n0,1\n", meta=None):
    root.mkdir(parents=True, exist_ok=True)
    meta = meta or {"name": "tiny", "num_nodes": 2, "num_features": 2, "num_classes": 2}
    (root / "meta.json").write_text(json.dumps(meta))
    (root / "edges.tsv").write_text(edges)
    (root / "features.csv").write_text(features)
    (root / "labels.csv").write_text(labels)
    return root


def test_minimal_fixture_loads(tmp_path):
    ds = load_dataset(write_minimal(tmp_path / "d"))
    assert ds.num_nodes == 2 and ds.graph.num_edges == 1 and ds.num_classes == 2
    assert ds.features.tolist() == [[1, 0], [0, 1]]


def test_label_count_mismatch_is_integrity_error(tmp_path):
    with pytest.raises(IntegrityError, match="num_nodes"):
        load_dataset(write_minimal(tmp_path / "d", labels="0\n1\n1\n"))


def test_malformed_lines_report_file_and_line(tmp_path):
    with pytest.raises(ParseError, match=r"edges.tsv:2"):
        load_dataset(write_minimal(tmp_path / "a", edges="0\t1\n1 x\n"))
    with pytest.raises(ParseError, match=r"features.csv:2"):
        load_dataset(write_minimal(tmp_path / "b", features="1,0\n0,oops\n"))


def test_missing_directory_and_files(tmp_path):
    with pytest.raises(LoadError):
        load_dataset(tmp_path / "absent")
    root = write_minimal(tmp_path / "d")
    (root / "labels.csv").unlink()
    with pytest.raises(LoadError):
        load_dataset(root)


def test_label_out_of_range(tmp_path):
    with pytest.raises(IntegrityError):
        load_dataset(write_minimal(tmp_path / "d", labels="0\n5\n"))


def test_row_normalization_flag(tmp_path):
    feats = "2,2\n0,0\n"
    meta = {"name": "cora", "num_nodes": 2, "num_features": 2, "num_classes": 2}
    ds = load_dataset(write_minimal(tmp_path / "c", features=feats, meta=meta))
    assert ds.features.tolist() == [[0.5, 0.5], [0, 0]]
    raw = load_dataset(tmp_path / "c", row_normalize_features=False)
    assert raw.features.tolist() == [[2, 2], [0, 0]]


def test_bad_split_file_rejected(tmp_path):
    root = write_minimal(tmp_path / "d")
    sp = root / "splits" / "s"
    sp.mkdir(parents=True)
    (sp / "train.txt").write_text("0\n")
    (sp / "val.txt").write_text("0\n")
    (sp / "test.txt").write_text("1\n")
    with pytest.raises(IntegrityError, match="overlap"):
        load_dataset(root)


def test_round_trip_sbm(tmp_path):
    ds = generate_sbm([10, 12], 0.5, 0.1, feature_dim=5, sigma=0.7, seed=3)
    back = load_dataset(write_dataset(ds, tmp_path / "sbm"))
    assert back == ds
    assert np.array_equal(back.features, ds.features)


def test_round_trip_empty_edges_and_name(tmp_path):
    g = build_adjacency([], 4)
    ds = Dataset("lonely", g, np.arange(8.0).reshape(4, 2) / 3, np.array([0, 1, -1, 1]), 2,
                 {"s": Split("s", [0, 1], [3], [2])})
    back = load_dataset(write_dataset(ds, tmp_path / "x"))
    assert back == ds and back.name == "lonely" and back.graph.num_edges == 0


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(3, 15), min_size=1, max_size=4), st.integers(0, 1000))
def test_round_trip_property(tmp_path_factory, sizes, seed):
    ds = generate_sbm(sizes, 0.4, 0.05, feature_dim=max(len(sizes), 3), sigma=1.3, seed=seed)
    assert load_dataset(write_dataset(ds, tmp_path_factory.mktemp("rt"))) == ds


def test_splits_single_class_exact_sizes():
    ds = Dataset("one", build_adjacency([], 100), np.zeros((100, 1)), np.zeros(100, dtype=int), 1)
    s = make_random_splits(ds, count=1)[0]
    assert (s.train.size, s.val.size, s.test.size) == (48, 32, 20)


def test_splits_cover_all_labeled_nodes_and_are_seeded():
    ds = generate_sbm([17, 23, 9], 0.3, 0.05, sigma=1.0, seed=0)
    splits = make_random_splits(ds, seed=5, count=3)
    for s in splits:
        assert sorted(np.concatenate([s.train, s.val, s.test]).tolist()) == list(range(ds.num_nodes))
    again = make_random_splits(ds, seed=5, count=3)
    assert all(np.array_equal(a.train, b.train) for a, b in zip(splits, again))
    assert not np.array_equal(splits[0].train, splits[1].train)
    assert np.array_equal(make_random_splits(ds, seed=6, count=1)[0].train, splits[1].train)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(3, 40), min_size=1, max_size=5), st.integers(0, 10**6))
def test_split_proportions_within_one_node(sizes, seed):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rng = np.random.default_rng(seed)
    labels = labels[rng.permutation(labels.size)]
    ds = Dataset("p", build_adjacency([], labels.size), np.zeros((labels.size, 1)), labels, len(sizes))
    s = make_random_splits(ds, seed=seed, count=1)[0]
    for q, size in enumerate(sizes):
        for part, ratio in zip((s.train, s.val, s.test), (0.48, 0.32, 0.20)):
            assert abs(np.sum(labels[part] == q) - ratio * size) <= 1
    parts = np.concatenate([s.train, s.val, s.test])
    assert np.unique(parts).size == parts.size


def test_split_errors():
    ds = Dataset("tiny", build_adjacency([], 5), np.zeros((5, 1)), np.array([0, 0, 0, 1, 1]), 2)
    with pytest.raises(SplitError, match="class 1"):
        make_random_splits(ds)
    with pytest.raises(ConfigError):
        make_random_splits(ds, ratios=(0.6, 0.6, 0.1))


def test_largest_remainder():
    assert largest_remainder(10, (0.48, 0.32, 0.20)) == [5, 3, 2]
    # quotas 3.36, 2.24, 1.4: the spare unit goes to the largest fraction
    assert largest_remainder(7, (0.48, 0.32, 0.20)) == [3, 2, 2]
    assert sum(largest_remainder(11, (0.5, 0.25))) == 8


def test_sbm_cliques_and_determinism():
    ds = generate_sbm([5, 6], 1.0, 0.0, seed=1)
    assert ds.graph.num_edges == 10 + 15
    assert node_homophily(ds.graph, ds.labels) == 1.0
    again = generate_sbm([5, 6], 1.0, 0.0, seed=1)
    assert again == ds
    assert np.bincount(ds.labels).tolist() == [5, 6]
    with pytest.raises(ConfigError):
        generate_sbm([5], 1.5, 0.0)


def test_sbm_homophily_baseline_when_uninformative():
    ds = generate_sbm([200, 200], 0.1, 0.1, seed=2)
    assert abs(node_homophily(ds.graph, ds.labels) - 0.5) <= 0.05


def test_sbm_noise_free_features_separate_classes():
    ds = generate_sbm([8, 8, 8], 0.5, 0.1, feature_dim=4, sigma=0.0, seed=0)
    assert np.array_equal(np.argmax(ds.features, axis=1), ds.labels)


def test_cora_directory_shape():
    path = data_root() / "cora"
    if not (path / "meta.json").is_file():
        pytest.skip(f"citation data not present at {path}")
    ds = load_dataset(path)
    assert (ds.num_nodes, ds.num_features, ds.num_classes) == (2708, 1433, 7)
