import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from glgnn.config import TrainConfig, apply_overrides
from glgnn.data import generate_sbm
from glgnn.errors import ContractError, NumericError
from glgnn.model import forward, init_params
from glgnn.training import (AdamState, accuracy, adam_step, estimate_flops, evaluate, grid_points, grid_search,
                            load_checkpoint, read_metrics, save_checkpoint, train, write_metrics)


def cfg_with(**kw):
    return apply_overrides(TrainConfig(), kw).validate()


@pytest.fixture(scope="module")
def sbm():
    return generate_sbm([50, 50], 0.9, 0.05, sigma=0.5, seed=0)


@pytest.fixture(scope="module")
def hard_sbm():
    # weak structure and heavy noise: an untrained model is far from perfect
    return generate_sbm([40, 40, 40], 0.12, 0.04, feature_dim=8, sigma=1.5, seed=1)


# --------------------------------------------------------------------------- Adam


def test_adam_first_step_is_lr_sign():
    p = {"x": np.array([[2.0]])}
    new = adam_step(p, {"x": np.array([[3.0]])}, AdamState(), lr=0.1, wd=0.0)
    assert new["x"][0, 0] == pytest.approx(2.0 - 0.1, abs=1e-8)


def test_adam_zero_gradient_fixed_point():
    p = {"x": np.array([[1.5, -2.0]])}
    state = AdamState()
    for _ in range(3):
        p = adam_step(p, {"x": np.zeros((1, 2))}, state, lr=0.1, wd=0.0)
    assert p["x"].tolist() == [[1.5, -2.0]]


@pytest.mark.parametrize("wd", [0.0, 0.01])
def test_adam_matches_scalar_reference(wd):
    theta0, lr = 1.3, 0.05
    ref = oracles.adam_scalar(theta0, lambda t: t, lr, 3, wd=wd)
    p, state = {"x": np.array([[theta0]])}, AdamState()
    for expected in ref:
        p = adam_step(p, {"x": p["x"].copy()}, state, lr=lr, wd=wd)
        assert abs(p["x"][0, 0] - expected) <= 1e-12


def test_adam_shape_mismatch():
    with pytest.raises(ContractError):
        adam_step({"x": np.zeros((2, 2))}, {"x": np.zeros((1, 2))}, AdamState(), 0.1, 0.0)


# --------------------------------------------------------------------------- evaluation


def test_accuracy_cases():
    y = np.array([0, 1, 2, 1])
    assert accuracy(np.eye(3)[y], y, [0, 1, 2, 3]) == 1.0
    assert accuracy(np.full((4, 3), 1 / 3), y, [0, 1, 2, 3]) == 0.25
    with pytest.raises(ContractError):
        accuracy(np.eye(3)[y], y, [])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_accuracy_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    y_hat = rng.integers(0, 3, (12, 4)).astype(float)  # small integers force ties
    y = rng.integers(0, 4, 12)
    idx = rng.choice(12, 7, replace=False)
    assert accuracy(y_hat, y, idx) == oracles.accuracy(y_hat, y, idx)


def test_eval_forward_consumes_no_randomness(sbm):
    cfg = cfg_with(**{"backbone.dropout": 0.7})
    params = init_params(cfg, sbm.num_features, 2, np.random.default_rng(0))
    rng = np.random.default_rng(5)
    a = forward(cfg, params, sbm.graph, sbm.features, 2, training=False, rng=rng).y_hat.value
    b = forward(cfg, params, sbm.graph, sbm.features, 2, training=False, rng=None, record=False).y_hat.value
    assert np.array_equal(a, b)
    assert rng.random() == np.random.default_rng(5).random()


# --------------------------------------------------------------------------- training


def test_sbm_separation(sbm):
    m = train(sbm, sbm.splits["default"], cfg_with(max_epochs=200, patience=100))
    assert m.test_acc >= 0.95


def test_lr_zero_keeps_initialization(hard_sbm):
    split = hard_sbm.splits["default"]
    cfg = cfg_with(lr=0.0, lr_gnn=0.0, max_epochs=15, patience=10)
    m = train(hard_sbm, split, cfg)
    init = init_params(cfg, hard_sbm.num_features, hard_sbm.num_classes,
                       np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0]))
    for name, v in init.items():
        assert np.array_equal(m.params[name], v)
    assert m.test_acc == m.init_acc["test"]
    assert all(r.val_acc == m.init_acc["val"] for r in m.history)


def test_early_stopping_reports_best_val_epoch(hard_sbm):
    m = train(hard_sbm, hard_sbm.splits["default"], cfg_with(max_epochs=300, patience=20))
    best = max(r.val_acc for r in m.history)
    rec = next(r for r in m.history if r.val_acc == best)
    assert (m.best_epoch, m.best_val, m.test_acc) == (rec.epoch, best, rec.test_acc)
    assert m.best_epoch <= m.last_epoch
    if m.stopped_early:
        assert m.last_epoch - m.best_epoch == 20
    for r in m.history:
        assert 0 <= r.train_acc <= 1 and 0 <= r.val_acc <= 1 and 0 <= r.test_acc <= 1


@pytest.mark.parametrize("kind", ["gat", "gcnii"])
def test_other_backbones_train(sbm, kind):
    layers = 4 if kind == "gcnii" else 2
    m = train(sbm, sbm.splits["default"],
              cfg_with(**{"backbone.kind": kind, "backbone.layers": layers, "max_epochs": 60, "patience": 30}))
    assert m.test_acc >= 0.9


def test_linear_head_baseline_trains(sbm):
    m = train(sbm, sbm.splits["default"],
              cfg_with(**{"head.kind": "linear", "loss.gamma": 0.0, "max_epochs": 60, "patience": 30}))
    assert m.test_acc >= 0.9 and np.isnan(m.history[0].loss_gl)


def test_non_finite_loss_names_epoch(sbm):
    with pytest.raises(NumericError, match="epoch 1"):
        train(sbm, sbm.splits["default"], cfg_with(lr=1e300, lr_gnn=1e300, max_epochs=5, patience=5))


def test_training_is_deterministic(tmp_path, sbm):
    cfg = cfg_with(max_epochs=25, patience=25, seed=3)
    a = write_metrics(tmp_path / "a.csv", train(sbm, sbm.splits["default"], cfg))
    b = write_metrics(tmp_path / "b.csv", train(sbm, sbm.splits["default"], cfg))
    assert a.read_bytes() == b.read_bytes()
    assert len(read_metrics(a)) == 25


def test_checkpoint_round_trip(tmp_path, sbm):
    cfg = cfg_with(max_epochs=3, patience=3, **{"loss.r": 7.0})
    m = train(sbm, sbm.splits["default"], cfg)
    path = save_checkpoint(tmp_path / "ck.bin", m.params, cfg)
    params, cfg2 = load_checkpoint(path)
    assert list(params) == list(m.params)
    assert all(np.array_equal(params[k], m.params[k]) for k in params)
    assert cfg2 == cfg
    assert evaluate(sbm, sbm.splits["default"], params, cfg2)["val"] == m.best_val


# --------------------------------------------------------------------------- grid search


def test_singleton_grid_equals_train(sbm):
    cfg = cfg_with(max_epochs=20, patience=20)
    res = grid_search(sbm, sbm.splits["default"], {"lr": [0.01]}, cfg)
    direct = train(sbm, sbm.splits["default"], cfg)
    assert [r.__dict__ for r in res.best.metrics.history] == [r.__dict__ for r in direct.history]


def test_grid_prefers_nonzero_lr(hard_sbm):
    cfg = cfg_with(max_epochs=40, patience=40)
    res = grid_search(hard_sbm, hard_sbm.splits["default"], {"lr": [0.0, 0.01], "lr_gnn": [0.0, 0.01]}, cfg)
    assert res.best.cfg.lr == 0.01


def test_grid_tie_breaks_on_gamma_then_lr(sbm):
    cfg = cfg_with(max_epochs=5, patience=5)
    res = grid_search(sbm, sbm.splits["default"], {"loss.gamma": [1.0, 0.1], "lr": [0.01, 0.001]}, cfg)
    top = [t for t in res.trials if t.metrics.best_val == res.best.metrics.best_val]
    assert res.best.cfg.loss.gamma == min(t.cfg.loss.gamma for t in top)
    same_gamma = [t for t in top if t.cfg.loss.gamma == res.best.cfg.loss.gamma]
    assert res.best.cfg.lr == min(t.cfg.lr for t in same_gamma)


def test_budgeted_grid_is_reproducible(sbm):
    grid = {"lr": [1e-1, 1e-2, 1e-3], "wd": [1e-3, 0.0], "loss.gamma": [1.0, 0.1]}
    pts = grid_points(grid, budget=8, seed=4)
    assert len(pts) == 8 and pts == grid_points(grid, budget=8, seed=4)
    cfg = cfg_with(max_epochs=4, patience=4)
    a = grid_search(sbm, sbm.splits["default"], grid, cfg, budget=8, seed=4)
    b = grid_search(sbm, sbm.splits["default"], grid, cfg, budget=8, seed=4, workers=3)
    assert a.best.point == b.best.point
    assert [t.metrics.best_val for t in a.trials] == [t.metrics.best_val for t in b.trials]


# --------------------------------------------------------------------------- FLOPs


def test_flops_unit_substitution():
    assert estimate_flops(1, 1, 1, 1, 1, 1).total == 7


def test_flops_gat_difference_and_linearity():
    n, d = 300, 3.7
    gcn = estimate_flops(n, 50, 16, 4, 2, 12, "gcn")
    gat = estimate_flops(n, 50, 16, 4, 2, 12, "gat", avg_degree=d)
    assert gat.total - gcn.total == pytest.approx(n * d * 16 * 2)
    f = [estimate_flops(m, 50, 16, 4, 2, 12).total for m in (100, 200, 300)]
    assert f[2] - f[1] == pytest.approx(f[1] - f[0])
    const = 2 * 12 * 16 * 4
    assert f[0] - const == pytest.approx((f[1] - const) / 2)
