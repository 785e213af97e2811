import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from setinject.core import make_rng
from setinject.data import gen_synthetic
from setinject.train import (
    TrainConfig,
    adam_step,
    average_curves,
    batch_cross_entropy,
    cross_entropy,
    lr_schedule,
    make_model,
    minibatches,
    run_cv,
    stratified_folds,
    train_model,
)


def test_cross_entropy_uniform():
    loss, grad = cross_entropy([0.3, 0.3], 1)
    assert loss == pytest.approx(math.log(2))
    np.testing.assert_allclose(grad, [0.5, -0.5])


def test_cross_entropy_saturated():
    loss, grad = cross_entropy([20.0, -20.0], 0)
    assert loss < 1e-8
    np.testing.assert_allclose(grad, [0, 0], atol=1e-8)


def test_cross_entropy_bad_label():
    with pytest.raises(ValueError):
        cross_entropy([0.0, 1.0], 2)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=5), st.data())
def test_cross_entropy_gradient_fd(z, data):
    label = data.draw(st.integers(0, len(z) - 1))
    _, grad = cross_entropy(z, label)
    h = 1e-6
    for i in range(len(z)):
        zp, zm = list(z), list(z)
        zp[i] += h
        zm[i] -= h
        num = (cross_entropy(zp, label)[0] - cross_entropy(zm, label)[0]) / (2 * h)
        assert grad[i] == pytest.approx(num, abs=1e-6)


def test_batch_cross_entropy_matches_single():
    logits = np.array([[1.0, 2.0], [0.5, -0.5], [3.0, 3.0]])
    labels = np.array([0, 0, 1])
    mean, grad, losses = batch_cross_entropy(logits, labels)
    for i in range(3):
        l, g = cross_entropy(logits[i], labels[i])
        assert losses[i] == pytest.approx(l)
        np.testing.assert_allclose(grad[i] * 3, g)
    assert mean == pytest.approx(losses.mean())


def test_adam_zero_grads_fixed_point():
    fresh = {"w": np.array([1.0, -2.0])}
    _, state = adam_step(fresh, {"w": np.zeros(2)}, None, 0.1)
    np.testing.assert_array_equal(fresh["w"], [1.0, -2.0])
    assert state.t == 1


def test_adam_zero_grads_decay_moments():
    params = {"w": np.array([1.0, -2.0])}
    _, state = adam_step(params, {"w": np.array([0.5, 0.5])}, None, 0.1)
    m, v = state.m["w"].copy(), state.v["w"].copy()
    adam_step(params, {"w": np.zeros(2)}, state, 0.1)
    np.testing.assert_allclose(state.m["w"], 0.9 * m)
    np.testing.assert_allclose(state.v["w"], 0.999 * v)


def test_adam_first_step_is_lr_sign():
    params = {"w": np.array([0.0, 0.0])}
    adam_step(params, {"w": np.array([3.0, -0.01])}, None, 0.1)
    np.testing.assert_allclose(params["w"], [-0.1, 0.1], rtol=1e-5)


def test_adam_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, None, 0.1)


def test_lr_schedule():
    cfg = TrainConfig()
    assert [cfg.lr_at(e) for e in (0, 49, 50, 99, 100, 299)] == [0.01, 0.01, 0.005, 0.005, 0.0025, 0.01 * 0.5**5]
    assert lr_schedule(0.01, 150) == 0.01 * 0.125


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(variant="nope")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=10, max_size=60), st.integers(2, 10))
def test_stratified_folds_partition(labels, k):
    labels = np.array(labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        folds = stratified_folds(labels, k, np.random.default_rng(0))
    allidx = np.sort(np.concatenate(folds))
    assert np.array_equal(allidx, np.arange(len(labels)))
    for c in np.unique(labels):
        counts = [int((labels[f] == c).sum()) for f in folds]
        assert max(counts) - min(counts) <= 1


def test_stratified_warns_on_rare_class():
    with pytest.warns(UserWarning):
        stratified_folds([0] * 20 + [1] * 3, 5, np.random.default_rng(0))


def test_minibatches_no_singleton():
    b = minibatches(np.arange(65), 32)
    assert [len(x) for x in b] == [32, 33]
    assert [len(x) for x in minibatches(np.arange(64), 32)] == [32, 32]


def test_training_deterministic():
    ds = gen_synthetic("CycleVsChord", 24, seed=0)
    cfg = TrainConfig(variant="exp-mlp", epochs=3, hidden=8, layers=2, batch_size=8)
    runs = []
    for _ in range(2):
        model = make_model(ds, cfg, seed=4)
        train_model(model, ds.graphs, cfg, make_rng(9))
        runs.append(model.params)
    for k in runs[0]:
        assert np.array_equal(runs[0][k], runs[1][k])


def test_separable_task_fits_fast():
    ds = gen_synthetic("CycleVsChord", 60, seed=3)
    cfg = TrainConfig(variant="exp-mlp", epochs=50, hidden=16, layers=3)
    rows = train_model(make_model(ds, cfg, seed=0), ds.graphs, cfg, make_rng(0))
    assert max(r["train_acc"] for r in rows) == 1.0


def test_cv_one_epoch_bookkeeping(tmp_path):
    ds = gen_synthetic("CycleVsChord", 30, seed=1)
    cfg = TrainConfig(variant="exp-fixed", epochs=1, hidden=4, layers=2, folds=3)
    rep = run_cv(ds, cfg, tmp_path)
    assert rep.best_epoch == 0 and len(rep.fold_accuracies) == 3
    for f in range(3):
        assert sum(1 for r in rep.curves if r["fold"] == f and r["split"] == "val") == 1
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["mean"] == rep.mean
    assert (tmp_path / "curves.csv").exists() and (tmp_path / "curves_mean.csv").exists()


def test_average_curves():
    rows = [
        {"fold": 0, "epoch": 0, "split": "val", "accuracy": 0.5, "loss": 1.0},
        {"fold": 1, "epoch": 0, "split": "val", "accuracy": 1.0, "loss": 0.0},
    ]
    (avg,) = average_curves(rows)
    assert avg["accuracy"] == pytest.approx(0.75) and avg["loss"] == pytest.approx(0.5)
