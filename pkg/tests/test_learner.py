import math

import numpy as np
import pytest

from oracles import brute_force_ols, enumerate_splits, permutations_of
from streamqoe.errors import EmptyTrain, FeatureMismatch, LengthMismatch, SingularDesign
from streamqoe.feature_lab import FeatureMatrix
from streamqoe.learner import (
    ForestModel, ForestParams, LinearModel, available_backends, evaluate, fit_forest, fit_linear,
    fit_tree, predict, rmse_from_mse,
)
from streamqoe.learner.forest import dumps_forest, loads_forest

BACKENDS = available_backends()
STUMP = ForestParams(n_estimators=1, max_depth=1, max_features_fraction=1.0, bootstrap=False)


@pytest.mark.parametrize("backend", BACKENDS)
def test_hand_enumerable_stump(backend):
    X = np.array([[1.0], [2.0], [8.0], [9.0]])
    y = np.array([0.0, 0.0, 10.0, 10.0])
    tree = fit_tree(X, y, STUMP, backend=backend)
    assert tree.to_nested() == {"split": {
        "feature_index": 0, "threshold": 5.0,
        "left": {"leaf": {"value": 0.0, "n": 2}},
        "right": {"leaf": {"value": 10.0, "n": 2}}}}
    (interval, sse, lm, rm), *_ = enumerate_splits(X[:, 0], y)
    assert interval == (2.0, 8.0) and sse == 0 and (lm, rm) == (0.0, 10.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_stump_is_order_invariant(backend):
    pts = [(1.0, 0.0), (2.0, 0.0), (8.0, 10.0), (9.0, 10.0)]
    for perm in permutations_of(pts):
        X = np.array([[p[0]] for p in perm])
        y = np.array([p[1] for p in perm])
        t = fit_tree(X, y, STUMP, backend=backend)
        assert (t.threshold[0], t.value[t.left[0]], t.value[t.right[0]]) == (5.0, 0.0, 10.0)


@pytest.mark.parametrize("seed", range(25))
def test_depth_one_split_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 30))
    x = rng.integers(0, 12, n).astype(float)
    y = rng.normal(size=n).round(2)
    if len(set(x)) < 2:
        return
    tree = fit_tree(x[:, None], y, STUMP)
    best = enumerate_splits(x, y)
    best_sse = best[0][1]
    ties = [r for r in best if math.isclose(r[1], best_sse, rel_tol=1e-9, abs_tol=1e-12)]
    lo, hi = min(r[0] for r in ties)
    assert tree.threshold[0] == (lo + hi) / 2
    assert tree.value[tree.left[0]] == pytest.approx(ties[0][2], abs=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_constant_target_is_exact(backend):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 11))
    y = np.full(200, 3.7)
    model = fit_forest((X, y), ForestParams(n_estimators=30, seed=1), backend=backend)
    assert all(t.n_nodes == 1 for t in model.trees)
    assert np.all(model.predict(rng.normal(size=(50, 11)), backend) == 3.7)


def test_backends_are_bit_identical():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(11)
    X = rng.normal(size=(300, 11))
    X[:, 2] = rng.integers(0, 4, 300)  # ties in a column
    y = X[:, 0] * 2 + np.sin(X[:, 1]) + rng.normal(scale=0.1, size=300)
    params = ForestParams(n_estimators=5, seed=4)
    a = fit_forest((X, y), params, backend="cython")
    b = fit_forest((X, y), params, backend="python")
    for ta, tb in zip(a.trees, b.trees):
        for name in ("feature", "threshold", "left", "right", "value", "n_samples"):
            assert np.array_equal(getattr(ta, name), getattr(tb, name)), name
    Xt = rng.normal(size=(100, 11))
    assert np.array_equal(a.predict_raw(Xt, "cython"), a.predict_raw(Xt, "python"))


def test_depth_bound_and_leaf_size():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(400, 11))
    y = rng.normal(size=400)
    for depth in (0, 1, 3, 6):
        model = fit_forest((X, y), ForestParams(n_estimators=3, max_depth=depth, seed=depth))
        assert max(t.depth() for t in model.trees) <= depth
    model = fit_forest((X, y), ForestParams(n_estimators=3, min_samples_leaf=10))
    for t in model.trees:
        assert t.n_samples[t.feature < 0].min() >= 10


def test_bagging_beats_single_tree_on_noise():
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(600, 11))
    truth = lambda A: 3 + np.tanh(A[:, 0]) + 0.5 * A[:, 1]
    y = truth(X) + rng.normal(scale=0.5, size=600)
    Xt = rng.uniform(-2, 2, size=(400, 11))
    one = fit_forest((X, y), ForestParams(n_estimators=1, seed=3, max_features_fraction=1.0))
    many = fit_forest((X, y), ForestParams(n_estimators=60, seed=3))
    err = lambda m: evaluate(m.predict_raw(Xt), truth(Xt)).mse
    assert err(many) < 0.6 * err(one)


def test_forest_is_seeded_and_serializes(tmp_path):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(150, 11))
    y = rng.uniform(1, 5, 150)
    p = ForestParams(n_estimators=8, seed=9)
    a, b = fit_forest((X, y), p), fit_forest((X, y), p)
    assert dumps_forest(a) == dumps_forest(b)
    c = fit_forest((X, y), ForestParams(n_estimators=8, seed=10))
    assert dumps_forest(a) != dumps_forest(c)
    a.save(tmp_path / "f.bin")
    back = ForestModel.load(tmp_path / "f.bin")
    assert np.array_equal(back.predict(X), a.predict(X))
    with pytest.raises(ValueError):
        loads_forest(b"nope")


def test_forest_errors_and_names():
    with pytest.raises(EmptyTrain):
        fit_forest((np.zeros((0, 3)), np.zeros(0)))
    m = FeatureMatrix(np.random.default_rng(0).normal(size=(20, 11)), np.full(20, 2.0))
    model = fit_forest(m, ForestParams(n_estimators=2))
    assert np.all(predict(model, m) == 2.0)
    with pytest.raises(FeatureMismatch):
        predict(model, m.select(m.feature_names[:5]))
    assert ForestParams().n_candidates(11) == 7


def test_linear_matches_normal_equations():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 5))
    y = X @ np.array([0.5, -1, 2, 0, 0.1]) + 3 + rng.normal(scale=0.2, size=80)
    model = fit_linear((X, y))
    coef, icept = brute_force_ols(X, y)
    assert np.allclose(model.coefficients, coef, atol=1e-10)
    assert model.intercept == pytest.approx(icept, abs=1e-10)


def test_linear_singular_design_and_clamping(tmp_path):
    X = np.ones((10, 2))
    X[:, 1] = np.arange(10)
    X = np.hstack([X, X[:, 1:2] * 2])
    y = np.arange(10.0)
    with pytest.raises(SingularDesign):
        fit_linear((X, y))
    ridge = fit_linear((X, y), ridge_fallback=True)
    assert ridge.ridge
    model = fit_linear((np.arange(10.0)[:, None], np.arange(10.0) / 2))
    out = model.predict(np.array([[0.0], [4.0], [20.0]]))
    assert list(out) == [1.0, pytest.approx(2.0), 5.0] and model.clamp_events == 2
    model.save(tmp_path / "m.json")
    assert LinearModel.load(tmp_path / "m.json") == model


@pytest.mark.parametrize("mse,rmse", [(2.8306e-05, 0.0053), (3.1047e-06, 0.0018)])
def test_reported_rmse_pairs(mse, rmse):
    assert abs(rmse_from_mse(mse) - rmse) <= 5e-5


def test_metric_identities():
    rng = np.random.default_rng(12)
    for _ in range(100):
        n = int(rng.integers(2, 200))
        t = rng.uniform(1, 5, n)
        p = t + rng.normal(scale=rng.uniform(0.01, 2), size=n)
        m = evaluate(p, t)
        ss_res = sum((a - b) ** 2 for a, b in zip(t, p))
        ss_tot = sum((a - t.mean()) ** 2 for a in t)
        assert abs(m.r2 - (1 - ss_res / ss_tot)) <= 1e-9
        assert abs(m.mae - sum(abs(a - b) for a, b in zip(t, p)) / n) <= 1e-9
        assert abs(m.rmse - math.sqrt(m.mse)) <= 1e-12


def test_metric_edge_cases():
    m = evaluate([1.0, 2.0], [3.0, 3.0])
    assert m.degenerate_target and math.isnan(m.r2) and m.to_dict()["r2"] is None
    assert evaluate([1, 2], [1, 2]).r2 == 1.0
    with pytest.raises(LengthMismatch):
        evaluate([1, 2], [1])


def test_pure_python_switch_selects_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, STREAMQOE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from streamqoe.learner import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    assert out == "python"
