import json

import numpy as np
import pytest

from proemb import simdata
from proemb.estimators import (
    BaseLearnerSpec,
    EmptyArmError,
    GradientBoostedTrees,
    LinearRidge,
    MlpRegressor,
    TLearnerModel,
    estimate_ace,
    fit_naive_tlearner,
    fit_ols,
    fit_tlearner,
    fit_tree,
    fit_tsls,
    predict_ite,
)
from proemb.numerics import RngStream


def _tsls_oracle(y, T, Z, Zngb):
    n = len(y)
    W = np.column_stack([np.ones(n), T, Zngb])
    E = np.column_stack([T, Z])
    gamma = np.linalg.inv(W.T @ W) @ W.T @ E
    Xh = np.column_stack([np.ones(n), W @ gamma])
    return (np.linalg.inv(Xh.T @ Xh) @ Xh.T @ y)[1]


def test_tsls_matches_normal_equation_oracle():
    g = RngStream(0).generator
    n = 50
    u = g.normal(size=n)
    Zngb = g.normal(size=(n, 2)) + u[:, None]
    Z = Zngb @ np.array([[1.0, 0.5], [-0.3, 1.2]]) + u[:, None] + 0.5 * g.normal(size=(n, 2))
    T = (g.random(n) < 0.5).astype(float)
    y = 1.0 * T + u + 0.3 * g.normal(size=n)
    res = fit_tsls(y, T, Z, Zngb)
    assert abs(res.theta_hat - _tsls_oracle(y, T, Z, Zngb)) < 1e-8
    assert res.diagnostics["rank_first_stage"] == 4


def test_tsls_without_proxies_is_ols():
    g = RngStream(1).generator
    T = g.integers(0, 2, 80).astype(float)
    y = 2 * T + g.normal(size=80)
    empty = np.zeros((80, 0))
    slope = np.polyfit(T, y, 1)[0]
    assert abs(fit_tsls(y, T, empty, empty).theta_hat - slope) < 1e-10
    assert abs(fit_ols(y, T) - slope) < 1e-10


def test_tsls_runs_when_p_exceeds_n():
    g = RngStream(2).generator
    n, V = 40, 100
    Z = g.poisson(0.5, size=(n, V)).astype(float)
    res = fit_tsls(g.normal(size=n), g.integers(0, 2, n), Z, g.poisson(0.5, size=(n, V)).astype(float))
    assert np.isfinite(res.theta_hat)
    assert res.diagnostics["rank_first_stage"] <= n


def test_tsls_errors():
    with pytest.raises(ValueError):
        fit_tsls(np.ones(5), np.ones(5), np.zeros((5, 1)), np.zeros((5, 1)))
    with pytest.raises(ValueError):
        fit_tsls(np.ones(1), np.ones(1), np.zeros((1, 1)), np.zeros((1, 1)))


def test_ols_with_controls():
    g = RngStream(3).generator
    Z = g.normal(size=(60, 3))
    T = g.integers(0, 2, 60)
    y = 1.5 * T + Z @ [1.0, -2.0, 0.5]
    assert abs(fit_ols(y, T, Z) - 1.5) < 1e-10


def test_linear_ridge_affine_invariance():
    g = RngStream(4).generator
    X = g.normal(size=(30, 4))
    y = g.normal(size=30)
    A = g.normal(size=(4, 4)) + 3 * np.eye(4)
    c = g.normal(size=4)
    Xn = g.normal(size=(10, 4))
    p1 = LinearRidge(0.0).fit(X, y).predict(Xn)
    p2 = LinearRidge(0.0).fit(X @ A + c, y).predict(Xn @ A + c)
    assert np.max(np.abs(p1 - p2)) < 1e-6


def _noiseless(n=300, d=5, tau=1.0, seed=0):
    g = RngStream(seed).generator
    X = g.normal(size=(n, d))
    T = g.integers(0, 2, n)
    y = X @ g.normal(size=d) + tau * T
    return X, T, y


def test_tlearner_noiseless_linear_recovers_tau():
    X, T, y = _noiseless(tau=1.7)
    model = fit_tlearner(X, T, y, BaseLearnerSpec.linear(0.0))
    assert np.max(np.abs(predict_ite(model, X) - 1.7)) < 1e-8


def test_tlearner_on_simplex_confounders():
    # rows of U sum to one, so U is collinear with the intercept; min-norm handles it
    r = RngStream(5)
    U = simdata.gen_confounders(400, 6, r).U
    T = r.generator.integers(0, 2, 400)
    y = U @ r.generator.normal(0, 3, 6) + T
    rep = estimate_ace(fit_tlearner(U, T, y, BaseLearnerSpec.linear(0.0)), U)
    assert abs(rep.ace_hat - 1.0) < 1e-6


def test_tlearner_constant_outcome():
    X, T, _ = _noiseless()
    for spec in (BaseLearnerSpec.linear(), BaseLearnerSpec.boosted(trees=5)):
        model = fit_tlearner(X, T, np.full(len(T), 4.0), spec)
        assert np.allclose(model.mu_t.predict(X), 4.0) and np.allclose(model.mu_c.predict(X), 4.0)


def test_tlearner_empty_arm():
    X, _, y = _noiseless()
    with pytest.raises(EmptyArmError):
        fit_tlearner(X, np.ones(len(y), dtype=int), y)
    with pytest.raises(EmptyArmError):
        fit_naive_tlearner(X, np.zeros(len(y), dtype=int), y)


def test_predict_ite_contract():
    X, T, y = _noiseless()
    lin = LinearRidge().fit(X, y)
    assert np.all(predict_ite(TLearnerModel(lin, lin, 5), X) == 0)

    class Shift:
        def __init__(self, base, k):
            self.base, self.k = base, k

        def predict(self, X):
            return self.base.predict(X) + self.k

    assert np.allclose(predict_ite(TLearnerModel(Shift(lin, 1.0), lin, 5), X), 1.0)
    model = fit_tlearner(X, T, y + np.sin(X[:, 0]) * T, BaseLearnerSpec.boosted(trees=10))
    ite = predict_ite(model, X)
    assert np.array_equal(ite, model.mu_t.predict(X) - model.mu_c.predict(X))
    assert np.array_equal(predict_ite(model.swapped(), X), -ite)
    with pytest.raises(ValueError):
        predict_ite(model, X[:, :3])


def test_estimate_ace_report(tmp_path):
    X, T, y = _noiseless()
    model = fit_tlearner(X, T, y + 0.1 * np.cos(X[:, 1]) * T, BaseLearnerSpec.boosted(trees=10))
    rep = estimate_ace(model, X, method="PE-GB", seed=3, digest="abc")
    assert abs(rep.ace_hat - sum(rep.ite.tolist()) / len(rep.ite)) < 1e-12
    rep.write_json(tmp_path / "r.json")
    blob = json.loads((tmp_path / "r.json").read_text())
    assert set(blob) == {"method", "ace_hat", "seed", "n", "d_or_V", "base_learner", "config_digest"}
    assert blob["d_or_V"] == 5 and blob["base_learner"]["kind"] == "gb"
    rep.write_ite_csv(tmp_path / "ite.csv")
    lines = (tmp_path / "ite.csv").read_text().splitlines()
    assert lines[0] == "node,ite" and len(lines) == len(X) + 1
    with pytest.raises(ValueError):
        estimate_ace(model, np.zeros((0, 5)))


def test_naive_tlearner_noiseless_linear():
    X, T, y = _noiseless(n=200, d=4)
    rep = fit_naive_tlearner(X, T, y, BaseLearnerSpec.linear(0.0))
    assert np.max(np.abs(rep.ite - 1.0)) < 1e-8


def test_boosting_stumps_on_step_function():
    g = RngStream(6).generator
    X = g.uniform(-1, 1, size=(200, 3))
    y = np.where(X[:, 1] > 0.2, 2.0, -1.0)
    gb = GradientBoostedTrees(n_trees=50, max_depth=1).fit(X, y)
    assert np.mean((gb.predict(X) - y) ** 2) < 0.01 * y.var()
    assert all(t.depth == 1 for t in gb.trees_)
    assert gb.train_loss_[-1] < gb.train_loss_[0]


def test_boosting_matches_sklearn_on_training_rows():
    sk = pytest.importorskip("sklearn.ensemble")
    tree_mod = pytest.importorskip("sklearn.tree")
    g = RngStream(7).generator
    for X in (g.normal(size=(250, 5)), g.poisson(0.4, size=(250, 30)).astype(float)):
        y = np.sin(X[:, 0]) + X[:, 1] ** 2 + 0.1 * g.normal(size=250)
        ours = fit_tree(X, y, 3, 1).predict(X)
        ref = tree_mod.DecisionTreeRegressor(max_depth=3).fit(X, y).predict(X)
        assert np.max(np.abs(ours - ref)) < 1e-12
        ours = GradientBoostedTrees(100, 3, 0.1).fit(X, y).predict(X)
        ref = sk.GradientBoostingRegressor(n_estimators=100, max_depth=3, learning_rate=0.1).fit(X, y)
        assert np.max(np.abs(ours - ref.predict(X))) < 1e-10


def test_tree_respects_min_leaf_and_constant_features():
    g = RngStream(8).generator
    X = np.column_stack([np.ones(40), g.normal(size=40)])
    y = g.normal(size=40)
    tree = fit_tree(X, y, 4, 5)
    assert np.all(tree.feature[tree.feature >= 0] == 1)
    leaves = tree.predict(X)
    _, counts = np.unique(leaves, return_counts=True)
    assert counts.min() >= 5


def test_mlp_learns_and_is_deterministic():
    g = RngStream(9).generator
    X = g.normal(size=(300, 2))
    y = X[:, 0] ** 2 - X[:, 1]
    a = MlpRegressor(hidden=(32, 32), lr=3e-3, epochs=60, rng=RngStream(1)).fit(X, y)
    b = MlpRegressor(hidden=(32, 32), lr=3e-3, epochs=60, rng=RngStream(1)).fit(X, y)
    assert np.array_equal(a.predict(X), b.predict(X))
    assert np.mean((a.predict(X) - y) ** 2) < 0.1 * y.var()
    assert a.loss_trace_[-1] < a.loss_trace_[0]


def test_spec_validation_and_description():
    with pytest.raises(ValueError):
        BaseLearnerSpec(kind="svm")
    with pytest.raises(ValueError):
        BaseLearnerSpec.linear(-1.0)
    with pytest.raises(ValueError):
        BaseLearnerSpec.boosted(trees=0)
    assert BaseLearnerSpec.mlp().describe()["hidden"] == [125, 125]
