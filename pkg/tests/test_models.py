import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainage.models import (
    FAMILY_NAMES,
    ConvergenceWarning,
    ElasticNet,
    GBDTRegressor,
    KernelRidge,
    KNNRegressor,
    Lasso,
    MLPRegressor,
    RandomForestRegressor,
    SchemaError,
    SVR,
    TrainedModel,
    cross_validate,
    fit_model,
    get_family,
    gradient_check,
    random_search,
    rbf_kernel,
    soft_threshold,
    stratified_kfold,
)
from brainage.models.mlp import loss_and_grads

FAST = {
    "GBDT": {"n_estimators": 40},
    "OrderedGBDT": {"n_estimators": 40},
    "RandomForest": {"n_estimators": 30},
    "MLP": {"max_iter": 60},
}


def linear_oracle(n=90, p=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = 3.0 * X[:, 0] + rng.normal(0, 0.1, n) + 10.0
    return X, y


# ---------------------------------------------------------------------------
# folds

def test_kfold_six_subjects_three_classes():
    ages = [5.1, 5.9, 6.2, 6.8, 7.0, 7.7]
    folds = stratified_kfold(ages, 3, seed=4)
    # two members per class over three folds: they land in different folds
    for lo in (5, 6, 7):
        members = [f for a, f in zip(ages, folds) if int(a) == lo]
        assert len(set(members)) == 2
    assert sorted(np.bincount(folds, minlength=3)) == [2, 2, 2]


def test_kfold_deterministic_and_seed_sensitive():
    ages = np.random.default_rng(1).uniform(5, 18, 50)
    assert np.array_equal(stratified_kfold(ages, 3, 7), stratified_kfold(ages, 3, 7))
    assert not all(np.array_equal(stratified_kfold(ages, 3, 7), stratified_kfold(ages, 3, s)) for s in range(8, 12))


def test_kfold_class_balance_on_1000_ages():
    ages = np.random.default_rng(2).uniform(5, 18, 1000)
    for k in (2, 3, 5):
        folds = stratified_kfold(ages, k, 0)
        for year in np.unique(np.floor(ages)):
            counts = np.bincount(folds[np.floor(ages) == year], minlength=k)
            assert counts.max() - counts.min() <= 1
        sizes = np.bincount(folds, minlength=k)
        assert sizes.max() - sizes.min() <= 1


def test_kfold_errors():
    with pytest.raises(ValueError):
        stratified_kfold([5.0, 6.0], 3)
    with pytest.raises(ValueError):
        stratified_kfold([5.0, 6.0, 7.0], 1)


# ---------------------------------------------------------------------------
# linear

@pytest.mark.parametrize("lam", [0.0, 0.05, 0.4, 5.0])
def test_lasso_single_column_soft_threshold(lam):
    rng = np.random.default_rng(3)
    x = rng.normal(size=40)
    x = (x - x.mean()) / x.std()  # x'x/n = 1 after centring
    y = 0.7 * x + rng.normal(size=40)
    m = Lasso(alpha=lam).fit(x[:, None], y)
    expected = soft_threshold(x @ (y - y.mean()) / len(x), lam)
    assert abs(m.coef_[0] - expected) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 2.0), st.floats(0.0, 1.0))
def test_coordinate_descent_objective_monotone(seed, alpha, ratio):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 8)) @ rng.normal(size=(8, 8))
    y = rng.normal(size=30)
    m = ElasticNet(alpha=alpha, l1_ratio=ratio).fit(X, y)
    assert np.all(np.diff(m.objective_history_) <= 1e-12 * max(1.0, m.objective_history_[0]))


def test_elasticnet_nonconvergence_flags_but_predicts():
    X, y = linear_oracle(p=20)
    with pytest.warns(ConvergenceWarning):
        m = ElasticNet(alpha=1e-4, max_iter=1).fit(X, y)
    assert m.converged is False
    assert np.all(np.isfinite(m.predict(X)))


def test_elasticnet_matches_sklearn_objective():
    from sklearn.linear_model import ElasticNet as Ref

    X, y = linear_oracle(p=10, seed=5)
    ours = ElasticNet(alpha=0.1, l1_ratio=0.3, tol=1e-10).fit(X, y)
    ref = Ref(alpha=0.1, l1_ratio=0.3, tol=1e-12, max_iter=100000).fit(X, y)
    assert np.allclose(ours.coef_, ref.coef_, atol=1e-6)


# ---------------------------------------------------------------------------
# kernels

def test_kernel_ridge_interpolates_and_residual():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(40, 6))
    y = rng.uniform(5, 15, 40)
    m = KernelRidge(alpha=1e-10, gamma=0.2).fit(X, y)
    assert np.max(np.abs(m.predict(X) - y)) <= 1e-4
    assert m.residual_ <= 1e-8


def test_kernel_ridge_residual_regularised():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 30))
    y = rng.normal(size=60)
    m = KernelRidge(alpha=0.5).fit(X, y)
    K = rbf_kernel(X, X, m.gamma_)
    assert np.max(np.abs((K + 0.5 * np.eye(60)) @ m.dual_coef_ - (y - y.mean()))) <= 1e-8


def test_rbf_kernel_brute_force():
    rng = np.random.default_rng(8)
    A, B = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    K = rbf_kernel(A, B, 0.7)
    for i in range(4):
        for j in range(5):
            assert K[i, j] == pytest.approx(np.exp(-0.7 * np.sum((A[i] - B[j]) ** 2)), abs=1e-12)


@pytest.mark.parametrize("C,eps", [(1.0, 0.1), (10.0, 0.3), (100.0, 0.05)])
def test_svr_kkt_on_support_vectors(C, eps):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(50, 4))
    y = np.sin(X[:, 0]) + 0.1 * rng.normal(size=50)
    tol = 1e-3
    m = SVR(C=C, epsilon=eps, gamma=0.5, tol=tol).fit(X, y)
    assert m.converged and m.kkt_gap_ < tol
    # rebuild the full coefficient vector to classify every training row
    K = rbf_kernel(X, X, m.gamma_)
    f = m.predict(X)
    r = y - f
    coef = np.zeros(50)
    sv_rows = [int(np.flatnonzero((X == s).all(axis=1))[0]) for s in m.support_vectors_]
    coef[sv_rows] = m.dual_coef_
    assert np.allclose(K @ coef + m.intercept_, f)
    assert abs(coef.sum()) <= 1e-8  # equality constraint
    for i in range(50):
        a = abs(coef[i])
        if a == 0:
            assert abs(r[i]) <= eps + tol
        elif a < C - 1e-12:
            assert abs(abs(r[i]) - eps) <= tol
            assert np.sign(coef[i]) == np.sign(r[i])
        else:
            assert abs(r[i]) >= eps - tol


def test_svr_matches_sklearn():
    from sklearn.svm import SVR as Ref

    rng = np.random.default_rng(10)
    X = rng.normal(size=(60, 5))
    y = X[:, 0] - X[:, 1] ** 2 + 0.1 * rng.normal(size=60)
    ours = SVR(C=5.0, epsilon=0.1, gamma=0.3, tol=1e-6).fit(X, y)
    ref = Ref(C=5.0, epsilon=0.1, gamma=0.3, tol=1e-8).fit(X, y)
    assert np.max(np.abs(ours.predict(X) - ref.predict(X))) < 1e-3


# ---------------------------------------------------------------------------
# neighbours and trees

def test_knn_k1_reproduces_training_labels():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 5))
    y = rng.uniform(5, 18, 30)
    m = KNNRegressor(n_neighbors=1).fit(X, y)
    assert np.array_equal(m.predict(X), y)


def test_random_forest_single_unbagged_tree_memorises():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(40, 6))
    y = rng.uniform(5, 18, 40)
    m = RandomForestRegressor(n_estimators=1, bootstrap=False, max_depth=None).fit(X, y)
    assert np.mean(np.abs(m.predict(X) - y)) == 0.0


def test_random_forest_matches_cart_reference_on_full_features():
    from sklearn.tree import DecisionTreeRegressor

    rng = np.random.default_rng(13)
    X = rng.normal(size=(60, 3))
    y = X[:, 0] + np.sin(3 * X[:, 1])
    ours = RandomForestRegressor(n_estimators=1, bootstrap=False, max_features=None, max_depth=3).fit(X, y)
    ref = DecisionTreeRegressor(max_depth=3).fit(X, y)
    assert np.allclose(ours.predict(X), ref.predict(X))


def test_gbdt_single_round_beats_constant():
    rng = np.random.default_rng(14)
    n = 32
    X = rng.normal(size=(n, 5))
    y = rng.uniform(5, 18, n)
    depth = int(np.ceil(np.log2(n)))
    m = GBDTRegressor(n_estimators=1, learning_rate=1.0, max_depth=depth, reg_lambda=1.0).fit(X, y)
    assert np.mean(np.abs(m.predict(X) - y)) < np.mean(np.abs(y - y.mean()))


def test_gbdt_l1_shrinks_leaves():
    rng = np.random.default_rng(15)
    X = rng.normal(size=(40, 3))
    y = X[:, 0] + 0.1 * rng.normal(size=40)
    plain = GBDTRegressor(n_estimators=1, learning_rate=1.0, max_depth=1).fit(X, y)
    shrunk = GBDTRegressor(n_estimators=1, learning_rate=1.0, max_depth=1, reg_alpha=5.0).fit(X, y)
    assert np.abs(shrunk.predict(X) - y.mean()).max() < np.abs(plain.predict(X) - y.mean()).max()


@pytest.mark.parametrize("family", ["GBDT", "OrderedGBDT", "RandomForest"])
@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 1000), col=st.integers(0, 3), kind=st.sampled_from(["exp", "cube", "shift"]))
def test_tree_split_point_invariance(family, seed, col, kind):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 4))
    y = 8 + X[:, 0] + np.abs(X[:, 1]) + 0.3 * rng.normal(size=50)
    Xtest = rng.normal(size=(25, 4))
    f = {"exp": np.exp, "cube": lambda v: v ** 3 + v, "shift": lambda v: 3 * v - 7}[kind]
    X2, Xt2 = X.copy(), Xtest.copy()
    X2[:, col], Xt2[:, col] = f(X[:, col]), f(Xtest[:, col])
    hyper = {"n_estimators": 15}
    a = fit_model(family, hyper, X, y, seed=1).predict(Xtest)
    b = fit_model(family, hyper, X2, y, seed=1).predict(Xt2)
    assert np.allclose(a, b, atol=1e-12)


# ---------------------------------------------------------------------------
# MLP

def test_mlp_gradient_check_before_training():
    rng = np.random.default_rng(16)
    m = MLPRegressor(hidden_layer_sizes=(128, 64))
    X = rng.normal(size=(5, 30))
    y = rng.normal(size=5)
    params = m._init(30, rng)
    assert gradient_check(params, X, y, alpha=1e-3, n_coords=60) <= 1e-4


def test_mlp_loss_gradient_full_small_net():
    rng = np.random.default_rng(17)
    m = MLPRegressor(hidden_layer_sizes=(4, 3))
    params = m._init(3, rng)
    X, y = rng.normal(size=(5, 3)), rng.normal(size=5)
    _, grads = loss_and_grads(params, X, y, 0.01)
    assert gradient_check(params, X, y, 0.01, n_coords=100) <= 1e-6
    assert [g.shape for g in grads] == [p.shape for p in params]


def test_mlp_learns_simple_function():
    X, y = linear_oracle(n=200, p=3)
    m = MLPRegressor(hidden_layer_sizes=(32, 16), max_iter=300, learning_rate_init=1e-2).fit(X, y)
    assert np.mean(np.abs(m.predict(X) - y)) < 0.5


# ---------------------------------------------------------------------------
# family-level contract

@pytest.mark.parametrize("family", FAMILY_NAMES)
def test_round_trip_identical_predictions(family, tmp_path):
    rng = np.random.default_rng(18)
    X = rng.normal(size=(40, 6))
    y = 10 + 2 * X[:, 0] + rng.normal(size=40)
    cols = [f"EC_C{i}_alpha_mean" for i in range(6)]
    m = fit_model(family, FAST.get(family, {}), X, y, columns=cols, seed=3)
    m.save(tmp_path / "m.json")
    back = TrainedModel.load(tmp_path / "m.json")
    Xt = rng.normal(size=(15, 6))
    assert np.max(np.abs(back.predict(Xt, cols) - m.predict(Xt, cols))) <= 1e-9
    d = json.loads((tmp_path / "m.json").read_text())
    assert set(d) >= {"family", "hyper", "params", "columns", "preprocessing", "seed", "converged"}


@pytest.mark.parametrize("family", FAMILY_NAMES)
def test_preprocessing_flags(family):
    X, y = linear_oracle(n=30)
    m = fit_model(family, FAST.get(family, {}), X, y)
    tree = family in ("GBDT", "OrderedGBDT", "RandomForest")
    assert m.standardized is (not tree)
    assert m.target_encoded is tree
    assert get_family(family).tree is tree


@pytest.mark.parametrize("family", FAMILY_NAMES)
def test_constant_target(family):
    rng = np.random.default_rng(19)
    X = rng.normal(size=(30, 5))
    y = np.full(30, 9.25)
    m = fit_model(family, FAST.get(family, {}), X, y)
    assert np.max(np.abs(m.predict(rng.normal(size=(10, 5))) - 9.25)) <= 1e-6


def test_schema_mismatch():
    X, y = linear_oracle(n=30)
    cols = [f"EC_C{i}_alpha_mean" for i in range(5)]
    m = fit_model("Lasso", {"alpha": 0.01}, X, y, columns=cols)
    with pytest.raises(SchemaError):
        m.predict(X[:, :4])
    with pytest.raises(SchemaError):
        m.predict(X, cols[::-1])


def test_nan_rejected():
    X, y = linear_oracle(n=30)
    X[3, 2] = np.nan
    with pytest.raises(ValueError):
        fit_model("KNN", {}, X, y)


def test_year_label_encoding_decodes_to_years():
    rng = np.random.default_rng(20)
    X = rng.normal(size=(60, 3))
    y = 5 + 10 * rng.uniform(size=60)
    m = fit_model("RandomForest", {"n_estimators": 1, "bootstrap": False}, X, y)
    enc = m.estimator
    codes = np.searchsorted(enc.classes_, np.floor(y))
    assert np.allclose(m.predict(X), enc.intercept_ + enc.slope_ * codes)
    assert enc.classes_.min() == 5 and enc.classes_.max() == 14


# ---------------------------------------------------------------------------
# cross-validation and search

def test_cv_linear_oracle():
    X, y = linear_oracle()
    cv = cross_validate("ElasticNet", {"alpha": 1e-3, "l1_ratio": 0.5}, X, y, k=3, seed=0)
    assert cv.mean <= 0.15
    assert cv.mean == pytest.approx(np.mean(cv.fold_mae))
    assert sorted(set(cv.folds)) == [0, 1, 2] and len(cv.folds) == len(y)


def _mean_predictor_mae(y, folds):
    return np.mean([np.mean(np.abs(y[folds == f] - y[folds != f].mean())) for f in range(folds.max() + 1)])


@pytest.mark.parametrize("family", FAMILY_NAMES)
def test_no_signal_floor(family):
    rng = np.random.default_rng(21)
    X = rng.normal(size=(60, 10))
    y = rng.permutation(rng.uniform(5, 18, 60))
    cv = cross_validate(family, FAST.get(family, {}), X, y, k=3, seed=2)
    base = _mean_predictor_mae(y, np.array(cv.folds))
    assert cv.mean >= 0.9 * base


def test_cv_deterministic():
    X, y = linear_oracle(n=45)
    a = cross_validate("GBDT", {"n_estimators": 20, "subsample": 0.8}, X, y, seed=5)
    b = cross_validate("GBDT", {"n_estimators": 20, "subsample": 0.8}, X, y, seed=5)
    assert a.to_dict() == b.to_dict()


def test_random_search_budget_one_and_argmin():
    X, y = linear_oracle(n=45)
    one = random_search("Lasso", X, y, budget=1, seed=3)
    assert len(one.trials) == 1 and one.best_hyper == one.trials[0].hyper
    res = random_search("ElasticNet", X, y, budget=6, seed=3)
    assert all(res.best_cv.mean <= t.mean for t in res.trials)


def test_searched_lasso_beats_default():
    wins = 0
    for seed in range(10):
        X, y = linear_oracle(seed=seed)
        searched = random_search("Lasso", X, y, budget=8, seed=seed).best_cv.mean
        default = cross_validate("Lasso", {}, X, y, seed=seed).mean
        wins += searched < default
    assert wins >= 8


def test_unknown_family_and_hyper():
    with pytest.raises(ValueError):
        get_family("Perceptron")
    with pytest.raises(ValueError):
        fit_model("Lasso", {"depth": 3}, *linear_oracle(n=20))
