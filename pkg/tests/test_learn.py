import warnings

import cvxpy as cp
import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning

from crs_learn.errors import DegenerateLabelsError, InconsistentSpaceError
from crs_learn.eval import C_GRID
from crs_learn.features import FeatureMatrix, FeatureVector
from crs_learn.learn import (
    LinearModel,
    LinearRuleClassifier,
    TrainConfig,
    decision_score,
    decision_scores,
    dumps_model,
    loads_model,
    objective,
    train_linear,
    zero_weight_count,
)
from crs_learn.learn.linear import data_loss, data_loss_grad

COMBOS = [(loss, pen) for loss in ("logistic", "squared_hinge", "hinge") for pen in ("l2", "l1")]


def cvx_objective(X, y, loss, penalty, C):
    """Reference minimum of C * sum(loss) + R(w) from a generic conic solver."""
    ys = np.where(y == 1, 1.0, -1.0)
    w = cp.Variable(X.shape[1])
    b = cp.Variable()
    z = cp.multiply(ys, X @ w + b)
    if loss == "logistic":
        data = cp.sum(cp.logistic(-z))
    elif loss == "hinge":
        data = cp.sum(cp.pos(1 - z))
    else:
        data = cp.sum_squares(cp.pos(1 - z))
    reg = cp.norm1(w) if penalty == "l1" else 0.5 * cp.sum_squares(w)
    prob = cp.Problem(cp.Minimize(C * data + reg))
    prob.solve(solver=cp.CLARABEL)
    return prob.value, np.asarray(w.value), float(b.value)


def random_instance(seed, n=8, d=3):
    r = np.random.default_rng(seed)
    while True:
        X = r.integers(0, 2, (n, d)).astype(float)
        y = r.integers(0, 2, n)
        if 0 < y.sum() < n:
            return X, y


@pytest.mark.parametrize("seed", range(20))
def test_objective_matches_convex_oracle(seed):
    loss, penalty = COMBOS[seed % len(COMBOS)]
    X, y = random_instance(seed, n=8 + seed % 5, d=3 + seed % 3)
    C = C_GRID[seed % len(C_GRID)] * 10 if seed % 2 else 0.5
    ref, w_ref, b_ref = cvx_objective(X, y, loss, penalty, C)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        m = train_linear(X, y, TrainConfig(C=C, penalty=penalty, loss=loss))
    ys = np.where(y == 1, 1.0, -1.0)
    ours = objective(m.weights, m.bias, X, ys, loss, penalty, C)
    assert abs(ours - ref) <= 1e-4 * max(1.0, abs(ref))
    # convexity certificate: no worse than the origin or the oracle's point
    assert ours <= objective(np.zeros(X.shape[1]), 0.0, X, ys, loss, penalty, C) + 1e-12
    assert ours <= objective(w_ref, b_ref, X, ys, loss, penalty, C) + 1e-4 * max(1.0, abs(ref))


@pytest.mark.parametrize("loss", ["logistic", "squared_hinge"])
@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(loss, seed):
    r = np.random.default_rng(100 + seed)
    X = r.integers(0, 2, (12, 4)).astype(float)
    y = np.where(r.integers(0, 2, 12) == 1, 1.0, -1.0)
    w = r.normal(size=4)
    b = float(r.normal())
    s = r.uniform(0.5, 2.0, 12)
    gw, gb = data_loss_grad(w, b, X, y, loss, s)
    h = 1e-6
    num = np.empty(5)
    for j in range(5):
        e = np.zeros(5)
        e[j] = h
        up = data_loss(w + e[:4], b + e[4], X, y, loss, s)
        dn = data_loss(w - e[:4], b - e[4], X, y, loss, s)
        num[j] = (up - dn) / (2 * h)
    ana = np.r_[gw, gb]
    assert np.linalg.norm(ana - num) <= 1e-5 * max(1.0, np.linalg.norm(num))


def test_separable_toy_set():
    X = np.r_[np.ones((10, 1)), np.zeros((10, 1))]
    y = np.r_[np.ones(10), -np.ones(10)]
    m = train_linear(X, y, TrainConfig(C=0.5))
    assert m.weights[0] > 0
    s = decision_scores(m, X)
    assert (s[:10] > 0).all() and (s[10:] < 0).all()


@pytest.mark.parametrize("loss,penalty", COMBOS)
def test_four_point_set_is_fit_exactly(loss, penalty):
    X = np.array([[1, 0], [1, 1], [0, 0], [0, 1]], dtype=float)
    y = np.array([1, 1, 0, 0])
    m = train_linear(X, y, TrainConfig(C=10.0, penalty=penalty, loss=loss))
    assert np.array_equal((decision_scores(m, X) > 0).astype(int), y)


@pytest.mark.parametrize("seed", range(4))
def test_l1_sparsity_grows_as_c_shrinks(seed):
    r = np.random.default_rng(seed)
    X = r.integers(0, 2, (300, 15)).astype(float)
    w_true = np.where(r.random(15) < 0.4, r.normal(0, 2, 15), 0.0)
    y = (X @ w_true - w_true.sum() / 2 + r.normal(0, 1, 300) > 0).astype(int)
    zeros = [zero_weight_count(train_linear(X, y, TrainConfig(C=C, penalty="l1")))
             for C in sorted(C_GRID)]
    assert zeros == sorted(zeros, reverse=True)
    assert zeros[0] == 15


def test_l2_has_no_zero_weights(rng):
    X = rng.integers(0, 2, (200, 6)).astype(float)
    y = (X[:, 0] + rng.normal(0, 0.5, 200) > 0.5).astype(int)
    assert zero_weight_count(train_linear(X, y, TrainConfig(penalty="l2"))) == 0


def test_zero_weight_count_threshold():
    m = LinearModel(np.array([0.0, 1e-10, -1e-9, 1e-3]), 0.0, "logistic", "l1", 1.0)
    assert zero_weight_count(m) == 3
    assert zero_weight_count(LinearModel(np.zeros(5), 0.0, "logistic", "l1", 1.0)) == 5


def test_determinism_and_row_duplication(rng):
    X = rng.integers(0, 2, (100, 5)).astype(float)
    y = rng.integers(0, 2, 100)
    a = train_linear(X, y, TrainConfig(penalty="l1", seed=3))
    b = train_linear(X, y, TrainConfig(penalty="l1", seed=3))
    assert dumps_model(a) == dumps_model(b)
    # sample weight 2 is the same problem as a duplicated row
    dup = train_linear(np.r_[X, X[:1]], np.r_[y, y[:1]], TrainConfig(penalty="l1"))
    sw = np.ones(100)
    sw[0] = 2
    weighted = train_linear(X, y, TrainConfig(penalty="l1"), sample_weight=sw)
    assert np.array_equal(dup.weights, weighted.weights)


def test_label_and_config_errors():
    X = np.zeros((4, 2))
    with pytest.raises(DegenerateLabelsError):
        train_linear(X, np.ones(4))
    with pytest.raises(ValueError):
        train_linear(X, np.array([0, 1, 2, 1]))
    with pytest.raises(ValueError):
        TrainConfig(C=0)
    with pytest.raises(ValueError):
        TrainConfig(penalty="l0")
    with pytest.raises(ValueError):
        TrainConfig(loss="squared")


def test_non_convergence_is_flagged(rng):
    X = rng.integers(0, 2, (80, 6)).astype(float)
    y = rng.integers(0, 2, 80)
    with pytest.warns(ConvergenceWarning):
        m = train_linear(X, y, TrainConfig(max_iters=2, tol=1e-14))
    assert not m.converged


def test_decision_score_contract():
    m = LinearModel(np.array([5.0, 3.0]), -1.5, "logistic", "l2", 1.0, space_digest="aa")
    assert decision_score(m, np.zeros(2)) == -1.5
    assert decision_score(m, FeatureVector(np.array([1, 1]), "aa")) == 6.5
    with pytest.raises(InconsistentSpaceError):
        decision_score(m, FeatureVector(np.array([1, 1]), "bb"))
    with pytest.raises(InconsistentSpaceError):
        decision_score(m, np.zeros(3))
    with pytest.raises(ValueError):
        LinearModel(np.array([np.nan]), 0.0, "logistic", "l2", 1.0)


def test_artifact_round_trip_is_exact(rng):
    X = rng.integers(0, 2, (60, 4)).astype(float)
    y = rng.integers(0, 2, 60)
    m = train_linear(FeatureMatrix(X.astype(np.uint8), "dd", (1, 2, 3, 4)), y)
    back = loads_model(dumps_model(m))
    assert back.space_digest == "dd" and back.feature_ids == (1, 2, 3, 4)
    assert np.array_equal(back.weights, m.weights) and back.bias == m.bias
    assert np.array_equal(decision_scores(back, X), decision_scores(m, X))
    with pytest.raises(ValueError):
        loads_model('{"format_version": 99, "kind": "linear"}')


def test_estimator_api(rng):
    X = rng.integers(0, 2, (100, 4))
    y = np.where(X[:, 0] == 1, "sqli", "benign")
    clf = LinearRuleClassifier(penalty="l1", C=1.0)
    assert clf.get_params()["penalty"] == "l1"
    clf.fit(X, y)
    assert list(clf.classes_) == ["benign", "sqli"]
    assert (clf.predict(X) == y).all()
    assert clf.coef_.shape == (1, 4)
    assert np.allclose(clf.predict_proba(X).sum(axis=1), 1)
    other = clone(clf).set_params(loss="squared_hinge").fit(X, y)
    with pytest.raises(AttributeError):
        other.predict_proba(X)
