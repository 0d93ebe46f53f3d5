"""Random forest over binary rule features.

Trees are grown to purity with Gini splits on bootstrap samples and
``max(1, int(sqrt(d)))`` candidate features per node.  With binary inputs a
split is just a feature index: rows with the bit clear go left, set go right.

Tree ``i`` draws from its own generator, spawned from ``SeedSequence(seed)``,
so a forest is reproducible whatever the number of worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import DegenerateLabelsError, InconsistentSpaceError
from ..features import FeatureMatrix, FeatureVector
from .linear import train_digest

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray      # split feature per node, LEAF for leaves
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray        # (n_nodes, 2) class probabilities

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def proba(self, X: np.ndarray) -> np.ndarray:
        """Probability of class 1 for each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] != LEAF
        while active.any():
            idx = rows[active]
            f = self.feature[node[idx]]
            go_right = X[idx, f] > 0.5
            node[idx] = np.where(go_right, self.right[node[idx]], self.left[node[idx]])
            active = self.feature[node] != LEAF
        return self.value[node, 1]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.asarray(d["feature"], dtype=np.int64),
                   np.asarray(d["left"], dtype=np.int64),
                   np.asarray(d["right"], dtype=np.int64),
                   np.asarray(d["value"], dtype=float).reshape(-1, 2))


@dataclass
class ForestModel:
    trees: list[Tree]
    seed: int = 0
    space_digest: str = ""
    feature_ids: tuple[int, ...] = ()
    n_features: int = 0
    train_digest: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.n_features


def _gini_cost(n0, n1):
    # n * gini = n - (n0^2 + n1^2) / n, zero when n == 0
    n = n0 + n1
    with np.errstate(invalid="ignore", divide="ignore"):
        cost = np.where(n > 0, n - (n0 * n0 + n1 * n1) / np.where(n > 0, n, 1), 0.0)
    return cost


def grow_tree(X: np.ndarray, w0: np.ndarray, w1: np.ndarray, max_features: int,
              rng: np.random.Generator) -> Tree:
    """Grow one tree on unique rows ``X`` with per-class weights ``w0``, ``w1``."""
    d = X.shape[1]
    feature, left, right, value = [], [], [], []

    def new_node():
        feature.append(LEAF)
        left.append(LEAF)
        right.append(LEAF)
        value.append((0.0, 0.0))
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.flatnonzero((w0 + w1) > 0))]
    while stack:
        node, rows = stack.pop()
        a, b = w0[rows], w1[rows]
        t0, t1 = float(a.sum()), float(b.sum())
        value[node] = (t0 / (t0 + t1), t1 / (t0 + t1))
        if t0 == 0 or t1 == 0:
            continue
        Xr = X[rows]
        order = rng.permutation(d)
        best_f = LEAF
        # look at max_features candidates; keep going if none of them splits
        for start in range(0, d, max_features):
            cand = order[start:start + max_features]
            on = Xr[:, cand]
            r0, r1 = a @ on, b @ on
            l0, l1 = t0 - r0, t1 - r1
            valid = (l0 + l1 > 0) & (r0 + r1 > 0)
            if valid.any():
                cost = np.where(valid, _gini_cost(l0, l1) + _gini_cost(r0, r1), np.inf)
                k = int(np.argmin(cost))
                best_f = int(cand[k])
                break
        if best_f == LEAF:
            continue
        feature[node] = best_f
        bit = Xr[:, best_f] > 0.5
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        # push right first so the left subtree gets the lower node ids
        stack.append((rnode, rows[bit]))
        stack.append((lnode, rows[~bit]))
    return Tree(np.asarray(feature, dtype=np.int64), np.asarray(left, dtype=np.int64),
                np.asarray(right, dtype=np.int64), np.asarray(value, dtype=float))


def _build_tree(Xu, inverse, pos, max_features, child: np.random.SeedSequence) -> Tree:
    rng = np.random.default_rng(child)
    n, m = len(pos), Xu.shape[0]
    counts = np.bincount(rng.integers(0, n, n), minlength=n).astype(float)
    w0 = np.bincount(inverse, weights=counts * ~pos, minlength=m)
    w1 = np.bincount(inverse, weights=counts * pos, minlength=m)
    return grow_tree(Xu, w0, w1, max_features, rng)


def train_forest(X, y, n_trees: int = 100, seed: int = 0, n_jobs: Optional[int] = 1,
                 max_features: Optional[int] = None, space_digest: Optional[str] = None,
                 feature_ids=()) -> ForestModel:
    if isinstance(X, FeatureMatrix):
        space_digest = space_digest or X.space_digest
        feature_ids = feature_ids or X.rule_ids
        X = X.bits
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    classes = np.unique(y)
    if classes.size != 2:
        raise DegenerateLabelsError(f"need two classes, got {classes.tolist()}")
    pos = y == classes[1]
    n, d = X.shape
    max_features = max_features or max(1, int(np.sqrt(d)))
    Xu, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)

    children = np.random.SeedSequence(seed).spawn(n_trees)
    build = partial(_build_tree, Xu, inverse, pos, max_features)
    if n_jobs is not None and n_jobs > 1 and n_trees > 1:
        with ProcessPoolExecutor(min(n_jobs, n_trees)) as pool:
            trees = list(pool.map(build, children))
    else:
        trees = [build(c) for c in children]
    return ForestModel(trees=trees, seed=seed, space_digest=space_digest or "",
                       feature_ids=tuple(feature_ids), n_features=d,
                       train_digest=train_digest(X, pos.astype(int)))


def forest_scores(model: ForestModel, X) -> np.ndarray:
    """Mean class-1 probability over the trees."""
    if isinstance(X, (FeatureMatrix, FeatureVector)):
        if model.space_digest and X.space_digest and X.space_digest != model.space_digest:
            raise InconsistentSpaceError(
                f"model bound to space {model.space_digest}, features to {X.space_digest}")
        X = X.bits
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise InconsistentSpaceError(
            f"model expects {model.n_features} features, got {X.shape[1]}")
    return np.mean([t.proba(X) for t in model.trees], axis=0)


class RuleForestClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, n_estimators=100, random_state=0, max_features=None, n_jobs=1):
        self.n_estimators = n_estimators
        self.random_state = random_state
        self.max_features = max_features
        self.n_jobs = n_jobs

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        self.model_ = train_forest(X, y, self.n_estimators,
                                   0 if self.random_state is None else self.random_state,
                                   self.n_jobs, self.max_features)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        p = forest_scores(self.model_, check_array(X))
        return np.column_stack([1 - p, p])

    def decision_function(self, X):
        return self.predict_proba(X)[:, 1]

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0.5).astype(int)]
