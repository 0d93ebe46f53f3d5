"""Regularized linear classifiers over rule bits.

All trainers minimize

    J(w, b) = C * sum_i loss(y_i, w.x_i + b) + R(w)

with ``R(w) = ||w||_1`` or ``0.5 * ||w||_2^2`` and an unpenalized bias.
Duplicate rows are merged into per-row weights first; the binary feature
space makes this shrink a training set of tens of thousands of payloads to a
few thousand distinct rows.

Solvers:

* logistic / squared hinge -- accelerated proximal gradient (monotone FISTA
  with adaptive step size and restarts).  The l1 prox is soft-thresholding,
  so discarded rules get weights that are exactly zero.
* hinge + l1 -- the equivalent linear program (HiGHS through scipy).
* hinge + l2 -- SMO on the dual with the equality constraint induced by the
  free bias.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize, sparse
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..errors import DegenerateLabelsError, InconsistentSpaceError
from ..features import FeatureMatrix, FeatureVector

LOSSES = ("logistic", "hinge", "squared_hinge")
PENALTIES = ("l1", "l2")


@dataclass(frozen=True)
class TrainConfig:
    C: float = 0.5
    penalty: str = "l2"
    loss: str = "logistic"
    max_iters: int = 10000
    tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if self.penalty not in PENALTIES:
            raise ValueError(f"penalty must be one of {PENALTIES}, got {self.penalty!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.max_iters < 1 or not self.tol > 0:
            raise ValueError("max_iters must be >= 1 and tol > 0")


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    loss: str
    penalty: str
    C: float
    space_digest: str = ""
    feature_ids: tuple[int, ...] = ()
    converged: bool = True
    n_iter: int = 0
    objective: float = float("nan")
    seed: int = 0
    train_digest: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("weights and bias must be finite")

    @property
    def d(self) -> int:
        return self.weights.shape[0]


# --------------------------------------------------------------------------
# losses: value and derivative with respect to the margin z = y * f(x)

def loss_value(loss: str, z: np.ndarray) -> np.ndarray:
    if loss == "logistic":
        return np.logaddexp(0.0, -z)
    if loss == "hinge":
        return np.maximum(0.0, 1.0 - z)
    if loss == "squared_hinge":
        return np.maximum(0.0, 1.0 - z) ** 2
    raise ValueError(f"unknown loss {loss!r}")


def loss_derivative(loss: str, z: np.ndarray) -> np.ndarray:
    if loss == "logistic":
        return -expit(-z)
    if loss == "squared_hinge":
        return -2.0 * np.maximum(0.0, 1.0 - z)
    if loss == "hinge":
        return np.where(z < 1.0, -1.0, 0.0)
    raise ValueError(f"unknown loss {loss!r}")


def data_loss(w, b, X, y, loss, sample_weight=None):
    """Unregularized loss sum ``sum_i s_i * loss(y_i, w.x_i + b)``."""
    z = y * (X @ w + b)
    vals = loss_value(loss, z)
    return float(vals.sum() if sample_weight is None else sample_weight @ vals)


def data_loss_grad(w, b, X, y, loss, sample_weight=None):
    """Gradient of :func:`data_loss` with respect to ``(w, b)``."""
    z = y * (X @ w + b)
    g = y * loss_derivative(loss, z)
    if sample_weight is not None:
        g = g * sample_weight
    return X.T @ g, float(g.sum())


def penalty_value(penalty: str, w: np.ndarray) -> float:
    if penalty == "l1":
        return float(np.abs(w).sum())
    return 0.5 * float(w @ w)


def objective(w, b, X, y, loss, penalty, C, sample_weight=None) -> float:
    return C * data_loss(w, b, X, y, loss, sample_weight) + penalty_value(penalty, w)


# --------------------------------------------------------------------------
# input handling

def _signed_labels(y) -> np.ndarray:
    y = np.asarray(y)
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateLabelsError(f"need two classes, got {classes.tolist()}")
    if classes.size > 2:
        raise ValueError(f"binary labels expected, got {classes.tolist()}")
    if set(classes.tolist()) <= {0, 1}:
        return np.where(y == 1, 1.0, -1.0)
    if set(classes.tolist()) <= {-1, 1}:
        return y.astype(float)
    raise ValueError(f"labels must be {{0,1}} or {{-1,+1}}, got {classes.tolist()}")


def compress_rows(X: np.ndarray, y: np.ndarray, sample_weight=None):
    """Merge identical (x, y) rows, returning (X_unique, y_unique, weights)."""
    X = np.asarray(X, dtype=float)
    keyed = np.column_stack([X, y])
    uniq, inverse = np.unique(keyed, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sw = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, float)
    weights = np.bincount(inverse, weights=sw, minlength=uniq.shape[0])
    keep = weights > 0
    return uniq[keep, :-1], uniq[keep, -1], weights[keep]


def train_digest(X, y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(np.asarray(X, dtype=np.uint8)).tobytes())
    h.update(np.ascontiguousarray(np.asarray(y, dtype=np.int8)).tobytes())
    return h.hexdigest()[:16]


# --------------------------------------------------------------------------
# solvers

def _soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _fista(X, y, s, loss, penalty, C, max_iters, tol):
    m, d = X.shape
    A = np.hstack([X, np.ones((m, 1))])
    kappa = 0.25 if loss == "logistic" else 2.0
    lip = C * kappa * np.linalg.norm(np.sqrt(s)[:, None] * A, 2) ** 2
    lip = max(lip, 1e-12)

    def smooth(theta):
        z = y * (A @ theta)
        val = C * float(s @ loss_value(loss, z))
        grad = A.T @ (C * s * y * loss_derivative(loss, z))
        return val, grad

    def smooth_val(theta):
        return C * float(s @ loss_value(loss, y * (A @ theta)))

    def prox(v, t):
        out = v.copy()
        if penalty == "l1":
            out[:d] = _soft_threshold(v[:d], t)
        else:
            out[:d] = v[:d] / (1.0 + t)
        return out

    def reg(theta):
        return penalty_value(penalty, theta[:d])

    x = np.zeros(d + 1)
    f_x = smooth_val(x) + reg(x)
    point = x.copy()
    t = 1.0
    L = lip
    grad_scale = max(1.0, float(np.abs(smooth(x)[1]).max()))
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        g_val, g = smooth(point)
        Lk = max(L * 0.5, lip * 1e-9)
        while True:
            cand = prox(point - g / Lk, 1.0 / Lk)
            diff = cand - point
            c_val = smooth_val(cand)
            if c_val <= g_val + g @ diff + 0.5 * Lk * (diff @ diff) + 1e-12 * abs(g_val):
                break
            Lk *= 2.0
        L = Lk
        f_cand = c_val + reg(cand)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if f_cand <= f_x:
            decrease = f_x - f_cand
            x_prev, x = x, cand
            f_x = f_cand
            point = x + ((t - 1.0) / t_next) * (x - x_prev)
            t = t_next
            step_norm = Lk * float(np.abs(diff).max())
            if (decrease <= tol * max(1.0, abs(f_x))
                    and step_norm <= np.sqrt(tol) * grad_scale):
                converged = True
                break
        else:
            # objective went up: drop the momentum and restart from x
            point = x.copy()
            t = 1.0
    return x[:d].copy(), float(x[d]), converged, it, f_x


def _hinge_l1_lp(X, y, s, C):
    m, d = X.shape
    Y = y[:, None] * X
    # variables: w+ (d), w- (d), b (1, free), xi (m)
    c = np.concatenate([np.ones(2 * d), [0.0], C * s])
    A_ub = sparse.hstack([
        sparse.csr_matrix(-Y), sparse.csr_matrix(Y),
        sparse.csr_matrix(-y[:, None]), -sparse.identity(m, format="csr"),
    ]).tocsr()
    b_ub = -np.ones(m)
    bounds = [(0, None)] * (2 * d) + [(None, None)] + [(0, None)] * m
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status not in (0, 1):
        raise RuntimeError(f"linear program failed: {res.message}")
    z = res.x
    w = z[:d] - z[d:2 * d]
    w[np.abs(w) < 1e-12] = 0.0
    return w, float(z[2 * d]), res.status == 0, int(getattr(res, "nit", 0))


def _hinge_l2_smo(X, y, s, C, max_iters, tol):
    """SMO with maximal-violating-pair selection on the linear-kernel dual."""
    m, d = X.shape
    upper = C * s
    alpha = np.zeros(m)
    w = np.zeros(d)
    sq = np.einsum("ij,ij->i", X, X)
    eps = max(tol, 1e-10)
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # -y_t * grad_t = y_t - w.x_t
        score = y - X @ w
        up_mask = ((alpha < upper) & (y > 0)) | ((alpha > 0) & (y < 0))
        low_mask = ((alpha < upper) & (y < 0)) | ((alpha > 0) & (y > 0))
        if not up_mask.any() or not low_mask.any():
            converged = True
            break
        i = int(np.flatnonzero(up_mask)[np.argmax(score[up_mask])])
        j = int(np.flatnonzero(low_mask)[np.argmin(score[low_mask])])
        gap = score[i] - score[j]
        if gap <= eps:
            converged = True
            break
        eta = max(sq[i] + sq[j] - 2.0 * X[i] @ X[j], 1e-12)
        # move along y_i * e_i - y_j * e_j, keeping sum(alpha * y) fixed
        step = gap / eta
        step = min(step,
                   upper[i] - alpha[i] if y[i] > 0 else alpha[i],
                   alpha[j] if y[j] > 0 else upper[j] - alpha[j])
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        alpha[i] = min(max(alpha[i], 0.0), upper[i])
        alpha[j] = min(max(alpha[j], 0.0), upper[j])
        w += step * (X[i] - X[j])
    score = y - X @ w
    free = (alpha > 1e-12 * upper) & (alpha < upper * (1 - 1e-12))
    if free.any():
        b = float(score[free].mean())
    else:
        up_mask = ((alpha < upper) & (y > 0)) | ((alpha > 0) & (y < 0))
        low_mask = ((alpha < upper) & (y < 0)) | ((alpha > 0) & (y > 0))
        hi = score[up_mask].max() if up_mask.any() else score.max()
        lo = score[low_mask].min() if low_mask.any() else score.min()
        b = 0.5 * float(hi + lo)
    # the dual fixes w exactly; polish b on the primal (1-D convex problem)
    b = _best_bias(X @ w, y, s, C, b)
    return w, b, converged, it


def _best_bias(fx, y, s, C, b0):
    def f(b):
        return C * float(s @ np.maximum(0.0, 1.0 - y * (fx + b)))
    # the hinge sum is piecewise linear in b with kinks at y_i - fx_i
    kinks = np.unique(y - fx)
    cands = np.concatenate([[b0], kinks])
    vals = [f(b) for b in cands]
    return float(cands[int(np.argmin(vals))])


def train_linear(X, y, cfg: Optional[TrainConfig] = None, sample_weight=None,
                 space_digest: Optional[str] = None, feature_ids=()) -> LinearModel:
    """Fit a regularized linear model on binary features.

    ``y`` may use {0, 1} or {-1, +1}.  Running out of iterations does not
    raise; the returned model has ``converged=False`` and a
    :class:`~sklearn.exceptions.ConvergenceWarning` is emitted.
    """
    cfg = cfg or TrainConfig()
    if isinstance(X, FeatureMatrix):
        space_digest = space_digest or X.space_digest
        feature_ids = feature_ids or X.rule_ids
        X = X.bits
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ValueError("X must be 2-D with one row per label")
    ys = _signed_labels(y)
    Xu, yu, s = compress_rows(X, ys, sample_weight)
    if cfg.loss == "hinge" and cfg.penalty == "l1":
        w, b, converged, n_iter = _hinge_l1_lp(Xu, yu, s, cfg.C)
    elif cfg.loss == "hinge":
        w, b, converged, n_iter = _hinge_l2_smo(Xu, yu, s, cfg.C,
                                                max(cfg.max_iters, 100 * len(yu)), cfg.tol)
    else:
        w, b, converged, n_iter, _ = _fista(Xu, yu, s, cfg.loss, cfg.penalty, cfg.C,
                                           cfg.max_iters, cfg.tol)
    if not converged:
        warnings.warn(f"{cfg.loss}/{cfg.penalty} solver stopped after {n_iter} iterations "
                      "without meeting the tolerance", ConvergenceWarning, stacklevel=2)
    obj = objective(w, b, Xu, yu, cfg.loss, cfg.penalty, cfg.C, s)
    return LinearModel(
        weights=w, bias=b, loss=cfg.loss, penalty=cfg.penalty, C=cfg.C,
        space_digest=space_digest or "", feature_ids=tuple(feature_ids),
        converged=converged, n_iter=n_iter, objective=obj, seed=cfg.seed,
        train_digest=train_digest(X, np.where(ys > 0, 1, 0)),
    )


def linear_scores(model: LinearModel, X) -> np.ndarray:
    if isinstance(X, (FeatureMatrix, FeatureVector)):
        if model.space_digest and X.space_digest and X.space_digest != model.space_digest:
            raise InconsistentSpaceError(
                f"model bound to space {model.space_digest}, features to {X.space_digest}")
        X = X.bits
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.d:
        raise InconsistentSpaceError(f"model expects {model.d} features, got {X.shape[1]}")
    return X @ model.weights + model.bias


def zero_weight_count(model: LinearModel, eps: float = 1e-9) -> int:
    return int(np.count_nonzero(np.abs(model.weights) <= eps))


class LinearRuleClassifier(ClassifierMixin, BaseEstimator):
    """Estimator interface to :func:`train_linear`.

    ``loss="squared_hinge"`` corresponds to a linear SVM,
    ``loss="logistic"`` to logistic regression.
    """

    def __init__(self, loss="logistic", penalty="l2", C=0.5, max_iter=10000, tol=1e-8,
                 random_state=0):
        self.loss = loss
        self.penalty = penalty
        self.C = C
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise DegenerateLabelsError(f"need two classes, got {self.classes_.tolist()}")
        y01 = (y == self.classes_[1]).astype(int)
        cfg = TrainConfig(C=self.C, penalty=self.penalty, loss=self.loss,
                          max_iters=self.max_iter, tol=self.tol,
                          seed=self.random_state if self.random_state is not None else 0)
        self.model_ = train_linear(X, y01, cfg, sample_weight=sample_weight)
        self.coef_ = self.model_.weights.reshape(1, -1)
        self.intercept_ = np.array([self.model_.bias])
        self.n_iter_ = self.model_.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        return linear_scores(self.model_, check_array(X))

    def predict(self, X):
        return self.classes_[(self.decision_function(X) > 0).astype(int)]

    def predict_proba(self, X):
        if self.loss != "logistic":
            raise AttributeError("predict_proba is only available for the logistic loss")
        p = expit(self.decision_function(X))
        return np.column_stack([1 - p, p])
