"""Vanilla anomaly scoring: add up the severities of the rules that fired."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import InconsistentSpaceError
from .features import FeatureSpace, as_bits

DEFAULT_THRESHOLD = 5
VALID_SEVERITIES = frozenset({2, 3, 4, 5})


@dataclass(frozen=True)
class AnomalyScorer:
    severities: tuple[int, ...]
    threshold: float = DEFAULT_THRESHOLD
    space_digest: str = ""

    def __post_init__(self):
        bad = [s for s in self.severities if s not in VALID_SEVERITIES]
        if bad:
            raise ValueError(f"severities must be in {{2,3,4,5}}, got {bad}")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")

    @classmethod
    def from_space(cls, space: FeatureSpace, threshold: float = DEFAULT_THRESHOLD):
        if len(space.severities) != space.d:
            raise InconsistentSpaceError("feature space carries no severities")
        return cls(tuple(space.severities), threshold, space.digest)

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.severities, dtype=np.int64)


def _bits(scorer: AnomalyScorer, x) -> np.ndarray:
    bits = as_bits(x, digest=scorer.space_digest or None)
    if bits.shape[1] != len(scorer.severities):
        raise InconsistentSpaceError(
            f"expected {len(scorer.severities)} features, got {bits.shape[1]}")
    return bits


def anomaly_scores(scorer: AnomalyScorer, X) -> np.ndarray:
    return _bits(scorer, X).astype(np.int64) @ scorer.weights


def anomaly_score(scorer: AnomalyScorer, x) -> int:
    """Severity sum over the fired rules of one feature vector."""
    return int(anomaly_scores(scorer, x)[0])


def classify(scorer: AnomalyScorer, x) -> int:
    """1 (malicious) when the score reaches the threshold, else 0."""
    return int(anomaly_score(scorer, x) >= scorer.threshold)


class AnomalyScoringClassifier(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around :class:`AnomalyScorer`.

    Nothing is learned; ``fit`` only validates the input width and records
    the classes.  ``decision_function`` is the anomaly score, so the estimator
    can be ROC-swept like any trained model.
    """

    def __init__(self, severities=None, threshold=DEFAULT_THRESHOLD):
        self.severities = severities
        self.threshold = threshold

    def fit(self, X, y=None):
        X = check_array(X)
        if self.severities is None:
            raise ValueError("severities are required")
        self.scorer_ = AnomalyScorer(tuple(int(s) for s in self.severities), self.threshold)
        if X.shape[1] != len(self.scorer_.severities):
            raise InconsistentSpaceError(
                f"expected {len(self.scorer_.severities)} features, got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "scorer_")
        return anomaly_scores(self.scorer_, check_array(X)).astype(float)

    def predict(self, X):
        return (self.decision_function(X) >= self.threshold).astype(int)
