import numpy as np
import pytest
from hypothesis import given, strategies as st

from crs_learn.baseline import (
    AnomalyScorer,
    AnomalyScoringClassifier,
    anomaly_score,
    anomaly_scores,
    classify,
)
from crs_learn.errors import InconsistentSpaceError
from crs_learn.features import FeatureMatrix, FeatureSpace
from crs_learn.learn import LinearModel, linear_scores

SEV = (5, 3, 2, 4)
SPACE = FeatureSpace((942100, 942140, 942160, 942190), 2, SEV)


def vec(*bits):
    return np.array(bits, dtype=np.uint8)


def test_scores_are_severity_sums():
    scorer = AnomalyScorer(SEV)
    assert anomaly_score(scorer, vec(0, 0, 0, 0)) == 0
    assert anomaly_score(scorer, vec(1, 0, 0, 0)) == 5
    assert anomaly_score(scorer, vec(1, 1, 0, 0)) == 8
    assert anomaly_score(scorer, vec(1, 1, 1, 1)) == 14


def test_threshold_is_inclusive():
    scorer = AnomalyScorer(SEV, threshold=5)
    assert classify(scorer, vec(1, 0, 0, 0)) == 1
    assert classify(scorer, vec(0, 0, 0, 1)) == 0
    assert classify(scorer, vec(0, 1, 1, 0)) == 1
    # threshold 0 flags everything, including the empty vector
    assert classify(AnomalyScorer(SEV, threshold=0), vec(0, 0, 0, 0)) == 1


def test_validation():
    with pytest.raises(ValueError):
        AnomalyScorer((1, 5))
    with pytest.raises(ValueError):
        AnomalyScorer(SEV, threshold=-1)
    with pytest.raises(InconsistentSpaceError):
        anomaly_score(AnomalyScorer(SEV), vec(1, 0))


def test_from_space_binds_digest():
    scorer = AnomalyScorer.from_space(SPACE)
    m = FeatureMatrix(np.eye(4, dtype=np.uint8), SPACE.digest, SPACE.rule_ids)
    assert list(anomaly_scores(scorer, m)) == list(SEV)
    other = FeatureMatrix(m.bits, "elsewhere")
    with pytest.raises(InconsistentSpaceError):
        anomaly_scores(scorer, other)
    with pytest.raises(InconsistentSpaceError):
        AnomalyScorer.from_space(FeatureSpace((1, 2), 1))


_bits = st.lists(st.integers(0, 1), min_size=4, max_size=4)


@given(_bits, st.integers(0, 3))
def test_setting_a_bit_never_lowers_the_score(bits, j):
    scorer = AnomalyScorer(SEV)
    more = list(bits)
    more[j] = 1
    assert anomaly_score(scorer, vec(*more)) >= anomaly_score(scorer, vec(*bits))
    assert classify(scorer, vec(*more)) >= classify(scorer, vec(*bits))


def test_same_as_linear_model_with_severity_weights(rng):
    X = rng.integers(0, 2, (200, 4)).astype(np.uint8)
    scorer = AnomalyScorer(SEV)
    lin = LinearModel(np.asarray(SEV, dtype=float), 0.0, "logistic", "l2", 1.0)
    assert np.array_equal(anomaly_scores(scorer, X).astype(float), linear_scores(lin, X))


def test_estimator_wrapper(rng):
    X = rng.integers(0, 2, (30, 4))
    clf = AnomalyScoringClassifier(severities=SEV, threshold=5).fit(X)
    expected = (X @ np.array(SEV) >= 5).astype(int)
    assert np.array_equal(clf.predict(X), expected)
    assert clf.get_params() == {"severities": SEV, "threshold": 5}
    with pytest.raises(InconsistentSpaceError):
        AnomalyScoringClassifier(severities=(5,)).fit(X)
