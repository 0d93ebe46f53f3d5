"""Trainable detectors over rule bits: linear models and random forests."""

from __future__ import annotations

import numpy as np

from .artifact import dumps_model, load_model, loads_model, save_model
from .forest import ForestModel, RuleForestClassifier, Tree, forest_scores, train_forest
from .linear import (
    LinearModel,
    LinearRuleClassifier,
    TrainConfig,
    linear_scores,
    objective,
    train_linear,
    zero_weight_count,
)

__all__ = [
    "ForestModel", "LinearModel", "LinearRuleClassifier", "RuleForestClassifier",
    "TrainConfig", "Tree", "decision_score", "decision_scores", "dumps_model",
    "forest_scores", "linear_scores", "load_model", "loads_model", "objective",
    "save_model", "train_forest", "train_linear", "zero_weight_count",
]


def decision_scores(model, X) -> np.ndarray:
    if isinstance(model, LinearModel):
        return linear_scores(model, X)
    if isinstance(model, ForestModel):
        return forest_scores(model, X)
    raise TypeError(f"not a model: {type(model).__name__}")


def decision_score(model, x) -> float:
    """Score of a single feature vector; larger means more likely malicious."""
    return float(decision_scores(model, x)[0])
