"""
Classifier Handlers - closed-form one-vs-rest ridge classifier on PC scores
"""
import logging

import numpy as np
import scipy.linalg

from ..states.errors import DimensionMismatch, InvalidInput
from ..states.models import LinearClassifier, ScoreMatrix

logger = logging.getLogger(__name__)

RIDGE = 1e-3


def _design(clf_center: np.ndarray, clf_scale: np.ndarray, features: np.ndarray) -> np.ndarray:
    standardized = (features - clf_center) / clf_scale
    return np.hstack([standardized, np.ones((features.shape[0], 1))])


def train_classifier(scores: ScoreMatrix, labels) -> LinearClassifier:
    """
    Train a one-vs-rest ridge classifier

    Inputs are standardized with the training mean and standard deviation;
    each class gets a ridge regression on +1/-1 indicator targets. The bias
    (last weight row) is not penalized.

    :param scores: m x n training scores, one observation per column
    :param labels: n class labels
    :return: LinearClassifier
    """
    labels = np.asarray(labels)
    features = scores.values.T
    if labels.shape != (features.shape[0],):
        raise DimensionMismatch(f"expected {features.shape[0]} labels, got {labels.shape}")
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2 or np.any(counts < 2):
        raise InvalidInput(f"need at least 2 classes with 2 samples each, got counts {dict(zip(classes.tolist(), counts.tolist()))}")

    center = features.mean(axis=0)
    scale = features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    D = _design(center, scale, features)
    targets = np.where(labels[:, None] == classes[None, :], 1.0, -1.0)

    penalty = np.full(D.shape[1], RIDGE)
    penalty[-1] = 0.0
    weights = scipy.linalg.solve(D.T @ D + np.diag(penalty), D.T @ targets, assume_a="pos")
    logger.debug(f"Trained classifier on {features.shape[0]} samples, {classes.size} classes")
    return LinearClassifier(weights=weights, classes=classes, center=center, scale=scale)


def predict(clf: LinearClassifier, scores: ScoreMatrix) -> np.ndarray:
    """
    Predict class labels by the largest one-vs-rest decision value

    :param clf: Trained classifier
    :param scores: m x n scores
    :return: n predicted labels
    """
    features = scores.values.T
    if features.shape[1] != clf.center.shape[0]:
        raise DimensionMismatch(f"classifier expects {clf.center.shape[0]} components, got {features.shape[1]}")
    decision = _design(clf.center, clf.scale, features) @ clf.weights
    return clf.classes[np.argmax(decision, axis=1)]


def error_rate(clf: LinearClassifier, scores: ScoreMatrix, labels) -> float:
    """Misclassification rate in percent"""
    labels = np.asarray(labels)
    return float(100.0 * np.mean(predict(clf, scores) != labels))
