"""
Tests for the one-vs-rest ridge classifier
"""
import numpy as np
import pytest

from src.handlers.classifier_handlers import error_rate, predict, train_classifier
from src.states.errors import DimensionMismatch, InvalidInput
from src.states.models import ScoreMatrix


@pytest.fixture
def clusters():
    """Three well separated clusters in the plane, one observation per column"""
    rng = np.random.default_rng(12)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    labels = np.repeat([0, 1, 2], 20)
    points = centers[labels] + 0.5 * rng.standard_normal((60, 2))
    return ScoreMatrix(values=points.T, kind="sample"), labels


def test_separable_training_error(clusters):
    """Separated clusters are classified without error"""
    scores, labels = clusters
    clf = train_classifier(scores, labels)
    assert error_rate(clf, scores, labels) == 0.0
    assert list(clf.classes) == [0, 1, 2]


def test_predicts_new_points(clusters):
    """Points at the cluster centers get their cluster label"""
    scores, labels = clusters
    clf = train_classifier(scores, labels)
    new = ScoreMatrix(values=np.array([[0.0, 10.0, 0.0], [0.0, 0.0, 10.0]]), kind="prediction")
    assert list(predict(clf, new)) == [0, 1, 2]


def test_standardization_uses_training_scores(clusters):
    """Scaling all scores by a constant leaves training predictions unchanged"""
    scores, labels = clusters
    scaled = ScoreMatrix(values=scores.values * 7.5, kind="adjusted-sample")
    clf = train_classifier(scaled, labels)
    assert error_rate(clf, scaled, labels) == 0.0
    assert np.allclose(clf.center, scaled.values.mean(axis=1))


def test_error_rate_is_percent(clusters):
    """Error rate is reported in percent"""
    scores, labels = clusters
    clf = train_classifier(scores, labels)
    wrong = (labels + 1) % 3
    assert error_rate(clf, scores, wrong) == 100.0


def test_needs_two_classes():
    """A single class cannot be separated"""
    scores = ScoreMatrix(values=np.ones((2, 5)), kind="sample")
    with pytest.raises(InvalidInput):
        train_classifier(scores, np.zeros(5, dtype=int))


def test_label_count_mismatch(clusters):
    """One label per observation is required"""
    scores, labels = clusters
    with pytest.raises(DimensionMismatch):
        train_classifier(scores, labels[:-1])


def test_prediction_component_mismatch(clusters):
    """Prediction scores need the training component count"""
    scores, labels = clusters
    clf = train_classifier(scores, labels)
    with pytest.raises(DimensionMismatch):
        predict(clf, ScoreMatrix(values=np.ones((3, 4)), kind="prediction"))
