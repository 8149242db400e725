"""
Tests for PCA fits, sample and prediction scores and leave-one-out refits
"""
import numpy as np
import pytest

from src.handlers import pca_handlers as pca
from src.handlers.simulate_handlers import gen_spike
from src.states.errors import DimensionMismatch, InvalidInput, RankExceeded
from src.states.models import SpikeSpec


@pytest.fixture
def spike_data():
    """Small spike-model dataset with strong spikes"""
    return gen_spike(SpikeSpec(d=400, n=20, sigma_sq=(0.2, 0.1), seed=11), n_test=6)


def _match_sign(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a * np.where(np.sum(a * b, axis=0) < 0, -1.0, 1.0)


class TestFit:
    """Tests for the PCA fit and its scores"""

    def test_variances_descending(self, spike_data):
        """Variances are sigma^2 / n, non-increasing and non-negative"""
        fit = pca.fit(spike_data.train)
        assert fit.rank == 20
        assert np.all(np.diff(fit.variances) <= 0)
        assert np.all(fit.variances >= 0)
        direct = np.linalg.svd(spike_data.train, compute_uv=False) ** 2 / 20
        assert np.allclose(fit.variances, direct, rtol=1e-10)

    def test_sample_scores_are_projections(self, spike_data):
        """Sample scores equal U_hat^T X"""
        fit = pca.fit(spike_data.train)
        scores = pca.sample_scores(fit, 3)
        assert scores.kind == "sample"
        assert np.allclose(scores.values, fit.directions[:, :3].T @ spike_data.train, atol=1e-10)

    def test_predict_training_data(self, spike_data):
        """Predicting the training data reproduces the sample scores"""
        fit = pca.fit(spike_data.train)
        prediction = pca.predict_scores(fit, spike_data.train, 2)
        assert prediction.kind == "prediction"
        assert np.allclose(prediction.values, pca.sample_scores(fit, 2).values, atol=1e-10)

    def test_centered_fit(self, spike_data):
        """A centered fit has rank n - 1 and maps the mean to zero scores"""
        fit = pca.fit(spike_data.train, center=True)
        assert fit.centered
        assert fit.rank == 19
        assert np.allclose(fit.col_mean, spike_data.train.mean(axis=1))
        zero = pca.predict_scores(fit, fit.col_mean[:, None], 2)
        assert np.allclose(zero.values, 0.0, atol=1e-10)
        assert np.allclose(pca.sample_scores(fit, 2).values.mean(axis=1), 0.0, atol=1e-10)

    def test_rank_exceeded(self, spike_data):
        """Requesting more components than the rank fails"""
        fit = pca.fit(spike_data.train)
        with pytest.raises(RankExceeded):
            pca.sample_scores(fit, 21)

    def test_dimension_mismatch(self, spike_data):
        """New data must have d rows"""
        fit = pca.fit(spike_data.train)
        with pytest.raises(DimensionMismatch):
            pca.predict_scores(fit, spike_data.test[:-1], 2)

    def test_rejects_tiny_input(self):
        """A single observation cannot be fitted"""
        with pytest.raises(InvalidInput):
            pca.fit(np.ones((10, 1)))

    def test_exact_small_case(self):
        """Orthogonal columns of norms 2 and 1 give variances 2 and 0.5"""
        X = np.array([[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        fit = pca.fit(X)
        assert fit.rank == 2
        assert np.allclose(fit.variances, [2.0, 0.5], atol=1e-12)
        assert np.allclose(np.abs(fit.directions), np.eye(3)[:, :2], atol=1e-12)
        scores = pca.sample_scores(fit, 2).values
        assert np.allclose(scores, [[2.0, 0.0], [0.0, 1.0]], atol=1e-12)
        expected = np.sqrt(2 * fit.variances)[:, None] * fit.right_vectors.T
        assert np.allclose(scores, expected, atol=1e-12)

    def test_scaled(self, spike_data):
        """Scaling divides by sqrt(d) and keeps the kind"""
        fit = pca.fit(spike_data.train)
        scores = pca.sample_scores(fit, 2)
        scaled = pca.scaled(scores, 400)
        assert scaled.kind == "sample"
        assert np.allclose(scaled.values, scores.values / 20.0)


class TestLeaveOneOut:
    """Tests for the leave-one-out refits"""

    @pytest.mark.parametrize("center", [False, True])
    def test_matches_refit_from_scratch(self, spike_data, center):
        """Each refit equals a PCA of the data without column j"""
        X = spike_data.train
        loo = pca.loo_fits(X, 2, center=center)
        assert len(loo) == X.shape[1]
        for j in (0, 7, 19):
            direct = pca.fit(np.delete(X, j, axis=1), center=center)
            assert np.allclose(loo[j].variances, direct.variances[:2], rtol=1e-9)
            aligned = _match_sign(direct.directions[:, :2], loo[j].directions)
            assert np.allclose(loo[j].directions, aligned, atol=1e-8)
            assert loo[j].n_obs == 19

    def test_signs_follow_full_fit(self, spike_data):
        """Refit directions point the same way as the full-data directions"""
        full = pca.fit(spike_data.train)
        for refit in pca.loo_fits(spike_data.train, 2, full=full):
            assert np.all(np.sum(refit.directions * full.directions[:, :2], axis=0) >= 0)

    def test_threads_do_not_change_results(self, spike_data):
        """Worker threads give bit-identical refits in the same order"""
        serial = pca.loo_fits(spike_data.train, 2, threads=1)
        parallel = pca.loo_fits(spike_data.train, 2, threads=3)
        for a, b in zip(serial, parallel):
            assert np.array_equal(a.directions, b.directions)
            assert np.array_equal(a.variances, b.variances)

    def test_prediction_scores(self, spike_data):
        """Column j projects X_j onto the refit that left it out"""
        X = spike_data.train
        loo = pca.loo_fits(X, 2, center=True)
        scores = pca.loo_prediction_scores(loo, X, 2)
        assert scores.shape == (2, 20)
        expected = loo[4].directions.T @ (X[:, 4] - loo[4].col_mean)
        assert np.allclose(scores[:, 4], expected)

    def test_needs_enough_columns(self):
        """n must exceed m + 1"""
        with pytest.raises(InvalidInput):
            pca.loo_fits(np.ones((50, 3)) + np.eye(50, 3), 2)

    def test_prediction_scores_count(self, spike_data):
        """One refit per column is required"""
        loo = pca.loo_fits(spike_data.train, 2)
        with pytest.raises(InvalidInput):
            pca.loo_prediction_scores(loo[:-1], spike_data.train, 2)

    def test_duplicate_column(self, spike_data):
        """Leaving out either copy of a duplicated column gives the original fit"""
        X = spike_data.train
        doubled = np.hstack([X, X[:, [0]]])
        loo = pca.loo_fits(doubled, 2)
        original = pca.fit(X)
        aligned = _match_sign(original.directions[:, :2], loo[20].directions)
        assert np.allclose(loo[20].directions, aligned, atol=1e-8)
        assert np.allclose(loo[20].variances, original.variances[:2], rtol=1e-9)
        assert np.allclose(loo[0].directions, loo[20].directions, atol=1e-8)
        assert np.allclose(loo[0].variances, loo[20].variances, rtol=1e-9)
