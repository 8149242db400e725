"""
Tests for the spike and mixture generators
"""
import numpy as np
import pytest

from src.handlers.simulate_handlers import (gen_mixture, gen_spike, generate, mixture_spike, oracle_scores,
                                            oracle_test_scores, spike_eigenvalues)
from src.states.errors import DegenerateSpike, InvalidInput, InvalidSpec
from src.states.models import MixtureSpec, SpikeSpec


class TestSpikeModel:
    """Tests for the spike model generator"""

    def test_eigenvalues(self):
        """Spikes are sigma^2 d and the noise eigenvalues average one"""
        lam = spike_eigenvalues(SpikeSpec(d=1000, n=20, sigma_sq=(0.02, 0.01), beta=0.3))
        assert lam[0] == pytest.approx(20.0)
        assert lam[1] == pytest.approx(10.0)
        assert lam[2:].mean() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(lam[2:]) < 0)

    def test_flat_noise_when_beta_zero(self):
        """beta = 0 gives unit noise eigenvalues"""
        lam = spike_eigenvalues(SpikeSpec(d=100, n=10, beta=0.0))
        assert np.allclose(lam[2:], 1.0)

    def test_shapes_and_oracle(self):
        """Data, truth and scaled truth have consistent shapes and values"""
        ds = gen_spike(SpikeSpec(d=500, n=20, seed=3), n_test=7)
        assert ds.train.shape == (500, 20)
        assert ds.test.shape == (500, 7)
        assert ds.oracle.true_scores.shape == (2, 20)
        assert ds.oracle_test.true_scores.shape == (2, 7)
        assert np.array_equal(ds.oracle.scaled_scores, ds.oracle.true_scores / np.sqrt(500))
        lam = ds.oracle.population_eigs
        assert ds.oracle.tau_sq == pytest.approx(lam[2:].sum() / 500)

    def test_true_scores_are_projections(self):
        """True scores equal u_k^T X for the population directions"""
        ds = gen_spike(SpikeSpec(d=300, n=15, seed=1), n_test=5)
        assert np.allclose(ds.oracle.project(ds.train, [1, 2]), ds.oracle.true_scores, atol=1e-12)

    def test_rotated_frame(self):
        """A rotated frame keeps orthonormal directions and matching scores"""
        ds = gen_spike(SpikeSpec(d=300, n=15, seed=1, rotate_frame=True), n_test=5)
        U = ds.oracle.directions
        assert np.allclose(U.T @ U, np.eye(2), atol=1e-12)
        assert np.any(np.abs(U[2:10]) > 0)
        assert np.allclose(ds.oracle.project(ds.train, [1, 2]), ds.oracle.true_scores, atol=1e-10)
        assert np.allclose(ds.oracle_test.true_scores, ds.oracle.project(ds.test, [1, 2]), atol=1e-10)

    def test_noise_direction(self):
        """Directions beyond m are coordinate vectors in the unrotated frame"""
        ds = gen_spike(SpikeSpec(d=50, n=10), n_test=2)
        u = ds.oracle.direction(3)
        assert u[2] == 1.0
        assert u.sum() == 1.0

    def test_same_seed_same_data(self):
        """Generation is a pure function of the specification"""
        a = gen_spike(SpikeSpec(d=200, n=10, seed=42), n_test=3)
        b = gen_spike(SpikeSpec(d=200, n=10, seed=42), n_test=3)
        c = gen_spike(SpikeSpec(d=200, n=10, seed=43), n_test=3)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.test, b.test)
        assert not np.array_equal(a.train, c.train)

    def test_training_data_ignores_test_size(self):
        """Training columns and their truth do not depend on n_test"""
        a = gen_spike(SpikeSpec(d=200, n=10, seed=42), n_test=3)
        b = gen_spike(SpikeSpec(d=200, n=10, seed=42), n_test=9)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.oracle.true_scores, b.oracle.true_scores)

    def test_large_sample_score_variance(self):
        """With many observations each true score row has variance near lambda_i"""
        ds = gen_spike(SpikeSpec(d=50, n=20000, sigma_sq=(0.2, 0.1), seed=6), n_test=1, diagnostic=True)
        lam = ds.oracle.population_eigs[:2]
        assert np.allclose(lam, [10.0, 5.0])
        variances = ds.oracle.true_scores.var(axis=1, ddof=1)
        assert np.allclose(variances, lam, rtol=0.03)

    def test_requires_hdlss(self):
        """d <= n is rejected unless diagnostic mode is on"""
        with pytest.raises(InvalidSpec):
            gen_spike(SpikeSpec(d=20, n=30), n_test=5)
        ds = gen_spike(SpikeSpec(d=20, n=30), n_test=5, diagnostic=True)
        assert ds.train.shape == (20, 30)

    def test_rejects_increasing_sigma(self):
        """Spike variances must be non-increasing"""
        with pytest.raises(InvalidSpec):
            gen_spike(SpikeSpec(d=200, n=10, sigma_sq=(0.01, 0.02)), n_test=3)

    def test_rejects_sigma_length(self):
        """sigma_sq needs one entry per spike"""
        with pytest.raises(InvalidSpec):
            gen_spike(SpikeSpec(d=200, n=10, m=3), n_test=3)


class TestMixtureModel:
    """Tests for the three-group mixture generator"""

    def test_labels_and_oracle(self):
        """Labels are 0..2, tau^2 is one and directions are orthonormal"""
        ds = gen_mixture(MixtureSpec(d=2000, n=60, seed=5), n_test=40)
        assert set(np.unique(ds.oracle.labels)) <= {0, 1, 2}
        assert ds.oracle_test.labels.shape == (40,)
        assert ds.oracle.tau_sq == 1.0
        U = ds.oracle.directions
        assert np.allclose(U.T @ U, np.eye(2), atol=1e-10)
        assert np.all(ds.oracle.population_eigs[:2] > 1.0)
        assert ds.oracle.population_eigs[0] >= ds.oracle.population_eigs[1]

    def test_true_scores_relative_to_mean(self):
        """True scores are projections of X minus the population mean"""
        ds = gen_mixture(MixtureSpec(d=1000, n=30, seed=2), n_test=5)
        expected = ds.oracle.directions.T @ (ds.train - ds.oracle.mean[:, None])
        assert np.allclose(ds.oracle.true_scores, expected, atol=1e-10)

    def test_zero_spacing_is_degenerate(self):
        """a = 0 leaves no spike"""
        with pytest.raises(DegenerateSpike):
            gen_mixture(MixtureSpec(d=500, n=20, a=0.0), n_test=5)

    def test_spike_matches_full_covariance(self):
        """The 3 x 3 reduction agrees with a d x d eigendecomposition"""
        rng = np.random.default_rng(4)
        means = np.array([-1.0, 0.0, 1.0])[rng.integers(0, 3, size=(200, 3))]
        probs = np.array([0.3, 0.3, 0.4])
        eta, directions, mu_bar = mixture_spike(means, probs)
        centered = means - (means @ probs)[:, None]
        cov = (centered * probs) @ centered.T
        values, vectors = np.linalg.eigh(cov)
        assert np.allclose(mu_bar, means @ probs, atol=1e-12)
        assert np.allclose(eta, values[::-1][:2], atol=1e-8)
        assert np.allclose(values[:-2], 0.0, atol=1e-8)
        overlaps = np.abs(np.sum(directions * vectors[:, ::-1][:, :2], axis=0))
        assert np.allclose(overlaps, 1.0, atol=1e-8)

    def test_training_data_ignores_test_size(self):
        """Mixture training columns and labels do not depend on n_test"""
        a = gen_mixture(MixtureSpec(d=500, n=20, seed=8), n_test=4)
        b = gen_mixture(MixtureSpec(d=500, n=20, seed=8), n_test=11)
        assert np.array_equal(a.train, b.train)
        assert np.array_equal(a.oracle.labels, b.oracle.labels)

    def test_rejects_bad_probs(self):
        """Group probabilities must sum to one"""
        with pytest.raises(InvalidSpec):
            gen_mixture(MixtureSpec(d=500, n=20, probs=(0.5, 0.3, 0.3)), n_test=5)

    def test_noise_direction_undefined(self):
        """The mixture has no population direction beyond m"""
        ds = gen_mixture(MixtureSpec(d=500, n=20), n_test=5)
        with pytest.raises(InvalidInput):
            ds.oracle.direction(3)


class TestOracleScores:
    """Tests for the oracle score accessors"""

    def test_generate_dispatch(self):
        """generate picks the generator from the spec type"""
        assert generate(MixtureSpec(d=500, n=20), 5).oracle.model == "mixture"
        assert generate(SpikeSpec(d=500, n=20), 5).oracle.model == "spike"
        with pytest.raises(InvalidSpec):
            generate("spike", 5)

    def test_centered_scores(self):
        """Centered oracle scores have zero row means"""
        ds = gen_spike(SpikeSpec(d=400, n=20, seed=9), n_test=5)
        W = oracle_scores(ds.oracle, center=True)
        assert W.kind == "true"
        assert np.allclose(W.values.mean(axis=1), 0.0, atol=1e-14)
        assert np.array_equal(oracle_scores(ds.oracle).values, ds.oracle.scaled_scores)

    def test_test_scores_shift(self):
        """Centered test truth is shifted by the training mean"""
        ds = gen_spike(SpikeSpec(d=400, n=20, seed=9), n_test=5)
        raw = oracle_test_scores(ds, center=False).values
        centered = oracle_test_scores(ds, center=True).values
        shift = ds.oracle.true_scores.mean(axis=1, keepdims=True) / np.sqrt(400)
        assert np.allclose(raw - centered, shift, atol=1e-12)

    def test_test_scores_for_noise_component(self):
        """Any spike component can be requested"""
        ds = gen_spike(SpikeSpec(d=400, n=20, seed=9), n_test=5)
        W = oracle_test_scores(ds, ks=(3,))
        assert W.values.shape == (1, 5)
        assert np.allclose(W.values[0], ds.test[2] / np.sqrt(400))
