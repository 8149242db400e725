"""
Simulate Handlers - spike and mixture population generators

Every dataset carries its oracle truth: population directions, spike
variances, the noise level tau^2 and the true scores of the training and
test columns. Random draws come from three streams of the dataset seed:
0 for population parameters, 1 for training data, 2 for test data.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np

from ..states.errors import DegenerateSpike, InvalidSpec
from ..states.models import (Dataset, MixtureSpec, OracleTruth, ScoreMatrix, SeededRng, SpikeSpec,
                             TestTruth)
from .numerics_handlers import random_orthogonal, sample_gaussian, sym_eig

logger = logging.getLogger(__name__)

POPULATION_STREAM = 0
TRAIN_STREAM = 1
TEST_STREAM = 2
FRAME_BLOCK = 10
PROBS_TOL = 1e-12


def spike_eigenvalues(spec: SpikeSpec) -> np.ndarray:
    """
    Population eigenvalues of the spike model

    lambda_i = sigma_i^2 d for i <= m and tau i^(-beta) for i > m, with tau
    chosen so that the noise eigenvalues average exactly one.

    :param spec: Spike model specification
    :return: d-vector of eigenvalues in coordinate order
    """
    lam = np.empty(spec.d)
    lam[:spec.m] = np.asarray(spec.sigma_sq, dtype=np.float64) * spec.d
    decay = np.arange(spec.m + 1, spec.d + 1, dtype=np.float64) ** (-spec.beta)
    lam[spec.m:] = decay / decay.mean()
    return lam


def _validate_spike(spec: SpikeSpec, n_test: int, diagnostic: bool):
    if spec.m < 1 or spec.n <= spec.m:
        raise InvalidSpec(f"need n > m >= 1, got n={spec.n}, m={spec.m}")
    if spec.d <= spec.n and not diagnostic:
        raise InvalidSpec(f"need d > n, got d={spec.d}, n={spec.n}")
    if spec.d <= spec.m:
        raise InvalidSpec(f"need d > m, got d={spec.d}, m={spec.m}")
    sigma_sq = np.asarray(spec.sigma_sq, dtype=np.float64)
    if sigma_sq.shape != (spec.m,):
        raise InvalidSpec(f"sigma_sq must have m={spec.m} entries, got {sigma_sq.size}")
    if np.any(sigma_sq <= 0) or np.any(np.diff(sigma_sq) > 0):
        raise InvalidSpec("sigma_sq must be positive and non-increasing")
    if spec.beta < 0:
        raise InvalidSpec(f"beta must be >= 0, got {spec.beta}")
    if n_test < 1:
        raise InvalidSpec(f"n_test must be >= 1, got {n_test}")


def gen_spike(spec: SpikeSpec, n_test: int, diagnostic: bool = False) -> Dataset:
    """
    Generate training and test data from the spike model

    Data are X = U diag(sqrt(lambda)) Z with standard normal Z. The frame U is
    the identity unless spec.rotate_frame is set, in which case a seeded Haar
    rotation mixes the first max(m, 10) coordinates.

    :param spec: Spike model specification
    :param n_test: Number of test columns
    :param diagnostic: Allow d <= n (large-n moment checks)
    :return: Dataset with oracle truth
    """
    _validate_spike(spec, n_test, diagnostic)
    d, m = spec.d, spec.m
    lam = spike_eigenvalues(spec)
    root = np.sqrt(lam)

    rotation = None
    directions = np.zeros((d, m))
    if spec.rotate_frame:
        q = min(max(m, FRAME_BLOCK), d)
        rotation = random_orthogonal(SeededRng(spec.seed, POPULATION_STREAM), q)
        directions[:q] = rotation[:, :m]
    else:
        directions[np.arange(m), np.arange(m)] = 1.0

    def draw(stream: int, cols: int) -> Tuple[np.ndarray, np.ndarray]:
        Z = sample_gaussian(SeededRng(spec.seed, stream), d, cols)
        X = root[:, None] * Z
        if rotation is not None:
            X[:rotation.shape[0]] = rotation @ X[:rotation.shape[0]]
        return X, root[:m, None] * Z[:m]

    train, scores = draw(TRAIN_STREAM, spec.n)
    test, test_scores = draw(TEST_STREAM, n_test)
    scale = 1.0 / np.sqrt(d)

    oracle = OracleTruth(
        model="spike",
        directions=directions,
        sigma_sq=np.asarray(spec.sigma_sq, dtype=np.float64),
        tau_sq=float(lam[m:].sum() / d),
        true_scores=scores,
        scaled_scores=scores * scale,
        population_eigs=lam,
        mean=np.zeros(d),
        frame_rotation=rotation,
    )
    logger.info(f"Generated spike dataset: d={d}, n={spec.n}, n_test={n_test}, "
                f"beta={spec.beta}, seed={spec.seed}")
    return Dataset(train=train, test=test, oracle=oracle,
                   oracle_test=TestTruth(true_scores=test_scores, scaled_scores=test_scores * scale))


def _validate_mixture(spec: MixtureSpec, n_test: int):
    if spec.n <= spec.m:
        raise InvalidSpec(f"need n > 2, got n={spec.n}")
    if spec.d <= spec.n:
        raise InvalidSpec(f"need d > n, got d={spec.d}, n={spec.n}")
    if spec.a < 0:
        raise InvalidSpec(f"a must be positive, got {spec.a}")
    probs = np.asarray(spec.probs, dtype=np.float64)
    if probs.shape != (3,) or np.any(probs <= 0) or abs(probs.sum() - 1.0) > PROBS_TOL:
        raise InvalidSpec(f"probs must be 3 positive reals summing to 1, got {tuple(spec.probs)}")
    if n_test < 1:
        raise InvalidSpec(f"n_test must be >= 1, got {n_test}")


def mixture_spike(means: np.ndarray, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Rank-2 spike part of the mixture covariance from the 3 x 3 Gram matrix

    The between-group covariance is M M^T with M = [sqrt(p_g)(mu_g - mu_bar)],
    so its nonzero eigenpairs follow from M^T M without any d x d work.

    :param means: d x 3 group means
    :param probs: Group probabilities
    :return: (spike eigenvalues eta, d x 2 directions, population mean)
    """
    mu_bar = means @ probs
    M = (means - mu_bar[:, None]) * np.sqrt(probs)
    eig = sym_eig(M.T @ M, 2)
    eta = eig.values
    if eta[1] <= 1e-10 * max(float(np.trace(M.T @ M)), np.finfo(np.float64).tiny):
        raise DegenerateSpike("group means do not span a two-dimensional spike")
    directions = (M @ eig.vectors) / np.sqrt(eta)
    return eta, directions, mu_bar


def gen_mixture(spec: MixtureSpec, n_test: int) -> Dataset:
    """
    Generate training and test data from the three-group Gaussian mixture

    :param spec: Mixture model specification
    :param n_test: Number of test columns
    :return: Dataset with oracle truth and group labels
    """
    _validate_mixture(spec, n_test)
    d = spec.d
    probs = np.asarray(spec.probs, dtype=np.float64)
    levels = np.array([-spec.a, 0.0, spec.a])
    means = levels[SeededRng(spec.seed, POPULATION_STREAM).generator.integers(0, 3, size=(d, 3))]
    eta, directions, mu_bar = mixture_spike(means, probs)

    def draw(stream: int, cols: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        rng = SeededRng(spec.seed, stream)
        labels = rng.generator.choice(3, size=cols, p=probs)
        X = means[:, labels] + sample_gaussian(rng, d, cols)
        return X, directions.T @ (X - mu_bar[:, None]), labels

    train, scores, labels = draw(TRAIN_STREAM, spec.n)
    test, test_scores, test_labels = draw(TEST_STREAM, n_test)
    population_eigs = np.ones(d)
    population_eigs[:2] += eta
    scale = 1.0 / np.sqrt(d)

    oracle = OracleTruth(
        model="mixture",
        directions=directions,
        sigma_sq=population_eigs[:2] / d,
        # limiting noise level; the finite-d value sum(population_eigs[2:]) / d is (d - 2) / d
        tau_sq=1.0,
        true_scores=scores,
        scaled_scores=scores * scale,
        population_eigs=population_eigs,
        mean=mu_bar,
        labels=labels,
    )
    logger.info(f"Generated mixture dataset: d={d}, n={spec.n}, n_test={n_test}, "
                f"a={spec.a}, seed={spec.seed}")
    return Dataset(train=train, test=test, oracle=oracle,
                   oracle_test=TestTruth(true_scores=test_scores, scaled_scores=test_scores * scale,
                                         labels=test_labels))


def generate(spec: Union[SpikeSpec, MixtureSpec], n_test: int) -> Dataset:
    """
    Generate a dataset for either model

    :param spec: SpikeSpec or MixtureSpec
    :param n_test: Number of test columns
    :return: Dataset
    """
    if isinstance(spec, SpikeSpec):
        return gen_spike(spec, n_test)
    if isinstance(spec, MixtureSpec):
        return gen_mixture(spec, n_test)
    raise InvalidSpec(f"unsupported model specification {type(spec).__name__}")


def oracle_scores(oracle: OracleTruth, center: bool = False) -> ScoreMatrix:
    """Scaled true training scores W1, row-centered when the data are centered"""
    values = oracle.scaled_scores
    if center:
        values = values - values.mean(axis=1, keepdims=True)
    return ScoreMatrix(values=values, kind="true")


def oracle_test_scores(dataset: Dataset, center: bool = False,
                       ks: Optional[Tuple[int, ...]] = None) -> ScoreMatrix:
    """
    Scaled true test scores, shifted by the training mean when centered

    A centered fit projects X_* - xbar, so the matching truth is
    u^T (X_* - xbar) = w_* - mean_j(w_j).

    :param dataset: Dataset
    :param center: Whether the fit centered the training data
    :param ks: Components to return (1-based); defaults to the first m
    :return: ScoreMatrix of kind true
    """
    oracle = dataset.oracle
    scale = 1.0 / np.sqrt(oracle.d)
    if ks is None:
        test, train = dataset.oracle_test.true_scores, oracle.true_scores
    else:
        test, train = oracle.project(dataset.test, ks), oracle.project(dataset.train, ks)
    if center:
        test = test - train.mean(axis=1, keepdims=True)
    return ScoreMatrix(values=test * scale, kind="true")
