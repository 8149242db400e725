"""
PCA Handlers - standard PCA, sample and prediction scores, leave-one-out refits

Variances are lambda_hat_i = sigma_i^2 / n and sample scores are the weighted
right singular vectors W_hat = diag(sigma) V^T.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from ..states.errors import DimensionMismatch, InvalidInput, RankExceeded
from ..states.models import DataMatrix, PcaFit, ScoreMatrix, ThinSvd, check_data_matrix
from .numerics_handlers import gram_svd

logger = logging.getLogger(__name__)


def double_center(gram: np.ndarray) -> np.ndarray:
    """Gram matrix of the column-centered data, H G H with H = I - 11^T/n"""
    col = gram.mean(axis=0)
    return gram - col[None, :] - col[:, None] + gram.mean()


def _fit_from_svd(svd: ThinSvd, n: int, centered: bool, col_mean: np.ndarray) -> PcaFit:
    return PcaFit(
        directions=svd.left,
        variances=svd.singular ** 2 / n,
        right_vectors=svd.right,
        sample_scores=svd.singular[:, None] * svd.right.T,
        centered=centered,
        col_mean=col_mean,
    )


def fit(X, center: bool = False) -> PcaFit:
    """
    Fit standard PCA to a d x n data matrix

    :param X: d x n data, one observation per column
    :param center: Subtract the column mean before the decomposition
    :return: PcaFit with all nonzero components
    """
    X = check_data_matrix(X)
    d, n = X.shape
    if d < 2 or n < 2:
        raise InvalidInput(f"PCA needs d >= 2 and n >= 2, got {d} x {n}")

    if center:
        col_mean = X.mean(axis=1)
        Xc = X - col_mean[:, None]
    else:
        col_mean = np.zeros(d)
        Xc = X
    svd = gram_svd(Xc, Xc.T @ Xc)
    logger.debug(f"PCA fit: d={d}, n={n}, center={center}, rank={svd.rank}")
    return _fit_from_svd(svd, n, center, col_mean)


def _check_m(fit_result: PcaFit, m: int):
    if m < 1:
        raise InvalidInput(f"m must be >= 1, got {m}")
    if m > fit_result.rank:
        raise RankExceeded(f"requested {m} components, fit has rank {fit_result.rank}")


def sample_scores(fit_result: PcaFit, m: int) -> ScoreMatrix:
    """
    First m rows of the sample score matrix

    :param fit_result: PCA fit
    :param m: Number of components
    :return: ScoreMatrix of kind sample
    """
    _check_m(fit_result, m)
    return ScoreMatrix(values=fit_result.sample_scores[:m].copy(), kind="sample")


def predict_scores(fit_result: PcaFit, X_new, m: int) -> ScoreMatrix:
    """
    Project new observations onto the first m fitted directions

    :param fit_result: PCA fit
    :param X_new: d x n_new data
    :param m: Number of components
    :return: ScoreMatrix of kind prediction
    """
    X_new = check_data_matrix(X_new, "X_new")
    if X_new.shape[0] != fit_result.d:
        raise DimensionMismatch(f"X_new has {X_new.shape[0]} rows, fit expects {fit_result.d}")
    _check_m(fit_result, m)
    if fit_result.centered:
        X_new = X_new - fit_result.col_mean[:, None]
    return ScoreMatrix(values=fit_result.directions[:, :m].T @ X_new, kind="prediction")


def loo_fits(X, m: int, center: bool = False, threads: int = 1,
             full: Optional[PcaFit] = None) -> List[PcaFit]:
    """
    Leave-one-out refits, each on the n - 1 remaining columns

    Each refit keeps its first m components, sign-aligned so that every
    direction has a non-negative inner product with the full-data direction.
    The refits share the full Gram matrix: deleting row and column j (and
    double-centering when center is set) gives the Gram matrix of the reduced
    data exactly.

    :param X: d x n data
    :param m: Components kept per refit
    :param center: Center each reduced data set by its own column mean
    :param threads: Worker threads; output order is always j = 0..n-1
    :param full: Full-data fit used for sign alignment (computed if absent)
    :return: n PcaFit objects
    """
    X = check_data_matrix(X)
    d, n = X.shape
    if m < 1 or n < m + 2:
        raise InvalidInput(f"leave-one-out needs n >= m + 2, got n={n}, m={m}")
    if full is None:
        full = fit(X, center)
    _check_m(full, m)

    gram = X.T @ X
    total = X.sum(axis=1)
    reference = full.directions[:, :m]

    def refit(j: int) -> PcaFit:
        keep = np.delete(np.arange(n), j)
        sub = gram[np.ix_(keep, keep)]
        if center:
            col_mean = (total - X[:, j]) / (n - 1)
            sub = double_center(sub)
            svd = gram_svd(X[:, keep], sub, col_shift=col_mean, keep=m)
        else:
            col_mean = np.zeros(d)
            svd = gram_svd(X[:, keep], sub, keep=m)
        if svd.rank < m:
            raise RankExceeded(f"leave-one-out refit {j} has rank {svd.rank} < {m}")
        signs = np.where(np.sum(svd.left * reference, axis=0) < 0, -1.0, 1.0)
        aligned = ThinSvd(left=svd.left * signs, singular=svd.singular, right=svd.right * signs)
        return _fit_from_svd(aligned, n - 1, center, col_mean)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            fits = list(executor.map(refit, range(n)))
    else:
        fits = [refit(j) for j in range(n)]
    logger.debug(f"Computed {n} leave-one-out refits (m={m}, center={center}, threads={threads})")
    return fits


def loo_prediction_scores(loo: Sequence[PcaFit], X, m: int) -> np.ndarray:
    """
    Leave-one-out prediction scores u_i(-j)^T (X_j - xbar(-j))

    :param loo: Refits from loo_fits on the same X
    :param X: d x n data
    :param m: Number of components
    :return: m x n array, column j from the refit that left out X_j
    """
    X = check_data_matrix(X)
    if len(loo) != X.shape[1]:
        raise InvalidInput(f"expected {X.shape[1]} leave-one-out fits, got {len(loo)}")
    scores = np.empty((m, X.shape[1]))
    for j, refit in enumerate(loo):
        _check_m(refit, m)
        scores[:, j] = refit.directions[:, :m].T @ (X[:, j] - refit.col_mean)
    return scores


def scaled(scores: ScoreMatrix, d: int) -> ScoreMatrix:
    """Scores multiplied by d^(-1/2), kind preserved"""
    return ScoreMatrix(values=scores.values / np.sqrt(d), kind=scores.kind)
