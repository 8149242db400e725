"""
Bias Handlers - scaling/rotation bias of PC scores

Oracle-side quantities (score covariance, theoretical factors and limits)
and data-side estimators of the bias-adjustment factors rho: asymptotic,
three jackknife variants and the random-matrix (LZW) form.
"""
import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..states.errors import (DegenerateScore, DegenerateSignal, DegenerateSpectrum, InvalidInput,
                             InvalidKind, RankExceeded)
from ..states.models import BiasFactors, OracleTruth, PcaFit, ScoreCov, ScoreMatrix, TheoryLimits
from .numerics_handlers import sym_eig
from .pca_handlers import loo_fits, loo_prediction_scores

logger = logging.getLogger(__name__)

JACKKNIFE_DELTA = 1e-8
DATA_ESTIMATORS = ("asymptotic", "jackknife1", "jackknife2", "jackknife3", "lzw")


def score_cov(W1: ScoreMatrix) -> ScoreCov:
    """
    Scaled second moment matrix of the true scores with its eigenpairs

    :param W1: m x n scaled true scores
    :return: ScoreCov with W1 W1^T, eigenvalues descending and rotation R
    """
    if W1.comps >= W1.cols:
        raise InvalidInput(f"score covariance needs m < n, got m={W1.comps}, n={W1.cols}")
    matrix = W1.values @ W1.values.T
    eig = sym_eig(matrix)
    return ScoreCov(matrix=matrix, eigenvalues=eig.values, eigenvectors=eig.vectors)


def rho_theory(cov: ScoreCov, tau_sq: float) -> BiasFactors:
    """
    Theoretical factors rho_k = sqrt(1 + tau^2 / lambda_k(W))

    :param cov: Score covariance of the scaled true scores
    :param tau_sq: Noise level tau^2
    :return: BiasFactors with rotation R
    """
    if tau_sq < 0:
        raise InvalidInput(f"tau_sq must be >= 0, got {tau_sq}")
    if np.any(cov.eigenvalues <= 0):
        raise DegenerateSignal(f"score covariance eigenvalues must be positive, got {cov.eigenvalues}")
    rho = np.sqrt(1.0 + tau_sq / cov.eigenvalues)
    return BiasFactors(rho=rho, provenance="theory", rotation=cov.eigenvectors)


def _effective_n(fit: PcaFit) -> int:
    return fit.n_obs - 1 if fit.centered else fit.n_obs


def noise_estimate(fit: PcaFit, m: int, d: int) -> Tuple[float, np.ndarray]:
    """
    Plug-in estimates of tau^2 and of lambda_k(W) for k <= m

    tau~^2 averages the n - m trailing sample variances (n - 1 - m for a
    centered fit, whose last variance is zero by construction) and rescales
    by n/d; lambda~_k(W) = n lambda_hat_k / d - tau~^2.

    :param fit: PCA fit of the training data
    :param m: Number of spikes
    :param d: Dimension
    :return: (tau~^2, lambda~(W) as an m-vector)
    """
    n = fit.n_obs
    n_eff = _effective_n(fit)
    if m < 1 or m >= n_eff:
        raise InvalidInput(f"noise estimate needs n - m > 0 trailing eigenvalues, got n={n}, m={m}"
                           + (" (centered)" if fit.centered else ""))
    if m > fit.rank:
        raise RankExceeded(f"requested {m} components, fit has rank {fit.rank}")
    tau_sq = float(fit.variances[m:].sum() / (n_eff - m) * n / d)
    lam = n * fit.variances[:m] / d - tau_sq
    return tau_sq, lam


def rho_asymptotic(fit: PcaFit, m: int, d: int) -> BiasFactors:
    """
    Consistent plug-in estimator rho~_k = sqrt(1 + tau~^2 / lambda~_k(W))

    :param fit: PCA fit of the training data
    :param m: Number of spikes
    :param d: Dimension
    :return: BiasFactors of provenance asymptotic
    """
    tau_sq, lam = noise_estimate(fit, m, d)
    if np.any(lam <= 0):
        raise DegenerateSignal(f"estimated signal eigenvalues not above the noise level: {lam}")
    return BiasFactors(rho=np.sqrt(1.0 + tau_sq / lam), provenance="asymptotic")


def jackknife_ratio(sample_abs: np.ndarray, loo_abs: np.ndarray, variant: int) -> np.ndarray:
    """
    Jackknife ratio of absolute sample scores to leave-one-out prediction scores

    Variant 1 averages sqrt(|w_ij| / |w_i(j)|) over j, skipping any j whose
    leave-one-out score falls below 1e-8 times the median absolute sample
    score of that component. Variant 2 is the square root of the ratio of
    sums and variant 3 the fourth root of the ratio of sums of squares.

    :param sample_abs: m x n absolute sample scores
    :param loo_abs: m x n absolute leave-one-out prediction scores
    :param variant: 1, 2 or 3
    :return: m-vector of factors
    """
    sample_abs = np.abs(np.asarray(sample_abs, dtype=np.float64))
    loo_abs = np.abs(np.asarray(loo_abs, dtype=np.float64))
    if sample_abs.shape != loo_abs.shape or sample_abs.ndim != 2:
        raise InvalidInput(f"score shapes differ: {sample_abs.shape} vs {loo_abs.shape}")

    if variant == 1:
        rho = np.empty(sample_abs.shape[0])
        for i in range(sample_abs.shape[0]):
            delta = JACKKNIFE_DELTA * np.median(sample_abs[i])
            usable = loo_abs[i] > delta
            if not np.any(usable):
                raise DegenerateScore(f"all leave-one-out scores of component {i + 1} are near zero")
            if not np.all(usable):
                logger.debug(f"Jackknife component {i + 1}: excluded {int(np.sum(~usable))} observations")
            rho[i] = np.mean(np.sqrt(sample_abs[i, usable] / loo_abs[i, usable]))
        return rho
    if variant == 2:
        numerator, denominator, power = sample_abs.sum(axis=1), loo_abs.sum(axis=1), 0.5
    elif variant == 3:
        numerator, denominator, power = (sample_abs ** 2).sum(axis=1), (loo_abs ** 2).sum(axis=1), 0.25
    else:
        raise InvalidInput(f"jackknife variant must be 1, 2 or 3, got {variant}")
    if np.any(denominator <= 0):
        raise DegenerateScore("leave-one-out scores are all zero")
    return (numerator / denominator) ** power


def rho_jackknife(fit: PcaFit, loo: Sequence[PcaFit], X, m: int, variant: int) -> BiasFactors:
    """
    Jackknife estimator of the bias-adjustment factors

    :param fit: Full-data PCA fit
    :param loo: Leave-one-out refits of the same data
    :param X: d x n training data
    :param m: Number of components
    :param variant: 1, 2 or 3
    :return: BiasFactors of provenance jackknife<variant>
    """
    if m > fit.rank:
        raise RankExceeded(f"requested {m} components, fit has rank {fit.rank}")
    rho = jackknife_ratio(fit.sample_scores[:m], loo_prediction_scores(loo, X, m), variant)
    if np.any(rho < 1):
        logger.debug(f"Jackknife variant {variant} undershoots 1: {rho}")
    return BiasFactors(rho=rho, provenance=f"jackknife{variant}")


def rho_lzw(fit: PcaFit, m: int, d: int) -> BiasFactors:
    """
    Random-matrix shrinkage factor for out-of-sample scores

    Sample eigenvalues in noise units, l_hat = lambda_hat / tau~^2, are mapped
    back to the population spike l through l_hat = l + gamma l / (l - 1) with
    gamma = d / n; the factor is sqrt((l + gamma - 1) / (l - 1)).

    :param fit: PCA fit of the training data
    :param m: Number of spikes
    :param d: Dimension
    :return: BiasFactors of provenance lzw
    """
    tau_sq, _ = noise_estimate(fit, m, d)
    if tau_sq <= 0:
        return BiasFactors(rho=np.ones(m), provenance="lzw")
    gamma = d / _effective_n(fit)
    ell_hat = fit.variances[:m] / tau_sq
    if np.any(ell_hat <= (1.0 + np.sqrt(gamma)) ** 2):
        raise DegenerateSignal(f"sample eigenvalues {ell_hat} below the detection edge "
                               f"{(1.0 + np.sqrt(gamma)) ** 2:.6g}")
    b = ell_hat + 1.0 - gamma
    ell = (b + np.sqrt(b * b - 4.0 * ell_hat)) / 2.0
    if np.any(ell <= 1):
        raise DegenerateSignal(f"recovered population spikes {ell} do not exceed 1")
    return BiasFactors(rho=np.sqrt((ell + gamma - 1.0) / (ell - 1.0)), provenance="lzw")


def estimate_factors(fit: PcaFit, X, m: int, d: int, provenance: str,
                     loo: Optional[Sequence[PcaFit]] = None, threads: int = 1) -> BiasFactors:
    """
    Dispatch to one of the data-side estimators

    :param fit: Full-data PCA fit
    :param X: d x n training data (needed by the jackknife)
    :param m: Number of components
    :param d: Dimension
    :param provenance: asymptotic, jackknife1..3 or lzw
    :param loo: Precomputed leave-one-out refits
    :param threads: Worker threads for leave-one-out refits
    :return: BiasFactors
    """
    if provenance == "asymptotic":
        return rho_asymptotic(fit, m, d)
    if provenance == "lzw":
        return rho_lzw(fit, m, d)
    if provenance in ("jackknife1", "jackknife2", "jackknife3"):
        if loo is None:
            loo = loo_fits(X, m, fit.centered, threads=threads, full=fit)
        return rho_jackknife(fit, loo, X, m, int(provenance[-1]))
    raise InvalidInput(f"unknown estimator '{provenance}', expected one of {DATA_ESTIMATORS}")


def adjust(scores: ScoreMatrix, factors: BiasFactors) -> ScoreMatrix:
    """
    Bias-adjust scores: sample rows divided by rho, prediction rows multiplied

    :param scores: Sample or prediction scores
    :param factors: Bias factors with one rho per row
    :return: ScoreMatrix of kind adjusted-sample or adjusted-prediction
    """
    if scores.comps != factors.m:
        raise InvalidInput(f"scores have {scores.comps} components, factors have {factors.m}")
    if scores.kind == "sample":
        return ScoreMatrix(values=scores.values / factors.rho[:, None], kind="adjusted-sample")
    if scores.kind == "prediction":
        return ScoreMatrix(values=scores.values * factors.rho[:, None], kind="adjusted-prediction")
    raise InvalidKind(f"cannot adjust scores of kind '{scores.kind}'")


def theory_limits(oracle: OracleTruth, cov: ScoreCov,
                  population_eigs: Optional[Sequence[float]] = None) -> TheoryLimits:
    """
    Finite-d values of the large-d limits used as test oracles

    With R the eigenvectors of W (column k is v_k):
    corr_limits[k, j]      = R[j, k] sqrt(lambda_k / sum_l R[j, l]^2 lambda_l)  (sample scores)
    pred_corr_limits[k, j] = R[j, k] sigma_j / sqrt(sum_l R[l, k]^2 sigma_l^2)  (prediction scores)
    xi_k is defined by corr_limits[k, k]^2 = 1 / (1 + xi_k).

    :param oracle: Population truth
    :param cov: Score covariance of the (possibly centered) scaled true scores
    :param population_eigs: All d population eigenvalues (defaults to the oracle's)
    :return: TheoryLimits
    """
    lam_pop = np.asarray(oracle.population_eigs if population_eigs is None else population_eigs,
                         dtype=np.float64)
    m = cov.eigenvalues.shape[0]
    d = lam_pop.shape[0]
    tau_sq = float(oracle.tau_sq)
    lam = cov.eigenvalues
    R = cov.eigenvectors
    sigma_sq = np.asarray(oracle.sigma_sq, dtype=np.float64)

    # row j: sum_l R[j, l]^2 lambda_l = W[j, j]
    weighted = (R ** 2) @ lam
    corr = np.empty((m, m))
    pred_corr = np.empty((m, m))
    spread = (R ** 2).T @ sigma_sq
    for k in range(m):
        corr[k] = R[:, k] * np.sqrt(lam[k] / weighted)
        pred_corr[k] = R[:, k] * np.sqrt(sigma_sq) / np.sqrt(spread[k])
    corr = np.clip(corr, -1.0, 1.0)
    pred_corr = np.clip(pred_corr, -1.0, 1.0)

    diag_sq = np.diag(corr) ** 2
    with np.errstate(divide="ignore"):
        xi = np.where(diag_sq > 0, 1.0 / np.where(diag_sq > 0, diag_sq, 1.0) - 1.0, np.inf)

    upsilon_sq = float(np.sum(lam_pop[m:] ** 2) / d)
    rho = np.sqrt(1.0 + tau_sq / lam) if np.all(lam > 0) else np.full(m, np.inf)
    return TheoryLimits(
        tau_sq=tau_sq,
        upsilon_sq=upsilon_sq,
        corr_limits=corr,
        pred_corr_limits=pred_corr,
        eps_var=upsilon_sq / (lam + tau_sq),
        eps_var_noise=upsilon_sq / tau_sq if tau_sq > 0 else np.inf,
        inner_prod_limits=np.diag(R) / rho,
        eigval_limits=lam + tau_sq,
        noise_eigval_limit=tau_sq,
        xi=xi,
    )


def eigen_inflation(sigma_sq: Sequence[float], tau_sq: float, n: int) -> np.ndarray:
    """
    First-order inflation E(lambda_hat_i / lambda_i) of the spike variances

    1 + (sum_{j != i} sigma_j^2 / (sigma_i^2 - sigma_j^2) + tau^2 / sigma_i^2) / n

    :param sigma_sq: Distinct spike variances
    :param tau_sq: Noise level
    :param n: Sample size
    :return: m-vector of inflation factors
    """
    sigma_sq = np.asarray(sigma_sq, dtype=np.float64)
    if sigma_sq.ndim != 1 or sigma_sq.size == 0 or np.any(sigma_sq <= 0):
        raise InvalidInput("sigma_sq must be a non-empty vector of positive values")
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    gaps = sigma_sq[:, None] - sigma_sq[None, :]
    off = ~np.eye(sigma_sq.size, dtype=bool)
    if np.any(np.abs(gaps[off]) <= 1e-12 * sigma_sq.max()):
        raise DegenerateSpectrum(f"spike variances must be distinct, got {sigma_sq}")
    safe = np.where(off, gaps, 1.0)
    cross = np.sum(np.where(off, sigma_sq[None, :] / safe, 0.0), axis=1)
    return 1.0 + (cross + tau_sq / sigma_sq) / n


def epsilon_decomposition(fit: PcaFit, oracle: OracleTruth, X_new) -> np.ndarray:
    """
    Residual of prediction scores after removing the spike part

    eps_k* = w_hat_k* - sum_{i <= m} w_i* (u_hat_k^T u_i) for every fitted k.
    Both score sets are taken relative to the fit's column mean when the fit
    is centered and to the population mean otherwise.

    :param fit: PCA fit
    :param oracle: Population truth of the same model
    :param X_new: d x n_new data
    :return: rank x n_new array
    """
    X_new = np.asarray(X_new, dtype=np.float64)
    shift = fit.col_mean if fit.centered else oracle.mean
    Xc = X_new - shift[:, None]
    overlap = fit.directions.T @ oracle.directions
    return fit.directions.T @ Xc - overlap @ (oracle.directions.T @ Xc)


def align_rotation(R: np.ndarray, W1: ScoreMatrix, W1_hat: ScoreMatrix) -> np.ndarray:
    """
    Flip columns of R so that R^T W1 agrees in sign with W1_hat row by row

    :param R: m x m orthogonal matrix
    :param W1: m x n scaled true scores
    :param W1_hat: m x n scaled estimated scores
    :return: Sign-adjusted copy of R
    """
    rotated = R.T @ W1.values
    signs = np.where(np.sum(rotated * W1_hat.values, axis=1) < 0, -1.0, 1.0)
    return R * signs[None, :]


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle arccos(R[0, 0]) in radians, defined for m = 2"""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (2, 2):
        raise InvalidInput(f"rotation angle is defined for 2 x 2 matrices, got {R.shape}")
    return float(np.arccos(np.clip(R[0, 0], -1.0, 1.0)))
