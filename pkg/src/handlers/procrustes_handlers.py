"""
Procrustes Handlers - best-fitting diagonal scale and orthogonal rotation

Solves min over positive diagonal S and orthogonal R of
||W1_hat - S R^T W1||_F by alternating a rotation step and a closed-form
scale step.
"""
import logging

import numpy as np
from scipy.linalg import orthogonal_procrustes

from ..states.errors import DegenerateInput, InvalidInput
from ..states.models import ProcrustesFit, ScoreMatrix
from .bias_handlers import rotation_angle

logger = logging.getLogger(__name__)

SCALE_FLOOR = 1e-12
RANK_TOL = 1e-12
# slack on the squared objective, relative to ||W1_hat||_F^2
MONOTONE_SLACK = 1e-12
EXACT_FIT = 1e-28


def _rotation_step(W1: np.ndarray, W1_hat: np.ndarray, scale: np.ndarray, R: np.ndarray) -> np.ndarray:
    # majorize ||W1_hat - S A||^2 at A0 = R^T W1 with curvature max(s^2); with
    # S proportional to I this is the closed-form Procrustes rotation
    A0 = R.T @ W1
    curvature = float(np.max(scale ** 2))
    target = 2.0 * curvature * A0 + 2.0 * scale[:, None] * (W1_hat - scale[:, None] * A0)
    rotation, _ = orthogonal_procrustes(W1.T, target.T)
    return rotation


def _scale_step(W1: np.ndarray, W1_hat: np.ndarray, R: np.ndarray):
    A = R.T @ W1
    scale = np.sum(W1_hat * A, axis=1) / np.sum(A * A, axis=1)
    # a negative optimum is absorbed by flipping the rotation column
    signs = np.where(scale < 0, -1.0, 1.0)
    return np.maximum(np.abs(scale), SCALE_FLOOR), R * signs[None, :]


def fit_scale_rotation(W1: ScoreMatrix, W1_hat: ScoreMatrix, tol: float = 1e-10,
                       max_iter: int = 1000) -> ProcrustesFit:
    """
    Fit W1_hat ~ S R^T W1 by alternating minimization

    Starts from S = I. Stops when the relative change of the objective drops
    below tol, when the fit is exact to round-off, or after max_iter
    iterations.

    :param W1: m x n scaled true scores
    :param W1_hat: m x n scaled estimated scores
    :param tol: Relative objective change at which to stop
    :param max_iter: Iteration cap
    :return: ProcrustesFit with per-iteration objective history
    """
    W = np.asarray(W1.values, dtype=np.float64)
    W_hat = np.asarray(W1_hat.values, dtype=np.float64)
    if W.shape != W_hat.shape:
        raise InvalidInput(f"score shapes differ: {W.shape} vs {W_hat.shape}")
    m, n = W.shape
    if m >= n:
        raise InvalidInput(f"Procrustes fit needs m < n, got m={m}, n={n}")
    singular = np.linalg.svd(W, compute_uv=False)
    if singular[-1] <= RANK_TOL * max(singular[0], np.finfo(np.float64).tiny):
        raise DegenerateInput(f"true score matrix is rank deficient (singular values {singular})")

    target_norm = float(np.sum(W_hat ** 2))
    scale = np.ones(m)
    R = np.eye(m)
    previous = None
    history = []
    iters = 0
    for iters in range(1, max_iter + 1):
        R = _rotation_step(W, W_hat, scale, R)
        scale, R = _scale_step(W, W_hat, R)
        objective = float(np.sum((W_hat - scale[:, None] * (R.T @ W)) ** 2))
        if previous is not None and objective > previous + MONOTONE_SLACK * target_norm:
            raise DegenerateInput(f"Procrustes objective increased at iteration {iters}: "
                                  f"{previous:.6g} -> {objective:.6g}")
        history.append(np.sqrt(objective))
        if objective <= EXACT_FIT * target_norm:
            break
        if previous is not None and abs(previous - objective) <= tol * max(previous, np.finfo(np.float64).tiny):
            break
        previous = objective
    else:
        logger.warning(f"Procrustes fit stopped at max_iter={max_iter} without converging")

    theta = rotation_angle(R) if m == 2 else None
    logger.debug(f"Procrustes fit: m={m}, iters={iters}, objective={history[-1]:.6g}")
    return ProcrustesFit(scale=scale, rotation=R, objective=history[-1], iters=iters,
                         theta=theta, history=tuple(history))
