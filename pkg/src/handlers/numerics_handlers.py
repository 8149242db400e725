"""
Numerics Handlers - dense matrix primitives sized for HDLSS data

Thin SVD through the min(d, n) Gram matrix, small symmetric
eigendecompositions with a deterministic sign/tie convention, and seeded
random streams.
"""
import logging
from typing import Optional

import numpy as np
import scipy.linalg

from ..states.errors import InvalidInput
from ..states.models import DataMatrix, SeededRng, SymEig, ThinSvd, check_data_matrix

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "numpy.random.PCG64/SeedSequence"
SYMMETRY_TOL = 1e-12
# eigenvalues of a Gram matrix below this fraction (times max(d, n)) of the
# largest one are treated as zero singular values
RANK_TOL = 10 * np.finfo(np.float64).eps


def rng_algorithm_id() -> str:
    """
    Identifier of the random number algorithm, pinned into output metadata

    :return: Algorithm name with the numpy version
    """
    return f"{RNG_ALGORITHM} numpy-{np.__version__}"


def derive_seed(master_seed: int, rep_index: int) -> int:
    """
    Derive the 64-bit seed of one repetition from the master seed

    :param master_seed: Non-negative master seed
    :param rep_index: Repetition index (0-based)
    :return: Seed for the repetition's dataset
    """
    if master_seed < 0 or rep_index < 0:
        raise InvalidInput("master seed and repetition index must be non-negative")
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(rep_index),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """
    Flip columns so that each column's largest-magnitude entry is positive

    Ties go to the lowest index (np.argmax returns the first maximum).

    :param vectors: Matrix whose columns are sign-ambiguous vectors
    :return: Array of +1/-1 signs that were applied, one per column
    """
    if vectors.size == 0:
        return np.ones(vectors.shape[1] if vectors.ndim == 2 else 0)
    peaks = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[peaks, np.arange(vectors.shape[1])] < 0, -1.0, 1.0)
    vectors *= signs
    return signs


def sym_eig(A, k: Optional[int] = None) -> SymEig:
    """
    Top-k eigenpairs of a symmetric matrix, in descending order

    Equal eigenvalues are ordered by the index of each eigenvector's largest
    entry, independent of the solver's order within the tie. For diagonal
    input this is the original index order.

    :param A: Square symmetric matrix
    :param k: Number of eigenpairs (default: all)
    :return: SymEig with k values and k orthonormal column vectors
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise InvalidInput(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")
    dim = A.shape[0]
    if k is None:
        k = dim
    if k < 1 or k > dim:
        raise InvalidInput(f"k must lie in 1..{dim}, got {k}")

    norm = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > SYMMETRY_TOL * max(norm, np.finfo(np.float64).tiny):
        raise InvalidInput("matrix is not symmetric within tolerance")

    values, vectors = scipy.linalg.eigh((A + A.T) / 2.0)
    fix_signs(vectors)
    peaks = np.argmax(np.abs(vectors), axis=0)
    order = np.lexsort((peaks, -values))[:k]
    return SymEig(values=values[order], vectors=np.ascontiguousarray(vectors[:, order]))


def gram_svd(X: DataMatrix, gram: np.ndarray, col_shift: Optional[np.ndarray] = None,
             keep: Optional[int] = None) -> ThinSvd:
    """
    Thin SVD of (X - col_shift 1^T) from its n x n Gram matrix

    Zero singular values are truncated, so the returned rank may be smaller
    than n.

    :param X: d x n data (uncentered)
    :param gram: Gram matrix of the shifted data, n x n
    :param col_shift: d-vector subtracted from every column, or None
    :param keep: Only recover the leading keep triplets
    :return: ThinSvd of the shifted data
    """
    d, n = X.shape
    eig = sym_eig(gram)
    sig2 = np.clip(eig.values, 0.0, None)
    top = sig2[0] if sig2.size else 0.0
    rank = int(np.sum(sig2 > RANK_TOL * max(d, n) * top)) if top > 0 else 0
    if keep is not None:
        rank = min(rank, keep)

    right = eig.vectors[:, :rank]
    singular = np.sqrt(sig2[:rank])
    left = X @ right
    if col_shift is not None:
        left -= np.outer(col_shift, right.sum(axis=0))
    left /= singular
    return ThinSvd(left=left, singular=singular, right=right)


def thin_svd(X) -> ThinSvd:
    """
    Thin SVD of a d x n matrix through its min(d, n)-sized Gram matrix

    Right vectors follow the sign convention of fix_signs; left vectors are
    recovered as X v / sigma (or right vectors as X^T u / sigma when d < n).

    :param X: d x n finite matrix
    :return: ThinSvd with r = rank singular triplets
    """
    X = check_data_matrix(X)
    d, n = X.shape
    if d >= n:
        return gram_svd(X, X.T @ X)

    # wide input: decompose the d x d Gram matrix and flip to the right side
    eig = sym_eig(X @ X.T)
    sig2 = np.clip(eig.values, 0.0, None)
    top = sig2[0]
    rank = int(np.sum(sig2 > RANK_TOL * max(d, n) * top)) if top > 0 else 0
    left = eig.vectors[:, :rank].copy()
    singular = np.sqrt(sig2[:rank])
    right = (X.T @ left) / singular
    signs = fix_signs(right)
    left *= signs
    return ThinSvd(left=left, singular=singular, right=right)


def sample_gaussian(rng: SeededRng, rows: int, cols: int) -> DataMatrix:
    """
    Draw a rows x cols matrix of i.i.d. standard normal entries

    :param rng: Seeded stream; draws advance it
    :param rows: Number of rows (>= 1)
    :param cols: Number of columns (>= 1)
    :return: float64 matrix
    """
    if rows < 1 or cols < 1:
        raise InvalidInput(f"rows and cols must be >= 1, got {rows} x {cols}")
    return rng.generator.standard_normal((rows, cols))


def random_orthogonal(rng: SeededRng, k: int) -> np.ndarray:
    """
    Haar-distributed k x k orthogonal matrix

    :param rng: Seeded stream
    :param k: Matrix size
    :return: Orthogonal matrix
    """
    Z = sample_gaussian(rng, k, k)
    Q, R = np.linalg.qr(Z)
    Q *= np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q
