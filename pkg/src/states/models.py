"""
Data models for the HDLSS score bias toolkit.

Matrices are plain float64 numpy arrays; the dataclasses here bundle them with
the metadata each operation needs. All models are immutable after
construction except SeededRng, whose generator advances as it is drawn from.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import InvalidInput, InvalidKind

# d x n matrix, one observation per column
DataMatrix = np.ndarray

SCORE_KINDS = ("true", "sample", "prediction", "adjusted-sample", "adjusted-prediction")
PROVENANCES = ("theory", "asymptotic", "jackknife1", "jackknife2", "jackknife3", "lzw", "procrustes")
ESTIMATORS = ("theory", "best", "asymptotic", "jackknife1", "jackknife2", "jackknife3", "lzw")


def check_data_matrix(values, name: str = "X") -> DataMatrix:
    """
    Validate and convert a data matrix

    :param values: Anything convertible to a 2-D float array
    :param name: Name used in error messages
    :return: float64 array with at least one row and one column
    """
    X = np.asarray(values, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise InvalidInput(f"{name} must have at least one row and one column")
    if not np.all(np.isfinite(X)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return X


@dataclass(frozen=True, eq=False)
class ThinSvd:
    """Thin singular value decomposition X = left diag(singular) right^T"""
    left: np.ndarray
    singular: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.singular.shape[0])


@dataclass(frozen=True, eq=False)
class SymEig:
    """Top eigenpairs of a symmetric matrix, values descending"""
    values: np.ndarray
    vectors: np.ndarray


class SeededRng:
    """
    Reproducible random stream identified by (master_seed, stream_id)

    Backed by numpy's PCG64 seeded through SeedSequence with the stream id as
    spawn key. One thread per stream.
    """
    def __init__(self, master_seed: int, stream_id: int = 0):
        if master_seed < 0 or stream_id < 0:
            raise InvalidInput("seeds and stream ids must be non-negative")
        if master_seed >= 2 ** 64 or stream_id >= 2 ** 64:
            raise InvalidInput("seeds and stream ids must fit in 64 bits")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        sequence = np.random.SeedSequence(entropy=self.master_seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def __repr__(self):
        return f"SeededRng(master_seed={self.master_seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class SpikeSpec:
    """Spike model: m spikes lambda_i = sigma_i^2 d over a slowly decaying noise spectrum"""
    d: int
    n: int
    m: int = 2
    sigma_sq: Tuple[float, ...] = (0.02, 0.01)
    beta: float = 0.3
    seed: int = 0
    rotate_frame: bool = False


@dataclass(frozen=True)
class MixtureSpec:
    """Three-group Gaussian mixture with means drawn from {-a, 0, a}"""
    d: int
    n: int
    a: float = 0.15
    probs: Tuple[float, float, float] = (0.5, 0.3, 0.2)
    seed: int = 0

    @property
    def m(self) -> int:
        return 2


@dataclass(frozen=True, eq=False)
class OracleTruth:
    """
    Population truth attached to a simulated dataset

    true_scores are w_ij = u_i^T (X_j - mean) for the first m components and
    scaled_scores = true_scores / sqrt(d).
    """
    model: str
    directions: np.ndarray
    sigma_sq: np.ndarray
    tau_sq: float
    true_scores: np.ndarray
    scaled_scores: np.ndarray
    population_eigs: np.ndarray
    mean: np.ndarray
    labels: Optional[np.ndarray] = None
    frame_rotation: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return int(self.directions.shape[0])

    @property
    def m(self) -> int:
        return int(self.directions.shape[1])

    def direction(self, k: int) -> np.ndarray:
        """
        Population direction u_k (1-based)

        :param k: Component index, 1 <= k <= d
        :return: d-vector
        """
        if k < 1 or k > self.d:
            raise InvalidInput(f"component {k} outside 1..{self.d}")
        if k <= self.m:
            return self.directions[:, k - 1]
        if self.model != "spike":
            raise InvalidInput(f"direction {k} > m is undefined for the {self.model} model")
        u = np.zeros(self.d)
        q = 0 if self.frame_rotation is None else self.frame_rotation.shape[0]
        if k <= q:
            u[:q] = self.frame_rotation[:, k - 1]
        else:
            u[k - 1] = 1.0
        return u

    def project(self, X: DataMatrix, ks) -> np.ndarray:
        """
        True scores u_k^T (X - mean) for the requested components

        :param X: d x n data
        :param ks: Iterable of 1-based component indices
        :return: len(ks) x n array
        """
        centered = X - self.mean[:, None]
        return np.vstack([self.direction(k) @ centered for k in ks])


@dataclass(frozen=True, eq=False)
class TestTruth:
    """True scores and labels of the test columns"""
    true_scores: np.ndarray
    scaled_scores: np.ndarray
    labels: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training and test data drawn from one population"""
    train: DataMatrix
    test: DataMatrix
    oracle: OracleTruth
    oracle_test: TestTruth


@dataclass(frozen=True, eq=False)
class PcaFit:
    """Standard PCA of a d x n data matrix"""
    directions: np.ndarray
    variances: np.ndarray
    right_vectors: np.ndarray
    sample_scores: np.ndarray
    centered: bool
    col_mean: np.ndarray

    @property
    def d(self) -> int:
        return int(self.directions.shape[0])

    @property
    def n_obs(self) -> int:
        return int(self.right_vectors.shape[0])

    @property
    def rank(self) -> int:
        return int(self.variances.shape[0])


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """m x cols principal component scores tagged with their kind"""
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise InvalidKind(f"unknown score kind '{self.kind}'")
        if self.values.ndim != 2 or not np.all(np.isfinite(self.values)):
            raise InvalidInput("scores must be a finite 2-D array")

    @property
    def comps(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True, eq=False)
class ScoreCov:
    """Scaled m x m second moment W1 W1^T of the true scores with its eigenpairs"""
    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True, eq=False)
class BiasFactors:
    """Per-component scaling factors rho with an optional rotation"""
    rho: np.ndarray
    provenance: str
    rotation: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InvalidInput(f"unknown provenance '{self.provenance}'")
        if not np.all(np.isfinite(self.rho)) or np.any(self.rho <= 0):
            raise InvalidInput("rho must be finite and positive")

    @property
    def m(self) -> int:
        return int(self.rho.shape[0])


@dataclass(frozen=True, eq=False)
class TheoryLimits:
    """Finite-d values of the asymptotic limits used as test oracles"""
    tau_sq: float
    upsilon_sq: float
    corr_limits: np.ndarray
    pred_corr_limits: np.ndarray
    eps_var: np.ndarray
    eps_var_noise: float
    inner_prod_limits: np.ndarray
    eigval_limits: np.ndarray
    noise_eigval_limit: float
    xi: np.ndarray


@dataclass(frozen=True, eq=False)
class ProcrustesFit:
    """Best-fitting diagonal scale and orthogonal rotation"""
    scale: np.ndarray
    rotation: np.ndarray
    objective: float
    iters: int
    theta: Optional[float] = None
    history: Tuple[float, ...] = ()


@dataclass(frozen=True)
class ExperimentSpec:
    """Monte-Carlo experiment configuration"""
    model: str = "spike"
    d: int = 5000
    n: int = 50
    n_test: int = 20
    m: int = 2
    reps: int = 100
    master_seed: int = 0
    center: Optional[bool] = None
    estimators: Tuple[str, ...] = ("theory", "best", "asymptotic", "jackknife1", "lzw")
    sigma_sq: Tuple[float, ...] = (0.02, 0.01)
    beta: float = 0.3
    a: float = 0.15
    probs: Tuple[float, float, float] = (0.5, 0.3, 0.2)
    rotate_frame: bool = False
    threads: int = 1

    @property
    def centered(self) -> bool:
        """Mixture data is centered unless configured otherwise"""
        if self.center is None:
            return self.model == "mixture"
        return bool(self.center)

    def label(self) -> str:
        if self.model == "spike":
            return f"spike_beta{self.beta:g}_d{self.d}_n{self.n}"
        return f"mixture_a{self.a:g}_d{self.d}_n{self.n}"


@dataclass
class ExperimentReport:
    """Per-repetition rows; aggregates are always recomputed from them"""
    name: str
    columns: List[str]
    rows: List[Dict[str, object]] = field(default_factory=list)
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def excluded(self) -> int:
        return sum(1 for row in self.rows if row.get("status") != "ok")

    def ok_rows(self) -> List[Dict[str, object]]:
        return [row for row in self.rows if row.get("status") == "ok"]

    def column(self, name: str) -> np.ndarray:
        """Values of one column over the non-excluded rows"""
        return np.array([float(row[name]) for row in self.ok_rows() if row.get(name) is not None])

    def aggregate(self) -> Dict[str, Tuple[float, float, int]]:
        """
        Mean, standard deviation (ddof=1) and count per numeric column

        :return: Mapping column -> (mean, sd, count)
        """
        summary = {}
        for name in self.columns:
            if name in ("rep", "seed", "status", "reason"):
                continue
            values = [row.get(name) for row in self.ok_rows()]
            values = [float(v) for v in values if isinstance(v, (int, float, np.floating, np.integer))
                      and not isinstance(v, bool)]
            if not values:
                continue
            arr = np.array(values)
            sd = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
            summary[name] = (float(arr.mean()), sd, int(arr.size))
        return summary


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """One-vs-rest ridge classifier on standardized scores"""
    weights: np.ndarray
    classes: np.ndarray
    center: np.ndarray
    scale: np.ndarray


@dataclass
class ScorePairTable:
    """Long-format score pairs plus per-repetition RMS distances"""
    columns: List[str]
    rows: List[Dict[str, object]] = field(default_factory=list)
    rms: List[Dict[str, object]] = field(default_factory=list)
