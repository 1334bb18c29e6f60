# ticlust/protocol.py
"""Domain types shared by every ticlust module.

All array-carrying types copy their inputs and mark them read-only, so instances can be
shared across threads (the M-step solves clusters concurrently).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, List, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from ticlust.base.errors import DataError


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@lru_cache(maxsize=64)
def toeplitz_class_index(n: int, w: int) -> np.ndarray:
    """
    Label every entry of an (n*w)x(n*w) matrix with its block-Toeplitz equivalence class.

    Two entries share a class when they sit at the same position inside blocks with the same
    offset (c - r), or are mirror images of such entries. A symmetric block-Toeplitz matrix is
    exactly a matrix that is constant on every class.

    Returns:
        Read-only integer matrix of class ids in [0, number_of_classes).
    """
    d = n * w
    block, inner = np.divmod(np.arange(d), n)
    delta = block[None, :] - block[:, None]
    i = inner[:, None]
    j = inner[None, :]
    first = np.where(delta > 0, i, np.where(delta < 0, j, np.minimum(i, j)))
    second = np.where(delta > 0, j, np.where(delta < 0, i, np.maximum(i, j)))
    key = (np.abs(delta) * n + first) * n + second
    _, ids = np.unique(key.ravel(), return_inverse=True)
    ids = ids.reshape(d, d)
    ids.setflags(write=False)
    return ids


def toeplitz_projection(matrix: np.ndarray, n: int, w: int) -> np.ndarray:
    """Closest symmetric block-Toeplitz matrix in Frobenius norm (class-wise averaging)."""
    ids = toeplitz_class_index(n, w)
    sums = np.bincount(ids.ravel(), weights=np.asarray(matrix, dtype=float).ravel())
    counts = np.bincount(ids.ravel())
    return (sums / counts)[ids]


@dataclass(frozen=True)
class FeatureSequence:
    """T time-ordered feature vectors of dimension n, with optional per-row (start, end) extents."""

    data: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DataError(f"feature matrix must be T x n with T, n >= 1, got shape {data.shape}")
        bad = np.argwhere(~np.isfinite(data))
        if len(bad):
            raise DataError("non-finite feature value", row=int(bad[0][0]))
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

        if self.times is not None:
            times = np.array(self.times, dtype=float, copy=True)
            if times.shape != (data.shape[0], 2):
                raise DataError(f"times must be {data.shape[0]} x 2, got shape {times.shape}")
            if not np.all(np.isfinite(times)):
                raise DataError("non-finite time value")
            for t in range(times.shape[0]):
                if not times[t, 1] > times[t, 0]:
                    raise DataError("segment end must be greater than start", row=t)
                if t > 0 and times[t, 0] < times[t - 1, 1]:
                    raise DataError("time extents must be sorted and non-overlapping", row=t)
            times.setflags(write=False)
            object.__setattr__(self, "times", times)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def extents(self, unit_duration: float = 1.0) -> np.ndarray:
        """Per-row (start, end) pairs; rows without a times sidecar last `unit_duration` seconds."""
        if self.times is not None:
            return self.times
        starts = np.arange(self.n_rows, dtype=float) * unit_duration
        return np.column_stack([starts, starts + unit_duration])

    def with_data(self, data: np.ndarray) -> "FeatureSequence":
        """Same time axis, new features (row count must match)."""
        return FeatureSequence(data=data, times=self.times)


@dataclass(frozen=True)
class ClusterModel:
    """
    One cluster: mean vector and SPD block-Toeplitz precision matrix over windows of w frames.

    Args:
        mean: Vector of dimension n*w.
        theta: (n*w)x(n*w) precision matrix. It is symmetrized on construction.
        w: Window length; theta is a w x w grid of n x n blocks.
        converged: False when the solver producing theta stopped at its iteration cap.
    """

    mean: np.ndarray
    theta: np.ndarray
    w: int = 1
    converged: bool = True
    logdet_theta: float = field(init=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, copy=True).reshape(-1)
        theta = np.array(self.theta, dtype=float, copy=True)
        d = mean.shape[0]
        if theta.shape != (d, d):
            raise DataError(f"theta must be {d} x {d} to match the mean, got {theta.shape}")
        if self.w < 1 or d % self.w:
            raise DataError(f"dimension {d} is not a multiple of window length {self.w}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(theta))):
            raise DataError("cluster model contains non-finite values")
        theta = 0.5 * (theta + theta.T)

        n = d // self.w
        scale = max(1.0, float(np.max(np.abs(theta))))
        deviation = float(np.max(np.abs(theta - toeplitz_projection(theta, n, self.w))))
        if deviation > 1e-8 * scale:
            raise DataError(f"theta is not block-Toeplitz (max deviation {deviation:.3e})")
        try:
            chol = np.linalg.cholesky(theta)
        except np.linalg.LinAlgError:
            raise DataError("theta is not positive definite") from None

        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "theta", _frozen(theta))
        object.__setattr__(self, "logdet_theta", float(2.0 * np.sum(np.log(np.diag(chol)))))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def block_size(self) -> int:
        return self.dim // self.w


@dataclass(frozen=True)
class AssignmentPath:
    """Length-T sequence of cluster indices in [0, k)."""

    labels: np.ndarray
    k: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] < 1:
            raise DataError("assignment path must be a non-empty 1-D sequence")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise DataError("assignment labels must be integers")
        labels = labels.astype(np.int64, copy=True)
        if self.k < 1 or labels.min() < 0 or labels.max() >= self.k:
            raise DataError(f"assignment labels must lie in [0, {self.k})")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def __iter__(self) -> Iterator[int]:
        return iter(self.labels.tolist())

    @property
    def counts(self) -> np.ndarray:
        """|C_i| for every cluster i."""
        return np.bincount(self.labels, minlength=self.k)

    @property
    def switches(self) -> int:
        return int(np.count_nonzero(self.labels[1:] != self.labels[:-1]))

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    def same_as(self, other: "AssignmentPath") -> bool:
        return self.k == other.k and np.array_equal(self.labels, other.labels)


class Segment(NamedTuple):
    start: float
    end: float
    label: str


@dataclass(frozen=True)
class Timeline:
    """Speaker segments of one session, sorted by start time."""

    segments: Sequence[Segment]
    uri: Optional[str] = None

    def __post_init__(self):
        segments = tuple(Segment(float(s), float(e), str(label)) for s, e, label in self.segments)
        for i, seg in enumerate(segments):
            if not (math.isfinite(seg.start) and math.isfinite(seg.end)):
                raise DataError("non-finite segment boundary", row=i)
            if not seg.end > seg.start:
                raise DataError(f"segment end {seg.end} must be greater than start {seg.start}", row=i)
            if i and seg.start < segments[i - 1].start:
                raise DataError("segments must be sorted by start time", row=i)
        object.__setattr__(self, "segments", segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    @property
    def labels(self) -> List[str]:
        """Distinct labels in order of first appearance."""
        return list(dict.fromkeys(seg.label for seg in self.segments))

    @property
    def total_duration(self) -> float:
        return float(sum(seg.end - seg.start for seg in self.segments))


class TicConfig(BaseModel):
    """Hyperparameters of TIC clustering (EM, E-step switching penalty, M-step ADMM)."""

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    k: int = Field(ge=1)
    beta: float = Field(default=1.0, ge=0)
    lambda_: Union[float, List[List[float]]] = Field(default=0.1, alias="lambda")
    w: int = Field(default=1, ge=1)
    rho: float = Field(default=1.0, gt=0)
    admm_tol_abs: float = Field(default=1e-6, gt=0)
    admm_tol_rel: float = Field(default=1e-5, ge=0)
    admm_max_iter: int = Field(default=1000, ge=1)
    em_max_iter: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    min_cluster_size: Optional[int] = Field(default=None, ge=1)
    num_workers: int = Field(default=1, ge=1)
    max_reseeds: int = Field(default=3, ge=0)

    @field_validator("lambda_")
    @classmethod
    def _check_lambda(cls, value):
        if isinstance(value, (int, float)):
            if not value >= 0:
                raise ValueError("lambda must be non-negative")
            return float(value)
        matrix = np.asarray(value, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("lambda matrix must be square")
        if np.any(matrix < 0) or not np.all(np.isfinite(matrix)):
            raise ValueError("lambda matrix must be finite and entrywise non-negative")
        if not np.array_equal(matrix, matrix.T):
            raise ValueError("lambda matrix must be symmetric")
        return matrix.tolist()

    def lambda_matrix(self, dim: int) -> np.ndarray:
        """
        Expand lambda to a dim x dim penalty matrix.

        A scalar fills the off-diagonal and leaves the diagonal unpenalized.
        """
        return expand_lambda(self.lambda_, dim)

    def resolved_min_cluster_size(self, dim: int) -> int:
        return self.min_cluster_size if self.min_cluster_size is not None else dim + 1


def expand_lambda(value: Union[float, Sequence[Sequence[float]], np.ndarray], dim: int) -> np.ndarray:
    if np.isscalar(value):
        lam = np.full((dim, dim), float(value))
        np.fill_diagonal(lam, 0.0)
        return lam
    lam = np.array(value, dtype=float, copy=True)
    if lam.shape != (dim, dim):
        raise DataError(f"lambda matrix must be {dim} x {dim}, got {lam.shape}")
    if np.any(lam < 0) or not np.allclose(lam, lam.T, rtol=0, atol=0):
        raise DataError("lambda matrix must be symmetric and entrywise non-negative")
    return lam
