"""Cosine K-means baseline: spherical K-means with centroids re-projected onto the unit sphere."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from ticlust.base.config import EM_CONFIG, KMEANS_CONFIG
from ticlust.base.errors import DataError
from ticlust.protocol import AssignmentPath, FeatureSequence

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class SphericalModel:
    """
    Result of cosine K-means.

    Attributes:
        centroids: k x d matrix of unit-norm rows.
        labels: Final assignment of every row.
        objective: Sum over rows of the cosine distance to the assigned centroid.
        objective_trace: Objective after every centroid update.
        iterations: Number of assignment/update rounds performed.
    """

    centroids: np.ndarray
    labels: AssignmentPath
    objective: float
    objective_trace: List[float] = field(default_factory=list)
    iterations: int = 0

    def __post_init__(self):
        centroids = np.array(self.centroids, dtype=float, copy=True)
        norms = np.linalg.norm(centroids, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise DataError("centroids must have unit norm")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)


def _unit_rows(features: Union[FeatureSequence, np.ndarray]) -> np.ndarray:
    data = features.data if isinstance(features, FeatureSequence) else np.asarray(features, dtype=float)
    norms = np.linalg.norm(data, axis=1)
    zero = np.flatnonzero(~(norms > 0))
    if len(zero):
        raise DataError("zero-norm row cannot be clustered by cosine distance", row=int(zero[0]))
    off = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
    if len(off):
        raise DataError(f"row is not unit-norm (norm {norms[off[0]]:.6g}); length-normalize first", row=int(off[0]))
    # Exact renormalization keeps centroid updates on the sphere to machine precision.
    return data / norms[:, None]


class CosineKMeans:
    """
    Spherical K-means under the cosine distance 1 - <x, c>.

    Seeding follows k-means++ with cosine distance as the sampling weight, drawn from a
    PCG64 generator seeded by `seed`.
    """

    def __init__(
        self,
        n_clusters: int,
        seed: int = EM_CONFIG['seed'],
        max_iter: int = KMEANS_CONFIG['max_iter'],
    ):
        if n_clusters < 1:
            raise DataError(f"cluster count must be positive, got {n_clusters}")
        if max_iter < 1:
            raise DataError(f"max_iter must be positive, got {max_iter}")
        self.n_clusters = n_clusters
        self.seed = seed
        self.max_iter = max_iter

    def _seed_centroids(self, data: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        T = data.shape[0]
        chosen = [int(rng.integers(T))]
        dist = 1.0 - data @ data[chosen[0]]
        for _ in range(1, self.n_clusters):
            weights = np.clip(dist, 0.0, None)
            weights[chosen] = 0.0
            total = weights.sum()
            if total > 0:
                nxt = int(rng.choice(T, p=weights / total))
            else:
                remaining = np.setdiff1d(np.arange(T), chosen)
                nxt = int(rng.choice(remaining))
            chosen.append(nxt)
            dist = np.minimum(dist, 1.0 - data @ data[nxt])
        return data[chosen].copy()

    @staticmethod
    def _fill_empty(labels: np.ndarray, sims: np.ndarray, k: int) -> np.ndarray:
        """Give every empty cluster the row farthest from its own centroid."""
        labels = labels.copy()
        for cluster in range(k):
            counts = np.bincount(labels, minlength=k)
            if counts[cluster]:
                continue
            own = 1.0 - sims[np.arange(labels.shape[0]), labels]
            own[counts[labels] < 2] = -np.inf
            row = int(np.argmax(own))
            logger.debug(f"Reseeding empty cluster {cluster} with row {row}")
            labels[row] = cluster
        return labels

    @staticmethod
    def _update(data: np.ndarray, labels: np.ndarray, previous: np.ndarray) -> np.ndarray:
        centroids = previous.copy()
        for cluster in range(previous.shape[0]):
            members = data[labels == cluster]
            if not len(members):
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                centroids[cluster] = mean / norm
        return centroids

    def fit(self, features: Union[FeatureSequence, np.ndarray]) -> SphericalModel:
        data = _unit_rows(features)
        T = data.shape[0]
        k = self.n_clusters
        if T < k:
            raise DataError(f"cannot form {k} clusters from {T} rows")

        rng = np.random.Generator(np.random.PCG64(self.seed))
        centroids = self._seed_centroids(data, rng)
        labels: Optional[np.ndarray] = None
        trace: List[float] = []

        for iteration in range(1, self.max_iter + 1):
            sims = data @ centroids.T
            new_labels = self._fill_empty(np.argmax(sims, axis=1), sims, k)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            centroids = self._update(data, labels, centroids)
            trace.append(float(np.sum(1.0 - np.einsum("ij,ij->i", data, centroids[labels]))))
        else:
            logger.info(f"Cosine K-means reached max_iter={self.max_iter} before labels stabilized")

        objective = trace[-1]
        logger.debug(f"Cosine K-means finished after {len(trace)} updates, objective {objective:.6f}")
        return SphericalModel(
            centroids=centroids,
            labels=AssignmentPath(labels=labels, k=k),
            objective=objective,
            objective_trace=trace,
            iterations=len(trace),
        )

    def fit_predict(self, features: Union[FeatureSequence, np.ndarray]) -> AssignmentPath:
        return self.fit(features).labels


def cosine_kmeans(
    features: Union[FeatureSequence, np.ndarray],
    k: int,
    seed: int = EM_CONFIG['seed'],
    max_iter: int = KMEANS_CONFIG['max_iter'],
) -> SphericalModel:
    """
    Cluster unit-norm rows into k groups by cosine distance.

    Args:
        features: Length-normalized sequence (every row unit-norm).
        k: Number of clusters, 1 <= k <= T.
        seed: Seed of the k-means++ draws.
        max_iter: Cap on assignment/update rounds.

    Returns:
        SphericalModel with unit-norm centroids and a non-increasing objective trace.
    """
    return CosineKMeans(n_clusters=k, seed=seed, max_iter=max_iter).fit(features)
