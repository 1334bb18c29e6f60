"""EM driver for Toeplitz inverse covariance clustering.

Alternates the switching-penalty assignment (E-step) with one Toeplitz graphical lasso per
cluster (M-step) until the assignment path stops changing.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ticlust.base.assignment import NllMatrix, assign_clusters, path_cost
from ticlust.base.cosine_kmeans import cosine_kmeans
from ticlust.base.errors import DataError
from ticlust.base.toeplitz_glasso import (
    cluster_objective,
    empirical_stats,
    nll_matrix,
    solve_toeplitz_glasso,
)
from ticlust.protocol import AssignmentPath, ClusterModel, FeatureSequence, TicConfig, expand_lambda
from ticlust.utils.logging import log_event

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmResult:
    """
    Outcome of run_em.

    Attributes:
        models: One fitted ClusterModel per cluster.
        path: Final assignment of the (windowed) rows.
        objective_trace: Joint objective after initialization and after every iteration.
        iterations: EM iterations performed.
        converged: True when the path was unchanged between the last two iterations.
        reseed_iterations: Iterations whose path was altered by reseed_empty_cluster; the
            objective may rise across these steps.
    """

    models: Tuple[ClusterModel, ...]
    path: AssignmentPath
    objective_trace: List[float]
    iterations: int
    converged: bool
    reseed_iterations: List[int] = field(default_factory=list)

    @property
    def admm_converged(self) -> bool:
        return all(model.converged for model in self.models)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "admm_converged": self.admm_converged,
            "objective_trace": list(self.objective_trace),
            "reseed_iterations": list(self.reseed_iterations),
            "cluster_sizes": self.path.counts.tolist(),
        }


def _contiguous_blocks(T: int, k: int) -> AssignmentPath:
    return AssignmentPath(labels=np.arange(T) * k // T, k=k)


def initialize(features: FeatureSequence, cfg: TicConfig) -> AssignmentPath:
    """
    Initial assignment: cosine K-means on length-normalized rows, seeded by cfg.seed.

    Falls back to k equal contiguous blocks when a row has zero norm or K-means leaves a
    cluster empty.
    """
    T, k = features.n_rows, cfg.k
    if T < k:
        raise DataError(f"cannot form {k} clusters from {T} rows")
    if k == 1:
        return AssignmentPath(labels=np.zeros(T, dtype=np.int64), k=1)

    norms = np.linalg.norm(features.data, axis=1)
    if np.all(norms > 0):
        model = cosine_kmeans(features.data / norms[:, None], k, seed=cfg.seed)
        if np.all(model.labels.counts > 0):
            return model.labels
        logger.warning("Cosine K-means initialization left a cluster empty, using contiguous blocks")
    else:
        logger.warning("Zero-norm rows prevent cosine K-means initialization, using contiguous blocks")
    return _contiguous_blocks(T, k)


def joint_objective(
    features: Union[FeatureSequence, np.ndarray],
    path: AssignmentPath,
    models: Sequence[ClusterModel],
    lam: Union[float, np.ndarray],
    beta: float,
) -> float:
    """Sum of row NLLs along the path + beta * switches + 0.5 * sum_i ||lambda o Theta_i||_1."""
    nll = nll_matrix(features, models)
    lam = expand_lambda(lam, models[0].dim)
    penalty = 0.5 * sum(float(np.sum(np.abs(lam * model.theta))) for model in models)
    return path_cost(nll, beta, path) + penalty


def predict(
    features: Union[FeatureSequence, np.ndarray],
    models: Sequence[ClusterModel],
    beta: float,
) -> AssignmentPath:
    """Assign a (preprocessed, windowed) sequence to already fitted clusters."""
    return assign_clusters(nll_matrix(features, models), beta)


def reseed_empty_cluster(
    path: AssignmentPath,
    nll: Union[NllMatrix, np.ndarray],
    cluster: int,
    min_cluster_size: int = 1,
) -> AssignmentPath:
    """
    Move the worst-explained contiguous run of rows into an under-populated cluster.

    The run has length min(min_cluster_size, T) and maximizes the summed NLL of its rows under
    their current labels (earliest start on ties). Runs that would empty another populated
    cluster are skipped unless no other run exists. Clusters already holding
    min_cluster_size rows are returned unchanged.
    """
    values = nll.values if isinstance(nll, NllMatrix) else np.asarray(nll, dtype=float)
    T, k = values.shape
    if len(path) != T or path.k != k:
        raise DataError(f"path of length {len(path)} over {path.k} clusters does not match NLL shape {values.shape}")
    counts = path.counts
    if counts[cluster] >= min_cluster_size:
        return path

    length = min(min_cluster_size, T)
    labels = path.labels
    row_cost = values[np.arange(T), labels]
    window_cost = np.convolve(row_cost, np.ones(length), mode="valid")

    # per-window label counts from cumulative one-hot sums
    onehot = np.zeros((T + 1, k))
    onehot[np.arange(1, T + 1), labels] = 1.0
    cum = np.cumsum(onehot, axis=0)
    taken = cum[length:] - cum[:-length]
    remaining = counts[None, :] - taken
    others = np.arange(k) != cluster
    keeps_others = np.all((remaining[:, others] >= 1) | (counts[None, others] == 0), axis=1)

    candidates = np.flatnonzero(keeps_others)
    if not len(candidates):
        candidates = np.arange(window_cost.shape[0])
    start = int(candidates[np.argmax(window_cost[candidates])])

    new_labels = labels.copy()
    new_labels[start : start + length] = cluster
    logger.info(f"Reseeded cluster {cluster} with rows {start}..{start + length - 1}")
    return AssignmentPath(labels=new_labels, k=k)


class _MStep:
    """Per-cluster Toeplitz graphical lasso solves with a non-increase guard."""

    def __init__(self, data: np.ndarray, lam: np.ndarray, cfg: TicConfig):
        self.data = data
        self.lam = lam
        self.cfg = cfg

    def _solve(self, members: np.ndarray, previous: Optional[ClusterModel]) -> ClusterModel:
        if not len(members):
            if previous is None:
                raise DataError("cannot fit a model for an empty cluster")
            return previous
        stats = empirical_stats(self.data, members)
        model = solve_toeplitz_glasso(stats, self.lam, self.cfg.w, self.cfg)
        if previous is not None:
            # keep the previous model when the new solve did not improve this cluster's share
            new_obj = cluster_objective(self.data, members, model, self.lam)
            old_obj = cluster_objective(self.data, members, previous, self.lam)
            if old_obj < new_obj:
                logger.debug(f"Kept previous model: {old_obj:.6f} < {new_obj:.6f}")
                return previous
        return model

    def __call__(
        self,
        path: AssignmentPath,
        previous: Optional[Sequence[ClusterModel]] = None,
    ) -> Tuple[ClusterModel, ...]:
        jobs = [
            (path.members(i), previous[i] if previous is not None else None) for i in range(path.k)
        ]
        if self.cfg.num_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.num_workers) as executor:
                return tuple(executor.map(lambda job: self._solve(*job), jobs))
        return tuple(self._solve(*job) for job in jobs)


def run_em(features: FeatureSequence, cfg: TicConfig) -> EmResult:
    """
    Fit K block-Toeplitz Gaussian clusters to a preprocessed (and windowed) sequence.

    Args:
        features: Rows of dimension n*w, already windowed when cfg.w > 1.
        cfg: Hyperparameters; cfg.w must divide the feature dimension.

    Returns:
        EmResult with the final models and path. The objective trace is non-increasing across
        every iteration not listed in reseed_iterations.
    """
    T, d = features.n_rows, features.dim
    k = cfg.k
    if T < k:
        raise DataError(f"cannot form {k} clusters from {T} rows")
    if d % cfg.w:
        raise DataError(f"feature dimension {d} is not a multiple of window length {cfg.w}")

    lam = cfg.lambda_matrix(d)
    min_size = max(1, min(cfg.resolved_min_cluster_size(d), T // k))
    m_step = _MStep(features.data, lam, cfg)
    reseeds = np.zeros(k, dtype=int)

    path = initialize(features, cfg)
    models = m_step(path)
    trace = [joint_objective(features, path, models, lam, cfg.beta)]
    logger.info(f"EM start: T={T}, d={d}, K={k}, w={cfg.w}, objective {trace[0]:.6f}")

    reseed_iterations: List[int] = []
    converged = False
    iteration = 0
    for iteration in range(1, cfg.em_max_iter + 1):
        nll = nll_matrix(features, models)
        new_path = assign_clusters(nll, cfg.beta)

        reseeded = False
        for cluster in range(k):
            if new_path.counts[cluster] >= min_size or reseeds[cluster] >= cfg.max_reseeds:
                continue
            new_path = reseed_empty_cluster(new_path, nll, cluster, min_size)
            reseeds[cluster] += 1
            reseeded = True
        if reseeded:
            reseed_iterations.append(iteration)

        models = m_step(new_path, models)
        objective = joint_objective(features, new_path, models, lam, cfg.beta)
        trace.append(objective)

        log_event(
            f"em_iteration iteration={iteration} objective={objective:.6f} "
            f"switches={new_path.switches} sizes={new_path.counts.tolist()} reseeded={reseeded}"
        )
        logger.debug(f"EM iteration {iteration}: objective {objective:.6f}, switches {new_path.switches}")

        # a reseeded path is not an E-step optimum
        converged = not reseeded and new_path.same_as(path)
        path = new_path
        if converged:
            break

    if converged:
        logger.info(f"EM converged after {iteration} iterations, objective {trace[-1]:.6f}")
    else:
        logger.warning(f"EM stopped at em_max_iter={cfg.em_max_iter} without a stable path")

    return EmResult(
        models=models,
        path=path,
        objective_trace=trace,
        iterations=iteration,
        converged=converged,
        reseed_iterations=reseed_iterations,
    )
