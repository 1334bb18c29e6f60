"""E-step: assign feature vectors to clusters under a switching penalty.

Cost of a path p over an NLL matrix:

    cost(p) = sum_t nll[t, p_t] + beta * #{t > 0 : p_t != p_{t-1}}

Among equal-cost paths both the dynamic program and the exhaustive oracle return the
same one: walking forward, staying in the current cluster wins a tie, then the lowest
cluster index.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Union

import numpy as np

from ticlust.base.errors import DataError
from ticlust.protocol import AssignmentPath

logger = logging.getLogger(__name__)

# Costs closer than this are treated as equal when breaking ties.
TIE_TOL = 1e-9
BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class NllMatrix:
    """Entry (t, j) is the negative log-likelihood of row t under cluster j."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"NLL matrix must be T x K with T, K >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("NLL matrix contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


NllLike = Union[NllMatrix, np.ndarray, list]


def _as_nll(nll: NllLike) -> NllMatrix:
    return nll if isinstance(nll, NllMatrix) else NllMatrix(values=nll)


def _check_beta(beta: float) -> float:
    beta = float(beta)
    if not beta >= 0:
        raise DataError(f"switching penalty must be non-negative, got {beta}")
    return beta


def path_cost(nll: NllLike, beta: float, path: Union[AssignmentPath, np.ndarray, list]) -> float:
    """Total NLL of the path plus beta per label switch."""
    values = _as_nll(nll).values
    labels = path.labels if isinstance(path, AssignmentPath) else np.asarray(path, dtype=np.int64)
    if labels.shape != (values.shape[0],):
        raise DataError(f"path length {labels.shape[0]} does not match {values.shape[0]} rows")
    switches = np.count_nonzero(labels[1:] != labels[:-1])
    return float(values[np.arange(values.shape[0]), labels].sum() + float(beta) * switches)


def assign_clusters(nll: NllLike, beta: float) -> AssignmentPath:
    """
    Minimum-cost assignment path in O(T*K).

    A backward pass computes future[t, j], the best cost of rows t..T-1 given row t is in
    cluster j. The forward pass then follows the tie-break rule using those costs.
    """
    values = _as_nll(nll).values
    beta = _check_beta(beta)
    T, K = values.shape

    future = np.empty_like(values)
    future[-1] = values[-1]
    for t in range(T - 2, -1, -1):
        nxt = future[t + 1]
        future[t] = values[t] + np.minimum(nxt, nxt.min() + beta)

    labels = np.empty(T, dtype=np.int64)
    first = future[0]
    labels[0] = int(np.flatnonzero(first <= first.min() + TIE_TOL)[0])
    for t in range(1, T):
        prev = labels[t - 1]
        options = future[t] + beta
        options[prev] -= beta
        best = options.min()
        if options[prev] <= best + TIE_TOL:
            labels[t] = prev
        else:
            labels[t] = int(np.flatnonzero(options <= best + TIE_TOL)[0])

    return AssignmentPath(labels=labels, k=K)


def _tie_break_key(path) -> tuple:
    key = []
    for t, label in enumerate(path):
        stays = t > 0 and label == path[t - 1]
        key.append((0 if stays else 1, label))
    return tuple(key)


def brute_force_assign(nll: NllLike, beta: float) -> AssignmentPath:
    """
    Enumerate all K**T paths; returns the same path as assign_clusters.

    Only meant as a reference for small problems.
    """
    values = _as_nll(nll).values
    beta = _check_beta(beta)
    T, K = values.shape
    if K**T > BRUTE_FORCE_LIMIT:
        raise DataError(f"search space K**T = {K}**{T} exceeds {BRUTE_FORCE_LIMIT}")

    paths = np.array(list(itertools.product(range(K), repeat=T)), dtype=np.int64).reshape(-1, T)
    costs = values[np.arange(T), paths].sum(axis=1)
    costs += beta * np.count_nonzero(paths[:, 1:] != paths[:, :-1], axis=1)
    optimal = paths[costs <= costs.min() + TIE_TOL]
    best = min((tuple(p) for p in optimal.tolist()), key=_tie_break_key)
    return AssignmentPath(labels=np.array(best), k=K)


def single_cluster_beta(nll: NllLike) -> float:
    """Smallest beta guaranteed to force a constant path: sum_t (max_j - min_j) nll[t, j]."""
    values = _as_nll(nll).values
    return float(np.sum(values.max(axis=1) - values.min(axis=1)))
