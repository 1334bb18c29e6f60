"""Post-processing chain applied to feature sequences before clustering.

Order is fixed: mean subtraction -> optional PCA -> optional length normalization ->
optional window stacking.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ticlust.base.errors import DataError
from ticlust.protocol import FeatureSequence

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PcaModel:
    """
    Principal axes of a sequence.

    Attributes:
        mean: Column means removed before projection (n-vector).
        components: d x n matrix with orthonormal rows.
        explained_variance: Variance along each component, non-increasing.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=float) - self.mean) @ self.components.T

    def inverse_transform(self, projected: np.ndarray) -> np.ndarray:
        return np.asarray(projected, dtype=float) @ self.components + self.mean


def mean_subtract(seq: FeatureSequence) -> FeatureSequence:
    """Remove the session-level mean from every row."""
    data = seq.data - seq.data.mean(axis=0, keepdims=True)
    return seq.with_data(data)


def pca_fit_transform(seq: FeatureSequence, d: int) -> Tuple[PcaModel, FeatureSequence]:
    """
    Fit PCA on the sample covariance (divisor T-1) and project onto the top d components.

    Each component is sign-normalized so that its largest-magnitude entry is positive
    (ties go to the lowest index).

    Args:
        seq: Input sequence, T x n.
        d: Number of components, 1 <= d <= min(T-1, n).

    Returns:
        The fitted PcaModel and the T x d projected sequence.
    """
    T, n = seq.data.shape
    if not 1 <= d <= min(T - 1, n):
        raise DataError(f"PCA dimension {d} out of range [1, {min(T - 1, n)}]")

    mean = seq.data.mean(axis=0)
    centered = seq.data - mean
    cov = centered.T @ centered / (T - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1][:d]
    components = eigvecs[:, order].T.copy()
    explained = np.clip(eigvals[order], 0.0, None)

    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(d), pivots])
    signs[signs == 0] = 1.0
    components *= signs[:, None]

    model = PcaModel(mean=mean, components=components, explained_variance=explained)
    logger.info(
        f"PCA kept {d}/{n} components, {explained.sum() / max(np.clip(eigvals, 0, None).sum(), 1e-300):.1%} of variance"
    )
    return model, seq.with_data(centered @ components.T)


def length_normalize(seq: FeatureSequence) -> FeatureSequence:
    """Scale every row to unit Euclidean norm."""
    norms = np.linalg.norm(seq.data, axis=1)
    zero = np.flatnonzero(~(norms > 0))
    if len(zero):
        raise DataError("cannot length-normalize a zero-norm row", row=int(zero[0]))
    return seq.with_data(seq.data / norms[:, None])


def stack_windows(seq: FeatureSequence, w: int) -> FeatureSequence:
    """
    Concatenate each row with its w-1 successors.

    Output row t is [X_t, X_{t+1}, ..., X_{t+w-1}]; it keeps the time extent of frame t.
    """
    T, n = seq.data.shape
    if not 1 <= w <= T:
        raise DataError(f"window length {w} must lie in [1, {T}]")
    if w == 1:
        return seq
    # (T-w+1, n, w) -> (T-w+1, w, n) so that frames are laid out block by block
    windows = sliding_window_view(seq.data, w, axis=0).transpose(0, 2, 1).reshape(T - w + 1, w * n)
    times = seq.times[: T - w + 1] if seq.times is not None else None
    return FeatureSequence(data=windows, times=times)


def preprocess(
    seq: FeatureSequence,
    pca_dims: Optional[int] = None,
    length_norm: bool = False,
    window: int = 1,
) -> FeatureSequence:
    """Run the post-processing chain in its fixed order."""
    out = mean_subtract(seq)
    if pca_dims is not None:
        _, out = pca_fit_transform(out, pca_dims)
    if length_norm:
        out = length_normalize(out)
    out = stack_windows(out, window)
    logger.info(
        f"Preprocessed {seq.n_rows}x{seq.dim} -> {out.n_rows}x{out.dim} "
        f"(pca={pca_dims}, length_norm={length_norm}, window={window})"
    )
    return out
