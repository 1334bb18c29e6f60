"""Diarization error rate, clustering accuracy and timeline rendering of assignment paths."""

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from ticlust.base.errors import DataError, ScoringError
from ticlust.protocol import AssignmentPath, Segment, Timeline

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DerBreakdown:
    """
    Scored time components in seconds and the resulting DER.

    der = (alpha_fa + alpha_miss + alpha_err) / alpha_total
    """

    alpha_total: float
    alpha_fa: float
    alpha_miss: float
    alpha_err: float
    mapping: Dict[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.alpha_total > 0:
            raise ScoringError("reference has no scored time")
        for name in ("alpha_fa", "alpha_miss", "alpha_err"):
            if getattr(self, name) < 0:
                raise ScoringError(f"{name} must be non-negative")

    @property
    def der(self) -> float:
        return (self.alpha_fa + self.alpha_miss + self.alpha_err) / self.alpha_total

    def to_dict(self) -> dict:
        document = {"der": self.der}
        document.update({k: v for k, v in asdict(self).items() if k != "mapping"})
        return document


def _coverage(timeline: Timeline, starts: np.ndarray, ends: np.ndarray) -> Tuple[List[str], np.ndarray]:
    """Boolean (intervals x labels) matrix: is the label active over each elementary interval."""
    labels = timeline.labels
    index = {label: i for i, label in enumerate(labels)}
    cover = np.zeros((starts.shape[0], len(labels)), dtype=bool)
    for seg in timeline:
        inside = (starts >= seg.start) & (ends <= seg.end)
        cover[inside, index[seg.label]] = True
    return labels, cover


def score_der(reference: Timeline, hypothesis: Timeline) -> DerBreakdown:
    """
    NIST-style DER without collar or overlap exclusion.

    Reference and hypothesis labels are mapped one-to-one so that the correctly attributed
    time is maximal (Hungarian assignment on the overlap matrix).
    """
    if not len(reference):
        raise ScoringError("reference timeline is empty")
    if reference.uri is not None and hypothesis.uri is not None and reference.uri != hypothesis.uri:
        raise ScoringError(f"reference session {reference.uri!r} does not match hypothesis {hypothesis.uri!r}")

    bounds = np.unique([t for seg in (*reference, *hypothesis) for t in (seg.start, seg.end)])
    starts, ends = bounds[:-1], bounds[1:]
    durations = ends - starts

    ref_labels, ref_cover = _coverage(reference, starts, ends)
    hyp_labels, hyp_cover = _coverage(hypothesis, starts, ends)
    n_ref = ref_cover.sum(axis=1)
    n_hyp = hyp_cover.sum(axis=1)

    total = float(durations @ n_ref)
    miss = float(durations @ np.maximum(n_ref - n_hyp, 0))
    fa = float(durations @ np.maximum(n_hyp - n_ref, 0))

    mapping: Dict[str, str] = {}
    correct = 0.0
    if hyp_labels:
        overlap = (ref_cover.T * durations) @ hyp_cover.astype(float)
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        correct = float(overlap[rows, cols].sum())
        mapping = {hyp_labels[c]: ref_labels[r] for r, c in zip(rows, cols)}
    err = max(float(durations @ np.minimum(n_ref, n_hyp)) - correct, 0.0)

    result = DerBreakdown(alpha_total=total, alpha_fa=fa, alpha_miss=miss, alpha_err=err, mapping=mapping)
    logger.info(f"DER {result.der:.2%} (miss {miss:.2f}s, fa {fa:.2f}s, confusion {err:.2f}s of {total:.2f}s)")
    return result


def labels_to_timeline(
    path: AssignmentPath,
    times: np.ndarray,
    window: int = 1,
    uri: Optional[str] = None,
) -> Timeline:
    """
    Render an assignment path as labelled segments.

    Args:
        path: Labels of the windowed rows (T - window + 1 of them).
        times: (start, end) extents of the T original frames.
        window: Window length used to build the rows; the last window's label also covers the
            final window-1 frames.
        uri: Session id stored on the timeline.

    Returns:
        Timeline whose labels are the cluster indices as strings. Adjacent frames with the same
        label merge into one segment when their extents touch.
    """
    times = np.asarray(times, dtype=float)
    if window < 1:
        raise DataError(f"window length must be positive, got {window}")
    if times.ndim != 2 or times.shape[1] != 2 or times.shape[0] != len(path) + window - 1:
        raise DataError(
            f"{len(path)} labels with window {window} need {len(path) + window - 1} frame extents, "
            f"got {times.shape[0] if times.ndim == 2 else times.shape}"
        )
    labels = np.concatenate([path.labels, np.repeat(path.labels[-1:], window - 1)])

    segments: List[Segment] = []
    start, end, current = times[0, 0], times[0, 1], labels[0]
    for t in range(1, labels.shape[0]):
        if labels[t] == current and times[t, 0] == end:
            end = times[t, 1]
            continue
        segments.append(Segment(start, end, str(current)))
        start, end, current = times[t, 0], times[t, 1], labels[t]
    segments.append(Segment(start, end, str(current)))
    return Timeline(segments=segments, uri=uri)


def timeline_to_labels(timeline: Timeline, times: np.ndarray) -> List[str]:
    """Label of the segment covering each row's midpoint (first such segment on overlap)."""
    times = np.asarray(times, dtype=float)
    mids = times.mean(axis=1)
    labels: List[str] = []
    for row, mid in enumerate(mids):
        for seg in timeline:
            if seg.start <= mid < seg.end:
                labels.append(seg.label)
                break
        else:
            raise ScoringError(f"no segment covers time {mid:.3f}", row=row)
    return labels


def clustering_accuracy(truth: Sequence[Hashable], predicted: Sequence[Hashable]) -> float:
    """Fraction of matching positions under the best one-to-one label mapping."""
    if len(truth) != len(predicted):
        raise DataError(f"label lists differ in length: {len(truth)} vs {len(predicted)}")
    if not len(truth):
        raise DataError("cannot score empty label lists")
    _, truth_idx = np.unique(np.asarray(truth, dtype=object).astype(str), return_inverse=True)
    _, pred_idx = np.unique(np.asarray(predicted, dtype=object).astype(str), return_inverse=True)
    confusion = np.zeros((truth_idx.max() + 1, pred_idx.max() + 1))
    np.add.at(confusion, (truth_idx, pred_idx), 1.0)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum() / len(truth))


def relative_der_reduction(der_baseline: float, der_proposed: float) -> float:
    """(baseline - proposed) / baseline; positive when the proposed system is better."""
    if not der_baseline > 0:
        raise ScoringError("relative reduction is undefined for a zero baseline DER")
    return (der_baseline - der_proposed) / der_baseline
