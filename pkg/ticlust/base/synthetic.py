"""Synthetic labelled sequences drawn from K block-Toeplitz Gaussian Markov random fields.

Randomness comes from numpy's PCG64 bit generator: gen_models draws from PCG64(seed) and
gen_sequence from PCG64(seed) jumped once, so the two streams never overlap. Normal
variates use numpy's ziggurat sampler (Generator.standard_normal).
"""

import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ticlust.base.config import SYNTH_CONFIG
from ticlust.base.data_retrieval import load_json, save_json, write_features, write_timeline_rttm
from ticlust.base.errors import ConfigError
from ticlust.base.scoring import labels_to_timeline
from ticlust.protocol import AssignmentPath, ClusterModel, FeatureSequence, Segment, Timeline, toeplitz_class_index

logger = logging.getLogger(__name__)

SYNTH_STEM = "synthetic"
# Off-diagonal precision magnitudes are drawn from this range.
EDGE_RANGE = (0.3, 1.0)
MEAN_DRAWS_PER_SCALE = 100


class SynthSpec(BaseModel):
    """Parameters of a synthetic benchmark session."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    k: int = Field(default=SYNTH_CONFIG['k'], ge=1)
    n: int = Field(default=SYNTH_CONFIG['n'], ge=1)
    w: int = Field(default=SYNTH_CONFIG['w'], ge=1)
    t_len: int = Field(default=SYNTH_CONFIG['t_len'], ge=1)
    stay_prob: float = Field(default=SYNTH_CONFIG['stay_prob'], gt=0, le=1)
    sparsity: float = Field(default=SYNTH_CONFIG['sparsity'], ge=0, le=1)
    separation: float = Field(default=SYNTH_CONFIG['separation'], gt=0)
    seed: int = Field(default=SYNTH_CONFIG['seed'], ge=0, lt=2**64)
    unit_duration: float = Field(default=1.0, gt=0)

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "SynthSpec":
        try:
            document = load_json(path)
        except json.JSONDecodeError as e:
            raise ConfigError(f"synthetic spec {path} is not valid JSON: {e}") from None
        if not isinstance(document, dict):
            raise ConfigError(f"synthetic spec {path} must be a JSON object")
        try:
            return cls.model_validate(document)
        except ValidationError as e:
            raise ConfigError(f"invalid synthetic spec {path}: {e}") from None


def _draw_means(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Frame means with pairwise distance >= separation; the draw scale grows after repeated rejections."""
    means: List[np.ndarray] = []
    scale = spec.separation
    failures = 0
    while len(means) < spec.k:
        candidate = scale * rng.standard_normal(spec.n)
        if all(np.linalg.norm(candidate - m) >= spec.separation for m in means):
            means.append(candidate)
            continue
        failures += 1
        if failures % MEAN_DRAWS_PER_SCALE == 0:
            scale *= 1.5
    return np.array(means)


def _draw_precision(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    ids = toeplitz_class_index(spec.n, spec.w)
    n_classes = int(ids.max()) + 1
    diag_classes = np.unique(np.diag(ids))
    off = np.setdiff1d(np.arange(n_classes), diag_classes)

    values = np.zeros(n_classes)
    keep = rng.random(off.shape[0]) >= spec.sparsity
    magnitude = rng.uniform(*EDGE_RANGE, size=off.shape[0])
    sign = rng.choice([-1.0, 1.0], size=off.shape[0])
    values[off] = keep * magnitude * sign

    theta = values[ids]
    # one shared diagonal value keeps the matrix block-Toeplitz; strict dominance makes it SPD
    values[diag_classes] = np.abs(theta).sum(axis=1).max() + 1.0
    return values[ids]


def gen_models(spec: SynthSpec) -> List[ClusterModel]:
    """
    K cluster models with sparse SPD block-Toeplitz precisions and well separated means.

    Model means repeat the frame mean over the w frames of a window.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    means = _draw_means(spec, rng)
    models = [
        ClusterModel(mean=np.tile(means[i], spec.w), theta=_draw_precision(spec, rng), w=spec.w)
        for i in range(spec.k)
    ]
    logger.info(f"Generated {spec.k} models of dimension {spec.n * spec.w} (sparsity {spec.sparsity})")
    return models


def _draw_labels(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    labels = np.empty(spec.t_len, dtype=np.int64)
    labels[0] = rng.integers(spec.k)
    for t in range(1, spec.t_len):
        prev = labels[t - 1]
        if spec.k == 1 or rng.random() < spec.stay_prob:
            labels[t] = prev
            continue
        other = rng.integers(spec.k - 1)
        labels[t] = other if other < prev else other + 1
    return labels


@lru_cache(maxsize=256)
def _conditional(theta_bytes: bytes, d: int, n: int, lags: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gain and Cholesky factor of frame `lags` given frames 0..lags-1 under cov = inv(theta)."""
    theta = np.frombuffer(theta_bytes).reshape(d, d)
    cov = np.linalg.inv(theta)[: (lags + 1) * n, : (lags + 1) * n]
    cov = 0.5 * (cov + cov.T)
    past, cur = slice(0, lags * n), slice(lags * n, (lags + 1) * n)
    if lags == 0:
        return np.zeros((n, 0)), np.linalg.cholesky(cov[cur, cur])
    gain = np.linalg.solve(cov[past, past], cov[past, cur]).T
    cond = cov[cur, cur] - gain @ cov[past, cur]
    return gain, np.linalg.cholesky(0.5 * (cond + cond.T))


def gen_sequence(spec: SynthSpec, models: Sequence[ClusterModel]) -> Tuple[FeatureSequence, np.ndarray]:
    """
    Sample a labelled frame sequence.

    Labels follow a stay/switch chain (switches go uniformly to the other labels). Each frame is
    drawn from its label's model conditioned on the preceding frames of the same run, up to
    w - 1 of them; with w = 1 frames are independent draws with covariance inv(theta).

    Returns:
        The T x n sequence with unit-duration extents, and the true label of every frame.
    """
    if len(models) != spec.k:
        raise ConfigError(f"spec asks for {spec.k} clusters, {len(models)} models given")
    rng = np.random.Generator(np.random.PCG64(spec.seed).jumped())
    labels = _draw_labels(spec, rng)
    n, w = spec.n, spec.w

    frames = np.empty((spec.t_len, n))
    run_start = 0
    for t in range(spec.t_len):
        if t and labels[t] != labels[t - 1]:
            run_start = t
        model = models[labels[t]]
        lags = min(t - run_start, w - 1)
        gain, chol = _conditional(model.theta.tobytes(), model.dim, n, lags)
        mean = model.mean[:n].copy()
        if lags:
            past = frames[t - lags : t].reshape(-1) - model.mean[: lags * n]
            mean += gain @ past
        frames[t] = mean + chol @ rng.standard_normal(n)

    starts = np.arange(spec.t_len, dtype=float) * spec.unit_duration
    times = np.column_stack([starts, starts + spec.unit_duration])
    return FeatureSequence(data=frames, times=times), labels


def reference_timeline(labels: np.ndarray, times: np.ndarray, uri: str = SYNTH_STEM) -> Timeline:
    """Ground-truth timeline with speaker-style labels spk0, spk1, ..."""
    path = AssignmentPath(labels=labels, k=int(np.max(labels)) + 1)
    merged = labels_to_timeline(path, times, uri=uri)
    return Timeline(segments=[Segment(s, e, f"spk{label}") for s, e, label in merged], uri=uri)


def write_synthetic(spec: SynthSpec, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Generate a session and write features, times sidecar, reference RTTM and the resolved spec.

    Returns:
        Mapping of artifact kind to written path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    models = gen_models(spec)
    seq, labels = gen_sequence(spec, models)

    paths = {
        "features": out_dir / f"{SYNTH_STEM}.csv",
        "times": out_dir / f"{SYNTH_STEM}.times.csv",
        "reference": out_dir / f"{SYNTH_STEM}.ref.rttm",
        "spec": out_dir / f"{SYNTH_STEM}.spec.json",
    }
    write_features(seq, paths["features"], paths["times"])
    write_timeline_rttm(reference_timeline(labels, seq.times), paths["reference"])
    save_json(spec.model_dump(), paths["spec"])
    logger.info(f"Wrote synthetic session ({spec.t_len} frames, {spec.k} clusters) to {out_dir}")
    return paths
