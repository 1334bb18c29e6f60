"""End-to-end pipelines behind the command-line front end."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from ticlust.base.config import KMEANS_CONFIG, PREPROCESS_CONFIG
from ticlust.base.cosine_kmeans import cosine_kmeans
from ticlust.base.data_retrieval import (
    load_features,
    load_timeline_rttm,
    save_json,
    save_models,
    write_timeline_rttm,
)
from ticlust.base.errors import ConfigError
from ticlust.base.preprocessing import preprocess
from ticlust.base.scoring import (
    DerBreakdown,
    clustering_accuracy,
    labels_to_timeline,
    relative_der_reduction,
    score_der,
    timeline_to_labels,
)
from ticlust.base.synthetic import SynthSpec, write_synthetic
from ticlust.base.tic_clustering import EmResult, run_em
from ticlust.protocol import FeatureSequence, Timeline
from ticlust.utils.config import RunConfig

logger = logging.getLogger(__name__)

BASELINE_METHODS = ("cosine-kmeans",)


def score_against(reference: Timeline, hypothesis: Timeline, extents) -> dict:
    """DER breakdown plus frame-level accuracy of a hypothesis over the given frame extents."""
    breakdown = score_der(reference, hypothesis)
    document = breakdown.to_dict()
    document["accuracy"] = clustering_accuracy(
        timeline_to_labels(reference, extents), timeline_to_labels(hypothesis, extents)
    )
    return document


class DiarizationPipeline:
    """Clusters feature sequences into speaker timelines and scores them."""

    def __init__(self, config: RunConfig):
        self.config = config

    def _uri(self, features_path: Optional[str] = None) -> str:
        if self.config.uri:
            return self.config.uri
        if features_path:
            return Path(features_path).name.split(".")[0] or "session"
        return "session"

    def cluster(self, seq: FeatureSequence, uri: str = "session") -> Tuple[EmResult, Timeline]:
        """
        Mean subtraction, optional PCA/length normalization, window stacking, then EM.

        Returns:
            The EM result and the hypothesis timeline over the original frames.
        """
        cfg = self.config
        tic = cfg.tic_config()
        length_norm = cfg.length_norm if cfg.length_norm is not None else PREPROCESS_CONFIG['length_norm_cluster']
        prepared = preprocess(seq, pca_dims=cfg.pca_dims, length_norm=length_norm, window=tic.w)
        result = run_em(prepared, tic)
        timeline = labels_to_timeline(result.path, seq.extents(cfg.unit_duration), tic.w, uri=uri)
        return result, timeline

    def baseline(self, seq: FeatureSequence, method: str = "cosine-kmeans", uri: str = "session") -> Tuple[dict, Timeline]:
        """Cosine K-means on mean-subtracted, length-normalized (optionally PCA-reduced) rows."""
        if method not in BASELINE_METHODS:
            raise ConfigError(f"unsupported baseline method {method!r}; choose from {', '.join(BASELINE_METHODS)}")
        cfg = self.config
        if cfg.k is None:
            raise ConfigError("cluster count k is required")
        length_norm = cfg.length_norm if cfg.length_norm is not None else PREPROCESS_CONFIG['length_norm_baseline']
        if not length_norm:
            logger.warning("Length normalization is always applied for cosine K-means")
        prepared = preprocess(seq, pca_dims=cfg.pca_dims, length_norm=True, window=1)
        model = cosine_kmeans(prepared, cfg.k, seed=cfg.seed, max_iter=KMEANS_CONFIG['max_iter'])
        timeline = labels_to_timeline(model.labels, seq.extents(cfg.unit_duration), uri=uri)
        metrics = {
            "method": method,
            "iterations": model.iterations,
            "objective": model.objective,
            "objective_trace": model.objective_trace,
        }
        return metrics, timeline

    def _finish(self, seq: FeatureSequence, metrics: dict, timeline: Timeline) -> dict:
        cfg = self.config
        if cfg.ref:
            metrics.update(score_against(load_timeline_rttm(cfg.ref), timeline, seq.extents(cfg.unit_duration)))
        if cfg.out_rttm:
            write_timeline_rttm(timeline, cfg.out_rttm)
        if cfg.out_metrics:
            save_json(metrics, cfg.out_metrics)
        return metrics

    def run_cluster(self) -> dict:
        """Load features, cluster, write RTTM/metrics/models as configured."""
        cfg = self.config
        seq = load_features(cfg.features, cfg.times)
        result, timeline = self.cluster(seq, uri=self._uri(cfg.features))
        if cfg.out_models:
            save_models(result.models, cfg.out_models)
        return self._finish(seq, result.to_dict(), timeline)

    def run_baseline(self, method: str) -> dict:
        cfg = self.config
        seq = load_features(cfg.features, cfg.times)
        metrics, timeline = self.baseline(seq, method, uri=self._uri(cfg.features))
        return self._finish(seq, metrics, timeline)

    @staticmethod
    def score(ref_path: str, hyp_path: str) -> DerBreakdown:
        return score_der(load_timeline_rttm(ref_path), load_timeline_rttm(hyp_path))

    def bench(self, spec: SynthSpec, out_dir: str, pca_arms: Sequence[int] = ()) -> dict:
        """
        Synthetic comparison of TIC clustering against cosine K-means.

        Each arm applies one post-processing setting (no PCA, then every requested PCA size) to
        both systems and scores them against the generated reference.
        """
        for dims in pca_arms:
            if not 1 <= dims <= spec.n:
                raise ConfigError(f"PCA arm {dims} must lie in [1, {spec.n}]")
        paths = write_synthetic(spec, out_dir)
        seq = load_features(paths["features"], paths["times"])
        reference = load_timeline_rttm(paths["reference"])
        extents = seq.extents()

        arms: List[Dict] = []
        for dims in [None, *pca_arms]:
            arm = DiarizationPipeline(self.config.model_copy(update={"pca_dims": dims, "k": spec.k}))
            result, tic_timeline = arm.cluster(seq, uri=reference.uri)
            tic = score_against(reference, tic_timeline, extents)
            tic["iterations"] = result.iterations
            _, base_timeline = arm.baseline(seq, uri=reference.uri)
            base = score_against(reference, base_timeline, extents)
            reduction = relative_der_reduction(base["der"], tic["der"]) if base["der"] > 0 else None
            arms.append(
                {
                    "pca_dims": dims,
                    "tic": tic,
                    "cosine_kmeans": base,
                    "relative_der_reduction": reduction,
                }
            )
            logger.info(f"Bench arm pca={dims}: TIC DER {tic['der']:.2%}, cosine K-means DER {base['der']:.2%}")

        document = {"spec": spec.model_dump(), "window": self.config.window, "arms": arms}
        save_json(document, Path(out_dir) / "bench.json")
        return document
