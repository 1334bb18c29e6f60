"""Command-line front end: cluster, baseline, score, synth and bench."""

import argparse
import logging
import sys
from typing import List, Optional

from rich.console import Console
from rich.table import Table

from ticlust import __version__
from ticlust.base.data_retrieval import save_json
from ticlust.base.errors import ConfigError, DataError
from ticlust.base.pipeline import BASELINE_METHODS, DiarizationPipeline
from ticlust.base.synthetic import SynthSpec, write_synthetic
from ticlust.utils.config import RunConfig, add_args, add_logging_args, add_preprocess_args, resolve_config
from ticlust.utils.logging import close_events_logger, setup_events_logger, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _start(cfg: RunConfig) -> None:
    setup_logging(cfg.log_level)
    if cfg.events_dir:
        setup_events_logger(cfg.events_dir)


def _require(cfg: RunConfig, *fields: str) -> None:
    missing = [name for name in fields if getattr(cfg, name) is None]
    if missing:
        raise ConfigError(f"missing required setting(s): {', '.join(missing)}")


def _io_fields(args: argparse.Namespace, *names: str) -> dict:
    return {name: getattr(args, name, None) for name in names}


def cmd_cluster(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, _io_fields(args, "features", "times", "ref", "out_rttm", "out_metrics", "out_models", "uri"))
    _start(cfg)
    _require(cfg, "features", "k")
    metrics = DiarizationPipeline(cfg).run_cluster()
    logger.info(f"Clustering finished after {metrics['iterations']} iterations (converged={metrics['converged']})")
    return EXIT_OK


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = resolve_config(args, _io_fields(args, "features", "times", "ref", "out_rttm", "out_metrics", "uri"))
    _start(cfg)
    _require(cfg, "features", "k")
    DiarizationPipeline(cfg).run_baseline(args.method)
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    setup_logging(getattr(args, "logging.level"))
    breakdown = DiarizationPipeline.score(args.ref, args.hyp)
    if args.out:
        save_json(breakdown.to_dict(), args.out)
    print(f"DER: {breakdown.der * 100:.2f}%")
    return EXIT_OK


def _load_spec(path: Optional[str]) -> SynthSpec:
    return SynthSpec.from_json(path) if path else SynthSpec()


def cmd_synth(args: argparse.Namespace) -> int:
    setup_logging(getattr(args, "logging.level"))
    spec = _load_spec(args.spec)
    write_synthetic(spec, args.out_dir)
    return EXIT_OK


def _parse_arms(text: Optional[str]) -> List[int]:
    if not text:
        return []
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"--pca-dims expects comma-separated integers, got {text!r}") from None


def _percent(value: Optional[float]) -> str:
    return "-" if value is None else f"{value * 100:.2f}%"


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    _start(cfg)
    spec = _load_spec(args.spec)
    report = DiarizationPipeline(cfg).bench(spec, args.out_dir, _parse_arms(args.pca_dims))

    table = Table(title=f"Synthetic benchmark (K={spec.k}, n={spec.n}, T={spec.t_len}, w={cfg.window})")
    table.add_column("PCA")
    table.add_column("TIC DER", justify="right")
    table.add_column("TIC acc", justify="right")
    table.add_column("cos-KM DER", justify="right")
    table.add_column("cos-KM acc", justify="right")
    table.add_column("rel. reduction", justify="right")
    for arm in report["arms"]:
        table.add_row(
            "none" if arm["pca_dims"] is None else str(arm["pca_dims"]),
            _percent(arm["tic"]["der"]),
            f"{arm['tic']['accuracy']:.3f}",
            _percent(arm["cosine_kmeans"]["der"]),
            f"{arm['cosine_kmeans']['accuracy']:.3f}",
            _percent(arm["relative_der_reduction"]),
        )
    Console().print(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ticlust", description="Toeplitz inverse covariance sequence clustering.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    cluster = sub.add_parser("cluster", help="Cluster a feature sequence into a speaker timeline.")
    cluster.add_argument("--features", type=str, default=None, help="Headerless feature CSV.")
    cluster.add_argument("--times", type=str, default=None, help="Optional start,end sidecar CSV.")
    cluster.add_argument("--out-rttm", dest="out_rttm", type=str, default=None, help="Hypothesis RTTM output.")
    cluster.add_argument("--out-metrics", dest="out_metrics", type=str, default=None, help="Metrics JSON output.")
    cluster.add_argument("--out-models", dest="out_models", type=str, default=None, help="Fitted models (.npz).")
    cluster.add_argument("--ref", type=str, default=None, help="Reference RTTM to score against.")
    cluster.add_argument("--uri", type=str, default=None, help="Session id (default: features file stem).")
    add_args(cluster)
    add_preprocess_args(cluster)
    add_logging_args(cluster)
    cluster.set_defaults(handler=cmd_cluster)

    baseline = sub.add_parser("baseline", help="Run the cosine K-means baseline.")
    baseline.add_argument("--features", type=str, default=None, help="Headerless feature CSV.")
    baseline.add_argument("--times", type=str, default=None, help="Optional start,end sidecar CSV.")
    baseline.add_argument("--method", type=str, default=BASELINE_METHODS[0], help="Baseline method.")
    baseline.add_argument("--out-rttm", dest="out_rttm", type=str, default=None, help="Hypothesis RTTM output.")
    baseline.add_argument("--out-metrics", dest="out_metrics", type=str, default=None, help="Metrics JSON output.")
    baseline.add_argument("--ref", type=str, default=None, help="Reference RTTM to score against.")
    baseline.add_argument("--uri", type=str, default=None, help="Session id (default: features file stem).")
    add_args(baseline)
    add_preprocess_args(baseline)
    add_logging_args(baseline)
    baseline.set_defaults(handler=cmd_baseline)

    score = sub.add_parser("score", help="Score a hypothesis RTTM against a reference RTTM.")
    score.add_argument("--ref", type=str, required=True, help="Reference RTTM.")
    score.add_argument("--hyp", type=str, required=True, help="Hypothesis RTTM.")
    score.add_argument("--out", type=str, default=None, help="DER breakdown JSON output.")
    add_logging_args(score)
    score.set_defaults(handler=cmd_score)

    synth = sub.add_parser("synth", help="Generate a synthetic labelled session.")
    synth.add_argument("--spec", type=str, default=None, help="Synthetic spec JSON (defaults when omitted).")
    synth.add_argument("--out-dir", dest="out_dir", type=str, required=True, help="Output directory.")
    add_logging_args(synth)
    synth.set_defaults(handler=cmd_synth)

    bench = sub.add_parser("bench", help="Compare TIC clustering and cosine K-means on synthetic data.")
    bench.add_argument("--spec", type=str, default=None, help="Synthetic spec JSON (defaults when omitted).")
    bench.add_argument("--out-dir", dest="out_dir", type=str, required=True, help="Output directory.")
    bench.add_argument("--pca-dims", dest="pca_dims", type=str, default=None, help="Comma-separated PCA arms.")
    add_args(bench)
    add_logging_args(bench)
    bench.set_defaults(handler=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK

    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as e:
        logger.error(f"Data error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    finally:
        close_events_logger()


if __name__ == "__main__":
    sys.exit(main())
