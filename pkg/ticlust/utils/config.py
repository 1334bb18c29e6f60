# The MIT License (MIT)
# Copyright © 2026 ticlust developers

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

import argparse
import json
from typing import List, Optional, Union

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError

from ticlust.base.config import ADMM_CONFIG, EM_CONFIG, LOGGING_CONFIG, PREPROCESS_CONFIG
from ticlust.base.data_retrieval import load_json
from ticlust.base.errors import ConfigError
from ticlust.protocol import TicConfig

# Dotted command-line flags and the RunConfig field each one overrides.
FLAG_FIELDS = {
    "tic.beta": "beta",
    "tic.lambda": "lambda",
    "tic.window": "window",
    "tic.seed": "seed",
    "tic.em_max_iter": "em_max_iter",
    "tic.num_workers": "num_workers",
    "preprocess.pca_dims": "pca_dims",
    "preprocess.length_norm": "length_norm",
    "logging.level": "log_level",
    "logging.events_dir": "events_dir",
}


class RunConfig(BaseModel):
    """
    One command's configuration: TIC hyperparameters, preprocessing switches and I/O paths.

    `length_norm` left unset means the command default (off for clustering, on for the baseline).
    """

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    # clustering
    k: Optional[int] = Field(default=None, ge=1)
    beta: float = Field(default=EM_CONFIG['beta'], ge=0)
    lambda_: Union[float, List[List[float]]] = Field(
        default=EM_CONFIG['lambda'], validation_alias=AliasChoices("lambda", "lambda_"), serialization_alias="lambda"
    )
    window: int = Field(default=EM_CONFIG['window'], ge=1, validation_alias=AliasChoices("window", "w"))
    rho: float = Field(default=ADMM_CONFIG['rho'], gt=0)
    admm_tol_abs: float = Field(default=ADMM_CONFIG['tol_abs'], gt=0)
    admm_tol_rel: float = Field(default=ADMM_CONFIG['tol_rel'], ge=0)
    admm_max_iter: int = Field(default=ADMM_CONFIG['max_iter'], ge=1)
    em_max_iter: int = Field(default=EM_CONFIG['max_iter'], ge=1)
    seed: int = Field(default=EM_CONFIG['seed'], ge=0, lt=2**64)
    min_cluster_size: Optional[int] = Field(default=None, ge=1)
    num_workers: int = Field(default=EM_CONFIG['num_workers'], ge=1)
    max_reseeds: int = Field(default=EM_CONFIG['max_reseeds'], ge=0)

    # preprocessing
    pca_dims: Optional[int] = Field(default=PREPROCESS_CONFIG['pca_dims'], ge=1)
    length_norm: Optional[bool] = None
    unit_duration: float = Field(default=PREPROCESS_CONFIG['unit_duration'], gt=0)

    # I/O
    features: Optional[str] = None
    times: Optional[str] = None
    ref: Optional[str] = None
    out_rttm: Optional[str] = None
    out_metrics: Optional[str] = None
    out_models: Optional[str] = None
    uri: Optional[str] = None

    # logging
    log_level: str = LOGGING_CONFIG['level']
    events_dir: Optional[str] = None

    def tic_config(self) -> TicConfig:
        """Hyperparameters for run_em; k must be set."""
        if self.k is None:
            raise ConfigError("cluster count k is required")
        try:
            return TicConfig(
                k=self.k,
                beta=self.beta,
                lambda_=self.lambda_,
                w=self.window,
                rho=self.rho,
                admm_tol_abs=self.admm_tol_abs,
                admm_tol_rel=self.admm_tol_rel,
                admm_max_iter=self.admm_max_iter,
                em_max_iter=self.em_max_iter,
                seed=self.seed,
                min_cluster_size=self.min_cluster_size,
                num_workers=self.num_workers,
                max_reseeds=self.max_reseeds,
            )
        except ValidationError as e:
            raise ConfigError(f"invalid clustering hyperparameters: {e}") from None


def add_args(parser: argparse.ArgumentParser):
    """
    Adds the config file and clustering hyperparameter arguments to the parser.
    """

    parser.add_argument(
        "--config",
        type=str,
        help="JSON run configuration; flags given on the command line take precedence.",
        default=None,
    )

    parser.add_argument(
        "--k",
        type=int,
        help="Number of clusters.",
        default=None,
    )

    parser.add_argument(
        "--tic.beta",
        type=float,
        help="Switching penalty added for every label change.",
        default=None,
    )

    parser.add_argument(
        "--tic.lambda",
        type=float,
        help="Off-diagonal l1 penalty of the precision matrices.",
        default=None,
    )

    parser.add_argument(
        "--tic.window",
        type=int,
        help="Number of consecutive frames stacked into each modelled window.",
        default=None,
    )

    parser.add_argument(
        "--tic.seed",
        type=int,
        help="Seed of every random draw.",
        default=None,
    )

    parser.add_argument(
        "--tic.em_max_iter",
        type=int,
        help="Maximum number of EM iterations.",
        default=None,
    )

    parser.add_argument(
        "--tic.num_workers",
        type=int,
        help="Threads solving the per-cluster M-step problems.",
        default=None,
    )


def add_preprocess_args(parser: argparse.ArgumentParser):
    """Add post-processing arguments to the parser."""

    parser.add_argument(
        "--preprocess.pca_dims",
        type=int,
        help="Project onto this many principal components (off when omitted).",
        default=None,
    )

    parser.add_argument(
        "--preprocess.length_norm",
        action=argparse.BooleanOptionalAction,
        help="Scale every row to unit norm.",
        default=None,
    )


def add_logging_args(parser: argparse.ArgumentParser):
    """Add logging arguments to the parser."""

    parser.add_argument(
        "--logging.level",
        type=str,
        help="Console logging level.",
        default=None,
    )

    parser.add_argument(
        "--logging.events_dir",
        type=str,
        help="Directory of the rotating events.log (no events file when omitted).",
        default=None,
    )


def resolve_config(args: argparse.Namespace, io_fields: Optional[dict] = None) -> RunConfig:
    """
    Merge defaults, the JSON file named by --config and command-line flags (flags win).

    Args:
        args: Parsed arguments; dotted flags are read through FLAG_FIELDS.
        io_fields: Extra non-None values (paths, k) given on the command line.

    Returns:
        Validated RunConfig.
    """
    document = {}
    config_path = getattr(args, "config", None)
    if config_path is not None:
        try:
            document = load_json(config_path)
        except json.JSONDecodeError as e:
            raise ConfigError(f"run configuration {config_path} is not valid JSON: {e}") from None
        if not isinstance(document, dict):
            raise ConfigError(f"run configuration {config_path} must be a JSON object")
        document = dict(document)

    overrides = {field: getattr(args, flag) for flag, field in FLAG_FIELDS.items() if getattr(args, flag, None) is not None}
    if getattr(args, "k", None) is not None:
        overrides["k"] = args.k
    overrides.update({key: value for key, value in (io_fields or {}).items() if value is not None})

    # a flag overrides whichever spelling the file used
    if "window" in overrides:
        document.pop("w", None)
    if "lambda" in overrides:
        document.pop("lambda_", None)
    document.update(overrides)

    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration: {e}") from None
