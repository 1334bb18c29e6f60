"""Module for reading and writing feature sequences, timelines and fitted models."""

import json
import logging
import math
import re
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from ticlust.base.config import RTTM_DECIMALS
from ticlust.base.errors import DataError
from ticlust.protocol import ClusterModel, FeatureSequence, Segment, Timeline

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_PANDAS_LINE = re.compile(r"line (\d+)")
_RTTM_FIELDS = 10


def _parse_column(column: pd.Series) -> np.ndarray:
    # object -> float goes through float(), which rounds correctly; pd.to_numeric may be 1 ulp off
    try:
        return column.to_numpy(dtype=object).astype(float)
    except ValueError:
        # only reached when some cell is bad; NaN marks it for the caller
        return pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)


def _read_numeric_csv(path: PathLike, what: str, n_cols: Optional[int] = None) -> np.ndarray:
    """
    Parse a headerless numeric CSV, reporting the 1-based line of the first bad row.

    Args:
        path: CSV file.
        what: Name used in error messages ("feature", "time").
        n_cols: Required column count, or None to take it from the first row.

    Returns:
        Float matrix, one row per line.
    """
    try:
        raw = pd.read_csv(
            path,
            header=None,
            dtype=str,
            skip_blank_lines=False,
            keep_default_na=False,
            na_values=[],
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise DataError(f"no {what} rows in {path}") from None
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        line = int(match.group(1)) if match else None
        raise DataError(f"ragged {what} row in {path}", line=line) from None

    if raw.empty:
        raise DataError(f"no {what} rows in {path}")

    missing = raw.isna().to_numpy()
    cells = raw.fillna("").apply(lambda col: col.str.strip())
    values = np.column_stack([_parse_column(cells[col]) for col in cells.columns])

    for row in range(values.shape[0]):
        line = row + 1
        if missing[row].any():
            raise DataError(f"ragged {what} row in {path}: expected {values.shape[1]} fields", line=line)
        bad = np.flatnonzero(~np.isfinite(values[row]))
        if len(bad):
            cell = cells.iat[row, int(bad[0])]
            raise DataError(f"non-numeric or non-finite {what} value {cell!r} in {path}", line=line)

    if n_cols is not None and values.shape[1] != n_cols:
        raise DataError(f"{what} file {path} must have {n_cols} columns, got {values.shape[1]}")
    return values


def load_features(path: PathLike, times_path: Optional[PathLike] = None) -> FeatureSequence:
    """
    Load a headerless CSV of feature vectors (one row per time step).

    Args:
        path: Feature CSV.
        times_path: Optional "start,end" sidecar aligned by row.

    Returns:
        FeatureSequence satisfying its invariants.
    """
    data = _read_numeric_csv(path, "feature")
    times = None
    if times_path is not None:
        times = _read_numeric_csv(times_path, "time", n_cols=2)
        if times.shape[0] != data.shape[0]:
            raise DataError(
                f"times sidecar {times_path} has {times.shape[0]} rows, features have {data.shape[0]}"
            )
    seq = FeatureSequence(data=data, times=times)
    logger.info(f"Loaded {seq.n_rows} feature rows of dimension {seq.dim} from {path}")
    return seq


def _write_csv(matrix: np.ndarray, path: PathLike) -> None:
    pd.DataFrame(np.asarray(matrix, dtype=float)).to_csv(
        path, header=False, index=False, float_format="%.17g", lineterminator="\n"
    )


def write_features(seq: FeatureSequence, path: PathLike, times_path: Optional[PathLike] = None) -> None:
    """Write features (and, if requested, the per-row extents) with round-trip float precision."""
    _write_csv(seq.data, path)
    if times_path is not None:
        _write_csv(seq.extents(), times_path)
    logger.info(f"Wrote {seq.n_rows} feature rows to {path}")


def load_timeline_rttm(path: PathLike) -> Timeline:
    """
    Load the SPEAKER records of a single-session RTTM file.

    Other record types are skipped. Segments are returned sorted by start time.
    """
    segments: List[Segment] = []
    uri = None
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith(";;"):
            continue
        if parts[0] != "SPEAKER":
            logger.debug(f"Skipping {parts[0]} record at {path}:{line_no}")
            continue
        if len(parts) < _RTTM_FIELDS:
            raise DataError(f"SPEAKER record needs {_RTTM_FIELDS} fields, got {len(parts)}", line=line_no)
        try:
            start = float(parts[3])
            dur = float(parts[4])
        except ValueError:
            raise DataError(f"unparsable onset/duration {parts[3]!r} {parts[4]!r}", line=line_no) from None
        if not (math.isfinite(start) and math.isfinite(dur)):
            raise DataError("non-finite onset/duration", line=line_no)
        if dur <= 0:
            raise DataError(f"duration must be positive, got {dur}", line=line_no)
        if uri is None:
            uri = parts[1]
        elif parts[1] != uri:
            raise DataError(f"RTTM mixes sessions {uri!r} and {parts[1]!r}", line=line_no)
        segments.append(Segment(start, start + dur, parts[7]))

    segments.sort(key=lambda seg: (seg.start, seg.end, seg.label))
    logger.info(f"Loaded {len(segments)} segments from {path}")
    return Timeline(segments=segments, uri=uri)


def format_rttm(timeline: Timeline, uri: Optional[str] = None) -> str:
    """Render a timeline as RTTM text, times printed with RTTM_DECIMALS decimals."""
    uri = uri or timeline.uri or "session"
    if not uri or any(ch.isspace() for ch in uri):
        raise DataError(f"session id {uri!r} cannot be written to RTTM")
    lines = []
    for i, seg in enumerate(timeline):
        if not seg.label or any(ch.isspace() for ch in seg.label):
            raise DataError(f"label {seg.label!r} contains whitespace", row=i)
        start = f"{seg.start:.{RTTM_DECIMALS}f}"
        dur = f"{seg.end - seg.start:.{RTTM_DECIMALS}f}"
        if float(dur) <= 0:
            raise DataError(f"segment is shorter than the RTTM time resolution", row=i)
        lines.append(f"SPEAKER {uri} 1 {start} {dur} <NA> <NA> {seg.label} <NA> <NA>\n")
    return "".join(lines)


def write_timeline_rttm(timeline: Timeline, path: PathLike, uri: Optional[str] = None) -> None:
    text = format_rttm(timeline, uri)
    Path(path).write_text(text, encoding="utf-8")
    logger.info(f"Wrote {len(timeline)} segments to {path}")


def save_models(models: Sequence[ClusterModel], path: PathLike) -> None:
    """Persist fitted cluster models to a .npz archive."""
    if not models:
        raise DataError("no models to save")
    w = models[0].w
    if any(model.w != w or model.dim != models[0].dim for model in models):
        raise DataError("all models must share dimension and window length")
    with open(path, "wb") as f:
        np.savez(
            f,
            means=np.stack([model.mean for model in models]),
            thetas=np.stack([model.theta for model in models]),
            converged=np.array([model.converged for model in models]),
            w=np.array(w),
        )
    logger.info(f"Saved {len(models)} cluster models to {path}")


def load_models(path: PathLike) -> List[ClusterModel]:
    """Load models written by save_models; every invariant is re-checked."""
    with np.load(path) as archive:
        w = int(archive["w"])
        models = [
            ClusterModel(mean=mean, theta=theta, w=w, converged=bool(conv))
            for mean, theta, conv in zip(archive["means"], archive["thetas"], archive["converged"])
        ]
    logger.info(f"Loaded {len(models)} cluster models from {path}")
    return models


def save_json(document: dict, path: PathLike) -> None:
    """Write a metrics/spec document; key order is preserved so outputs are reproducible."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)
        f.write("\n")
    logger.info(f"Saved {path}")


def load_json(path: PathLike) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
