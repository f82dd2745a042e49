"""Trace ingestion and validation service."""
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from fcam.core.exceptions import TraceValidationError
from fcam.models.domain import Trace
from fcam.utils.loaders import load_trace_frame

logger = logging.getLogger(__name__)

DEFAULT_FRAME_RATE_HZ = 30.0


def validate_trace(raw: pd.DataFrame, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ) -> Trace:
    """Validate a (time, y, condition) table and build a Trace.

    Rows are ordered by time. Condition labels are relabeled to 0..J-1 in
    order of first appearance; the original labels are kept on the Trace.

    Raises:
        TraceValidationError: on empty input, fewer than 2 rows, duplicate
            times, non-finite fluorescence, an empty condition label or a
            non-positive frame rate.
    """
    if raw is None or len(raw) == 0:
        raise TraceValidationError("empty input")
    for column in ("t", "y", "condition"):
        if column not in raw.columns:
            raise TraceValidationError(f"missing required column '{column}'")
    if len(raw) < 2:
        raise TraceValidationError(f"a trace needs at least 2 rows, got {len(raw)}")
    if not frame_rate_hz > 0:
        raise TraceValidationError(f"frame_rate_hz must be positive, got {frame_rate_hz}")

    frame = raw.sort_values("t", kind="stable") if not raw["t"].is_monotonic_increasing else raw
    t = frame["t"].to_numpy()
    if np.any(np.diff(t) <= 0):
        raise TraceValidationError("time stamps must be distinct")

    y = frame["y"].to_numpy(dtype=np.float64)
    bad = ~np.isfinite(y)
    if bad.any():
        raise TraceValidationError(f"non-finite fluorescence at t={t[np.flatnonzero(bad)[0]]}")

    condition = frame["condition"]
    blank = (condition.isna() | (condition.astype(str).str.strip() == "")).to_numpy()
    if blank.any():
        raise TraceValidationError(f"empty condition label at t={t[np.flatnonzero(blank)[0]]}")

    codes, uniques = pd.factorize(condition.astype(str), sort=False)
    labels = tuple(str(u) for u in uniques)
    trace = Trace(y=y, g=codes.astype(np.int64), frame_rate_hz=float(frame_rate_hz), labels=labels, t=t)
    logger.debug("validated trace: T=%d, J=%d, %.1f min", trace.T, trace.J, trace.duration_seconds / 60)
    return trace


def trace_to_frame(trace: Trace) -> pd.DataFrame:
    """Inverse of validate_trace, using the original condition labels."""
    return pd.DataFrame({"t": trace.t, "y": trace.y, "condition": np.asarray(trace.labels, dtype=object)[trace.g]})


class IngestionService:
    """Service for loading traces from disk."""

    def __init__(self, frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ):
        self.frame_rate_hz = frame_rate_hz

    def load_trace(self, path: Union[str, Path]) -> Trace:
        """Load and validate a trace CSV."""
        frame = load_trace_frame(path)
        if len(frame) == 0:
            raise TraceValidationError(f"{path}: empty input")
        trace = validate_trace(frame, frame_rate_hz=self.frame_rate_hz)
        logger.info("loaded %s: T=%d, J=%d conditions %s", path, trace.T, trace.J, list(trace.labels))
        return trace


def get_ingestion_service(frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ) -> IngestionService:
    """Get ingestion service instance."""
    return IngestionService(frame_rate_hz=frame_rate_hz)
