"""CSV readers and writers for traces, ground truth and tables."""
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError

from fcam.core.exceptions import TraceValidationError

TRACE_COLUMNS = ("t", "y", "condition")
TRUTH_COLUMNS = ("t", "A_true", "spike_true", "obs_label", "dist_label", "condition")

_NONFINITE_SPELLINGS = frozenset({"nan", "inf", "+inf", "-inf", "infinity", "+infinity", "-infinity"})

PathLike = Union[str, Path]


def _read_strict_csv(path: PathLike, required: Sequence[str]) -> pd.DataFrame:
    """Read a CSV as strings, rejecting ragged rows and missing columns.

    The tokenizer pads a short row with empty fields, so a short row and an
    explicitly empty field look the same; both are rejected. Line numbers in
    error messages count the header as line 1.
    """
    path = Path(path)
    if not path.exists():
        raise TraceValidationError(f"file not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_values=[""], skipinitialspace=True)
    except EmptyDataError as e:
        raise TraceValidationError(f"{path}: empty input") from e
    except ParserError as e:
        # pandas reports e.g. "Expected 3 fields in line 7, saw 4"
        raise TraceValidationError(f"{path}: malformed CSV row: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    for column in required:
        if column not in frame.columns:
            raise TraceValidationError(f"{path}: missing required column '{column}'")

    short = frame[list(required)].isna().any(axis=1).to_numpy()
    if short.any():
        line = int(np.flatnonzero(short)[0]) + 2
        raise TraceValidationError(f"{path}: malformed CSV row at line {line}: too few fields or an empty field")
    return frame


def _parse_numeric(frame: pd.DataFrame, column: str, path: PathLike) -> np.ndarray:
    raw = frame[column].str.strip()
    values = pd.to_numeric(raw, errors="coerce")
    malformed = values.isna() & ~raw.str.lower().isin(_NONFINITE_SPELLINGS)
    if malformed.any():
        line = int(np.flatnonzero(malformed.to_numpy())[0]) + 2
        raise TraceValidationError(
            f"{path}: malformed CSV row at line {line}: column '{column}' value {raw[malformed].iloc[0]!r} is not numeric"
        )
    return values.to_numpy(dtype=np.float64)


def load_trace_frame(path: PathLike) -> pd.DataFrame:
    """Load a trace CSV (header ``t,y,condition``) into a typed DataFrame."""
    frame = _read_strict_csv(path, TRACE_COLUMNS)
    t = _parse_numeric(frame, "t", path)
    if not np.all(np.isfinite(t)) or np.any(t != np.round(t)):
        raise TraceValidationError(f"{path}: column 't' must hold integers")
    return pd.DataFrame(
        {
            "t": t.astype(np.int64),
            "y": _parse_numeric(frame, "y", path),
            "condition": frame["condition"].str.strip().to_numpy(),
        }
    )


def load_truth_frame(path: PathLike) -> pd.DataFrame:
    """Load a ground-truth CSV written by the simulate command."""
    frame = _read_strict_csv(path, TRUTH_COLUMNS)
    typed = {"t": _parse_numeric(frame, "t", path).astype(np.int64)}
    typed["A_true"] = _parse_numeric(frame, "A_true", path)
    typed["spike_true"] = frame["spike_true"].str.strip().str.lower().isin({"1", "true"}).to_numpy()
    typed["obs_label"] = _parse_numeric(frame, "obs_label", path).astype(np.int64)
    typed["dist_label"] = _parse_numeric(frame, "dist_label", path).astype(np.int64)
    typed["condition"] = frame["condition"].str.strip().to_numpy()
    return pd.DataFrame(typed)


def write_frame(frame: pd.DataFrame, path: PathLike) -> Path:
    """Write a DataFrame as LF-terminated CSV, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    return path
