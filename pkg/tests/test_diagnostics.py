"""Test per-iteration diagnostics logging."""
import math

import pandas as pd

from fcam.utils.diagnostics_logger import DIAGNOSTIC_COLUMNS, DiagnosticsLogger, write_diagnostics


def log_rows(logger, n, chain=0):
    DiagnosticsLogger.set_chain(chain)
    for i in range(n):
        logger.log_iteration(i, 1, 2, 3, 4, i % 2 == 0, True, False, 0.5 if i else math.nan, 0.4)


class TestDiagnosticsLogger:
    """Test the diagnostics buffer."""

    def test_rows_and_columns(self):
        logger = DiagnosticsLogger()
        log_rows(logger, 4, chain=2)
        frame = logger.to_frame()
        assert list(frame.columns) == list(DIAGNOSTIC_COLUMNS)
        assert len(logger) == 4
        assert frame["chain"].tolist() == [2] * 4
        assert frame["gamma_accept"].tolist() == [1, 0, 1, 0]

    def test_sweeps_without_slab_moves_keep_nan(self):
        logger = DiagnosticsLogger()
        log_rows(logger, 3)
        slab = logger.to_frame()["slab_accept"]
        assert math.isnan(slab.iloc[0])
        assert slab.iloc[1:].tolist() == [0.5, 0.5]

    def test_write_combined(self, tmp_path):
        first, second = DiagnosticsLogger(), DiagnosticsLogger()
        log_rows(first, 2, chain=0)
        log_rows(second, 3, chain=1)
        path = write_diagnostics([first.to_frame(), second.to_frame()], tmp_path / "diagnostics.csv")
        frame = pd.read_csv(path)
        assert frame["chain"].tolist() == [0, 0, 1, 1, 1]

    def test_write_empty(self, tmp_path):
        frame = pd.read_csv(write_diagnostics([], tmp_path / "diagnostics.csv"))
        assert list(frame.columns) == list(DIAGNOSTIC_COLUMNS)
