"""Per-iteration sampler diagnostics (acceptance rates, K+/L+ traces)."""
import logging
from contextvars import ContextVar
from pathlib import Path
from typing import Any, Dict, List, Union

import pandas as pd

logger = logging.getLogger(__name__)

# Chain id of the chain currently running in this context
_diagnostics_chain_id: ContextVar[int] = ContextVar("diagnostics_chain_id", default=0)

DIAGNOSTIC_COLUMNS = (
    "chain",
    "iteration",
    "Kplus",
    "Lplus",
    "K",
    "L",
    "gamma_accept",
    "alpha_accept",
    "beta_accept",
    "slab_accept",
    "gamma_step",
)


class DiagnosticsLogger:
    """Collects one row per MCMC iteration.

    Rows are buffered in memory so chains running in worker processes can hand
    them back to the parent, which writes a single ``diagnostics.csv``.
    """

    def __init__(self):
        self._rows: List[Dict[str, Any]] = []

    @staticmethod
    def set_chain(chain_id: int) -> None:
        _diagnostics_chain_id.set(int(chain_id))

    def log_iteration(
        self,
        iteration: int,
        Kplus: int,
        Lplus: int,
        K: int,
        L: int,
        gamma_accept: bool,
        alpha_accept: bool,
        beta_accept: bool,
        slab_accept: float,
        gamma_step: float,
    ) -> None:
        """Record one iteration; acceptance flags are stored as 0/1."""
        try:
            self._rows.append(
                {
                    "chain": _diagnostics_chain_id.get(),
                    "iteration": int(iteration),
                    "Kplus": int(Kplus),
                    "Lplus": int(Lplus),
                    "K": int(K),
                    "L": int(L),
                    "gamma_accept": int(gamma_accept),
                    "alpha_accept": int(alpha_accept),
                    "beta_accept": int(beta_accept),
                    "slab_accept": float(slab_accept),
                    "gamma_step": float(gamma_step),
                }
            )
        except Exception as e:
            # A diagnostics failure must not abort the chain
            logger.error(f"Failed to log iteration {iteration}: {e}")

    def __len__(self) -> int:
        return len(self._rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self._rows, columns=list(DIAGNOSTIC_COLUMNS))


def write_diagnostics(frames: List[pd.DataFrame], path: Union[str, Path]) -> Path:
    """Concatenate per-chain diagnostics and write one CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    combined = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(DIAGNOSTIC_COLUMNS))
    combined.to_csv(path, index=False, lineterminator="\n")
    return path
