"""Numpy-backed domain types shared by the sampler and the summaries.

Labels are 0-based throughout: conditions in 0..J-1, distributional
components in 0..K-1, observational components (atoms) in 0..L-1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np

from fcam.core.exceptions import SamplerError

SCALAR_FIELDS: Tuple[str, ...] = (
    "b", "sigma2", "tau2", "gamma", "p", "K", "Kplus", "L", "Lplus", "alpha", "beta",
)
INTEGER_SCALARS = frozenset({"K", "Kplus", "L", "Lplus"})


@dataclass(frozen=True)
class Trace:
    """Observed fluorescence series with per-timepoint condition labels."""

    y: np.ndarray
    g: np.ndarray
    frame_rate_hz: float
    labels: Tuple[str, ...]
    t: np.ndarray

    @property
    def T(self) -> int:
        return int(self.y.shape[0])

    @property
    def J(self) -> int:
        return len(self.labels)

    @property
    def duration_seconds(self) -> float:
        return self.T / self.frame_rate_hz


@dataclass(frozen=True)
class FilterCache:
    """Kalman forward-filter output for t = 1..T plus the time-0 values."""

    a: np.ndarray
    R: np.ndarray
    m: np.ndarray
    C: np.ndarray
    m0: float
    C0: float
    clamped: int = 0


@dataclass
class ChainState:
    """Complete MCMC state.

    ``c`` has T+1 entries (c_0..c_T). ``omega`` is L x K with one simplex per
    column. The first ``Kplus`` (``Lplus``) components are the non-empty ones.
    """

    c: np.ndarray
    b: float
    sigma2: float
    tau2: float
    gamma: float
    p: float
    K: int
    L: int
    Kplus: int
    Lplus: int
    pi: np.ndarray
    omega: np.ndarray
    Astar: np.ndarray
    S: np.ndarray
    M: np.ndarray
    alpha: float
    beta: float

    def amplitudes(self) -> np.ndarray:
        """A_t = Astar[M_t] for t = 1..T."""
        return self.Astar[self.M]

    def copy(self) -> "ChainState":
        return replace(
            self,
            c=self.c.copy(),
            pi=self.pi.copy(),
            omega=self.omega.copy(),
            Astar=self.Astar.copy(),
            S=self.S.copy(),
            M=self.M.copy(),
        )

    def check_invariants(self, tol: float = 1e-10) -> None:
        """Raise SamplerError if any structural invariant is violated."""
        problems: List[str] = []
        if self.pi.shape != (self.K,):
            problems.append(f"pi has shape {self.pi.shape}, expected ({self.K},)")
        elif abs(self.pi.sum() - 1.0) > tol:
            problems.append(f"pi sums to {self.pi.sum()!r}")
        if self.omega.shape != (self.L, self.K):
            problems.append(f"omega has shape {self.omega.shape}, expected ({self.L}, {self.K})")
        elif np.any(np.abs(self.omega.sum(axis=0) - 1.0) > tol):
            problems.append("an omega column does not sum to 1")
        if self.Astar.shape != (self.L,):
            problems.append(f"Astar has shape {self.Astar.shape}, expected ({self.L},)")
        elif np.any((self.Astar != 0.0) & (self.Astar < 1e-12)):
            problems.append("an atom is neither exactly zero nor positive")
        if not 1 <= self.Kplus <= self.K:
            problems.append(f"Kplus={self.Kplus} outside 1..K={self.K}")
        if not 1 <= self.Lplus <= self.L:
            problems.append(f"Lplus={self.Lplus} outside 1..L={self.L}")
        if not problems:
            occupied_k = np.unique(self.S)
            occupied_l = np.unique(self.M)
            if not np.array_equal(occupied_k, np.arange(self.Kplus)):
                problems.append("distributional labels are not relabeled (non-empty first)")
            if not np.array_equal(occupied_l, np.arange(self.Lplus)):
                problems.append("observational labels are not relabeled (non-empty first)")
        if not 0.0 < self.gamma < 1.0:
            problems.append(f"gamma={self.gamma} outside (0, 1)")
        if not (self.sigma2 > 0.0 and self.tau2 > 0.0):
            problems.append("variances must be strictly positive")
        if problems:
            raise SamplerError("; ".join(problems))


@dataclass(frozen=True)
class PartitionCounts:
    """Cluster occupancy counts derived from (S, M, Astar)."""

    Jk: np.ndarray
    Nlk: np.ndarray
    Nl: np.ndarray
    n0: int

    @property
    def T(self) -> int:
        return int(self.Nl.sum())

    @property
    def J(self) -> int:
        return int(self.Jk.sum())

    @classmethod
    def from_state(cls, state: ChainState, g: np.ndarray) -> "PartitionCounts":
        K, L = state.K, state.L
        Jk = np.bincount(state.S, minlength=K)
        flat = state.M.astype(np.int64) * K + state.S[g]
        Nlk = np.bincount(flat, minlength=L * K).reshape(L, K)
        n0 = int(np.count_nonzero(state.Astar[state.M] == 0.0))
        return cls(Jk=Jk, Nlk=Nlk, Nl=Nlk.sum(axis=1), n0=n0)


@dataclass
class DrawStore:
    """Append-only store of retained posterior draws."""

    T: int
    J: int
    scalars: Dict[str, List[float]] = field(default_factory=lambda: {name: [] for name in SCALAR_FIELDS})
    S: List[np.ndarray] = field(default_factory=list)
    M: List[np.ndarray] = field(default_factory=list)
    Astar: List[np.ndarray] = field(default_factory=list)

    @property
    def D(self) -> int:
        return len(self.S)

    def __len__(self) -> int:
        return self.D

    def append(self, state: ChainState) -> None:
        self.append_record(
            {name: getattr(state, name) for name in SCALAR_FIELDS},
            S=state.S,
            M=state.M,
            Astar=state.Astar,
        )

    def append_record(self, scalars: Dict[str, float], S: np.ndarray, M: np.ndarray, Astar: np.ndarray) -> None:
        if S.shape != (self.J,) or M.shape != (self.T,):
            raise ValueError(
                f"draw dimensions (S={S.shape}, M={M.shape}) do not match store (J={self.J}, T={self.T})"
            )
        for name in SCALAR_FIELDS:
            value = scalars[name]
            self.scalars[name].append(int(value) if name in INTEGER_SCALARS else float(value))
        self.S.append(np.asarray(S, dtype=np.int64).copy())
        dtype = np.uint16 if Astar.shape[0] <= np.iinfo(np.uint16).max else np.uint32
        self.M.append(np.asarray(M).astype(dtype, copy=True))
        self.Astar.append(np.asarray(Astar, dtype=np.float64).copy())

    def extend(self, other: "DrawStore") -> None:
        """Pool the draws of another chain into this store."""
        if (other.T, other.J) != (self.T, self.J):
            raise ValueError(f"cannot pool draws with T={other.T}, J={other.J} into T={self.T}, J={self.J}")
        for name in SCALAR_FIELDS:
            self.scalars[name].extend(other.scalars[name])
        self.S.extend(other.S)
        self.M.extend(other.M)
        self.Astar.extend(other.Astar)

    def scalar(self, name: str) -> np.ndarray:
        return np.asarray(self.scalars[name])

    def amplitudes(self, d: int) -> np.ndarray:
        """A_t = Astar[M_t] for draw d."""
        return self.Astar[d][self.M[d]]


@dataclass(frozen=True)
class GroundTruth:
    """Simulation truth. Partitions use 0 for "no spike" in ``obs_labels``."""

    A_true: np.ndarray
    spike_true: np.ndarray
    obs_labels: np.ndarray
    dist_labels: np.ndarray
    condition: np.ndarray
    c_true: np.ndarray
    state_noise: np.ndarray
    obs_noise: np.ndarray
