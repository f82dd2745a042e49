"""Pytest configuration and fixtures."""
import os

import numpy as np
import pandas as pd
import pytest

# Keep progress logging quiet and single-process during tests
os.environ.setdefault("FCAM_PROGRESS_EVERY", "100000")
os.environ.setdefault("FCAM_THREADS", "1")

from fcam.models.domain import ChainState, Trace
from fcam.models.schemas import HyperParams, RunConfig, SamplerOptions
from fcam.services.ingestion_service import validate_trace


@pytest.fixture
def rng():
    """Seeded generator; every test gets the same stream."""
    return np.random.default_rng(20240601)


@pytest.fixture
def hyper():
    """Default hyperparameters."""
    return HyperParams()


@pytest.fixture
def options():
    return SamplerOptions()


def make_trace(y, g, frame_rate_hz: float = 30.0) -> Trace:
    """Build a validated Trace from values and 0-based condition indices."""
    y = np.asarray(y, dtype=np.float64)
    frame = pd.DataFrame(
        {"t": np.arange(1, y.size + 1), "y": y, "condition": [f"cond{j + 1}" for j in np.asarray(g)]}
    )
    return validate_trace(frame, frame_rate_hz=frame_rate_hz)


def make_state(
    T: int,
    J: int,
    *,
    Astar=(0.0, 1.0),
    M=None,
    S=None,
    K: int = 1,
    omega=None,
    pi=None,
    b: float = 0.0,
    sigma2: float = 0.05,
    tau2: float = 0.01,
    gamma: float = 0.5,
    p: float = 0.1,
    c=None,
) -> ChainState:
    """Hand-built chain state; labels are relabeled only if the caller passes them so."""
    Astar = np.asarray(Astar, dtype=np.float64)
    L = Astar.size
    M = np.zeros(T, dtype=np.int64) if M is None else np.asarray(M, dtype=np.int64)
    S = np.zeros(J, dtype=np.int64) if S is None else np.asarray(S, dtype=np.int64)
    omega = np.full((L, K), 1.0 / L) if omega is None else np.asarray(omega, dtype=np.float64)
    pi = np.full(K, 1.0 / K) if pi is None else np.asarray(pi, dtype=np.float64)
    return ChainState(
        c=np.zeros(T + 1) if c is None else np.asarray(c, dtype=np.float64),
        b=b,
        sigma2=sigma2,
        tau2=tau2,
        gamma=gamma,
        p=p,
        K=K,
        L=L,
        Kplus=int(np.unique(S).size),
        Lplus=int(np.unique(M).size),
        pi=pi,
        omega=omega,
        Astar=Astar,
        S=S,
        M=M,
        alpha=1.0,
        beta=1.0,
    )


@pytest.fixture
def small_trace():
    """Two conditions, ten frames each, with two obvious spikes."""
    rng = np.random.default_rng(7)
    y = rng.normal(0.0, 0.1, size=20)
    y[3] += 1.5
    y[14] += 1.2
    g = np.repeat([0, 1], 10)
    return make_trace(y, g)


@pytest.fixture
def quick_config():
    """Short schedule for smoke tests."""
    return RunConfig(iters=40, burnin=20, thin=2, seed=3)
