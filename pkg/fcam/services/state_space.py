"""Linear-Gaussian half of the sampler.

Kalman forward filter, backward sampling of the calcium path, and the
conjugate / Metropolis-Hastings updates for b, sigma^2, tau^2 and gamma.

Index convention: ``c`` has T+1 entries c_0..c_T; ``y``, ``A`` and the filter
arrays are indexed t = 1..T at positions 0..T-1.
"""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numba import njit
from scipy.signal import lfilter
from scipy.special import expit, logit
from scipy.stats import beta as beta_dist

from fcam.core.exceptions import SamplerError
from fcam.models.domain import ChainState, FilterCache, Trace
from fcam.models.schemas import HyperParams

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-300


@njit(cache=True)
def _forward_kernel(y, A, b, gamma, sigma2, tau2, C0):
    T = y.shape[0]
    a = np.empty(T)
    R = np.empty(T)
    m = np.empty(T)
    C = np.empty(T)
    m_prev = 0.0
    C_prev = C0
    clamped = 0
    for t in range(T):
        a_t = gamma * m_prev + A[t]
        R_t = gamma * gamma * C_prev + tau2
        S_t = R_t + sigma2
        if S_t < VARIANCE_FLOOR:
            S_t = VARIANCE_FLOOR
            clamped += 1
        m_t = a_t + R_t / S_t * (y[t] - b - a_t)
        C_t = R_t - R_t * R_t / S_t
        if C_t < VARIANCE_FLOOR:
            C_t = VARIANCE_FLOOR
            clamped += 1
        a[t] = a_t
        R[t] = R_t
        m[t] = m_t
        C[t] = C_t
        m_prev = m_t
        C_prev = C_t
    return a, R, m, C, clamped


@njit(cache=True)
def _backward_kernel(a, R, m, C, m0, C0, gamma, z):
    T = m.shape[0]
    c = np.empty(T + 1)
    c[T] = m[T - 1] + math.sqrt(C[T - 1]) * z[T]
    bad = -1
    for t in range(T - 1, -1, -1):
        if t == 0:
            m_t = m0
            C_t = C0
        else:
            m_t = m[t - 1]
            C_t = C[t - 1]
        # R[t], a[t] hold R_{t+1}, a_{t+1}
        h = m_t + gamma * C_t / R[t] * (c[t + 1] - a[t])
        H = C_t - gamma * gamma * C_t * C_t / R[t]
        if H < 0.0:
            if H < -1e-10 * C_t and bad < 0:
                bad = t
            H = 0.0
        c[t] = h + math.sqrt(H) * z[t]
    return c, bad


def kalman_forward(trace: Trace, state: ChainState, A: np.ndarray, C0: float) -> FilterCache:
    """Run the Kalman filter for the calcium path given amplitudes A (length T).

    a_t = gamma m_{t-1} + A_t,  R_t = gamma^2 C_{t-1} + tau^2,
    m_t = a_t + R_t (R_t + sigma^2)^-1 (y_t - b - a_t),
    C_t = R_t - R_t^2 (R_t + sigma^2)^-1, starting from m_0 = 0 and C_0.

    Raises:
        SamplerError: if an intermediate quantity is non-finite.
    """
    if not (state.sigma2 > 0 and state.tau2 > 0):
        raise SamplerError(f"filter needs positive variances, got sigma2={state.sigma2}, tau2={state.tau2}")
    a, R, m, C, clamped = _forward_kernel(
        np.ascontiguousarray(trace.y, dtype=np.float64),
        np.ascontiguousarray(A, dtype=np.float64),
        float(state.b),
        float(state.gamma),
        float(state.sigma2),
        float(state.tau2),
        float(C0),
    )
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(C))):
        raise SamplerError("non-finite Kalman filter output (divergent state)")
    if clamped:
        logger.warning("Kalman filter clamped %d variance(s) at %.0e", clamped, VARIANCE_FLOOR)
    return FilterCache(a=a, R=R, m=m, C=C, m0=0.0, C0=float(C0), clamped=int(clamped))


def ffbs_sample(cache: FilterCache, state: ChainState, rng: np.random.Generator) -> np.ndarray:
    """Backward-sample c_0..c_T from a filter cache.

    Draws c_T ~ N(m_T, C_T), then c_t ~ N(h_t, H_t) for t = T-1..0 with
    h_t = m_t + gamma C_t R_{t+1}^-1 (c_{t+1} - a_{t+1}) and
    H_t = C_t - gamma^2 C_t^2 R_{t+1}^-1.

    Raises:
        SamplerError: if some H_t is negative beyond rounding (cache/state mismatch).
    """
    z = rng.standard_normal(cache.m.shape[0] + 1)
    c, bad = _backward_kernel(cache.a, cache.R, cache.m, cache.C, cache.m0, cache.C0, float(state.gamma), z)
    if bad >= 0:
        raise SamplerError(f"negative backward variance H_{bad}: filter cache does not match the state")
    return c


def sample_calcium_prior(
    A: np.ndarray, gamma: float, tau2: float, C0: float, rng: np.random.Generator
) -> np.ndarray:
    """Draw c_0..c_T from the AR(1) prior given amplitudes (no observations)."""
    c0 = rng.normal(0.0, math.sqrt(C0))
    drive = np.asarray(A, dtype=np.float64) + rng.normal(0.0, math.sqrt(tau2), size=len(A))
    path, _ = lfilter([1.0], [1.0, -gamma], drive, zi=[gamma * c0])
    return np.concatenate(([c0], path))


def baseline_posterior(trace: Trace, c: np.ndarray, sigma2: float, hyper: HyperParams) -> Tuple[float, float]:
    """Mean and variance of the conjugate normal full conditional of b."""
    precision = 1.0 / hyper.B0 + trace.T / sigma2
    mean = (hyper.b0 / hyper.B0 + np.sum(trace.y - c[1:]) / sigma2) / precision
    return float(mean), float(1.0 / precision)


def update_baseline(
    trace: Trace, c: np.ndarray, state: ChainState, hyper: HyperParams, rng: np.random.Generator
) -> float:
    """Draw b from N(mean, 1/P), P = 1/B_0 + T/sigma^2."""
    mean, var = baseline_posterior(trace, c, state.sigma2, hyper)
    return float(rng.normal(mean, math.sqrt(var)))


def variance_posteriors(
    trace: Trace, c: np.ndarray, A: np.ndarray, state: ChainState, hyper: HyperParams
) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """(shape, rate) of the gamma full conditionals of 1/sigma^2 and 1/tau^2."""
    T = trace.T
    obs_resid = trace.y - c[1:] - state.b
    state_resid = c[1:] - state.gamma * c[:-1] - A
    sigma = (hyper.h1sigma + T / 2.0, hyper.h2sigma + 0.5 * float(obs_resid @ obs_resid))
    tau = (hyper.h1tau + T / 2.0, hyper.h2tau + 0.5 * float(state_resid @ state_resid))
    return sigma, tau


def update_variances(
    trace: Trace,
    c: np.ndarray,
    A: np.ndarray,
    state: ChainState,
    hyper: HyperParams,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """Draw (sigma^2, tau^2) through their gamma-distributed precisions."""
    (s_shape, s_rate), (t_shape, t_rate) = variance_posteriors(trace, c, A, state, hyper)
    sigma2 = 1.0 / rng.gamma(s_shape, 1.0 / s_rate)
    tau2 = 1.0 / rng.gamma(t_shape, 1.0 / t_rate)
    return float(sigma2), float(tau2)


@dataclass(frozen=True)
class ARStatistics:
    """Sufficient statistics of sum_t (z_t - gamma x_t)^2 with z = c_t - A_t, x = c_{t-1}."""

    zz: float
    zx: float
    xx: float

    @classmethod
    def from_path(cls, c: np.ndarray, A: np.ndarray) -> "ARStatistics":
        z = c[1:] - A
        x = c[:-1]
        return cls(zz=float(z @ z), zx=float(z @ x), xx=float(x @ x))


def gamma_log_target(gamma: float, stats: ARStatistics, tau2: float, hyper: HyperParams) -> float:
    """Unnormalized log full conditional of gamma on (0, 1)."""
    if not 0.0 < gamma < 1.0:
        return -np.inf
    sse = stats.zz - 2.0 * gamma * stats.zx + gamma * gamma * stats.xx
    return float(beta_dist.logpdf(gamma, hyper.h1gamma, hyper.h2gamma) - 0.5 * sse / tau2)


def gamma_log_accept_ratio(
    current: float, proposal: float, stats: ARStatistics, tau2: float, hyper: HyperParams
) -> float:
    """log MH ratio for a logit-scale random walk (includes the Jacobian)."""
    if not 0.0 < proposal < 1.0:
        return -np.inf
    jacobian = math.log(proposal * (1.0 - proposal)) - math.log(current * (1.0 - current))
    return (
        gamma_log_target(proposal, stats, tau2, hyper) - gamma_log_target(current, stats, tau2, hyper) + jacobian
    )


@dataclass
class AdaptiveStep:
    """Random-walk step size with Robbins-Monro tuning of log s during burn-in."""

    log_step: float
    target: float = 0.3
    adapting: bool = True
    accepted: int = 0
    proposed: int = 0

    @property
    def step(self) -> float:
        return math.exp(self.log_step)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def record(self, accept_prob: float, accepted: bool, iteration: int) -> None:
        self.proposed += 1
        self.accepted += int(accepted)
        if self.adapting:
            self.log_step += (accept_prob - self.target) / (iteration + 1) ** 0.6

    def freeze(self) -> None:
        self.adapting = False
        self.accepted = 0
        self.proposed = 0


def update_gamma_mh(
    c: np.ndarray,
    A: np.ndarray,
    state: ChainState,
    hyper: HyperParams,
    step: AdaptiveStep,
    rng: np.random.Generator,
    iteration: int = 0,
) -> Tuple[float, bool]:
    """One logit-scale random-walk MH step for gamma.

    Targets Beta(gamma; h1gamma, h2gamma) * prod_t N(c_t; gamma c_{t-1} + A_t, tau^2).
    Returns the new (or retained) gamma and whether the proposal was accepted.
    """
    stats = ARStatistics.from_path(c, A)
    current = state.gamma
    proposal = float(expit(logit(current) + step.step * rng.standard_normal()))
    log_ratio = gamma_log_accept_ratio(current, proposal, stats, state.tau2, hyper)
    accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    accepted = bool(rng.random() < accept_prob)
    step.record(accept_prob, accepted, iteration)
    return (proposal if accepted else current), accepted
