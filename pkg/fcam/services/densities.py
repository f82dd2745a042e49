"""Prior densities and shared log-density utilities.

Every density here is evaluated in log space; normalizations go through
``scipy.special.logsumexp``.
"""
import logging
import math
from functools import lru_cache
from typing import Tuple, Union

import numpy as np
from scipy.special import betaln, gammaln, logsumexp
from scipy.stats import norm

from fcam.core.exceptions import ConfigError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

_MAX_SUPPORT = 1 << 20


def bnb_log_pmf(k: ArrayLike, r: float, a: float, b: float) -> ArrayLike:
    """Log pmf of the beta-negative-binomial distribution.

    P(X=k) = Gamma(r+k) / (k! Gamma(r)) * B(a+r, b+k) / B(a, b). The prior on a
    component count is P(K = k+1) = P(X = k).

    Raises:
        ConfigError: if r, a or b is not strictly positive.
    """
    if not (r > 0 and a > 0 and b > 0):
        raise ConfigError(f"beta-negative-binomial parameters must be positive, got (r={r}, a={a}, b={b})")
    k_arr = np.asarray(k, dtype=np.float64)
    if np.any(k_arr < 0):
        raise ValueError("bnb_log_pmf is defined for k >= 0")
    out = gammaln(r + k_arr) - gammaln(k_arr + 1.0) - gammaln(r) + betaln(a + r, b + k_arr) - betaln(a, b)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=64)
def count_support_max(params: Tuple[float, float, float], tail_mass: float = 1e-12) -> int:
    """Largest component count kept when the BNB prior is truncated.

    Returns the smallest K_max with P(K > K_max) < tail_mass, where K - 1 follows
    the beta-negative-binomial ``params``. Tails are summed from the far end in
    log space; the mass past the evaluated window is bounded by the power-law
    decay pmf(k) ~ k^-(a+1) of the distribution.
    """
    r, a, b = params
    log_tail_mass = math.log(tail_mass)
    size = 1024
    while True:
        log_pmf = bnb_log_pmf(np.arange(size), r, a, b)
        # upper bound on P(X >= size), twice the integral of the power-law tail
        log_beyond = log_pmf[-1] + math.log(2.0 * size / a)
        if log_beyond < log_tail_mass - math.log(1e3) or size >= _MAX_SUPPORT:
            break
        size *= 2
    # log P(X >= k) for k = 0..size-1
    log_tail = np.logaddexp(np.logaddexp.accumulate(log_pmf[::-1])[::-1], log_beyond)
    below = np.flatnonzero(log_tail < log_tail_mass)
    if below.size == 0:
        logger.warning("BNB%s tail mass above %.1e at %d components; truncating there", params, tail_mass, size)
        return size
    # P(K > K_max) = P(X >= K_max)
    return max(int(below[0]), 1)


def log_count_prior(counts: np.ndarray, params: Tuple[float, float, float]) -> np.ndarray:
    """log p(K) for K >= 1 under the translated BNB prior."""
    return bnb_log_pmf(np.asarray(counts) - 1, *params)


def collapsed_loglik(
    y_t: ArrayLike,
    c_prev: ArrayLike,
    A: ArrayLike,
    b: float,
    gamma: float,
    sigma2: float,
    tau2: float,
) -> ArrayLike:
    """log N(y_t; b + gamma * c_prev + A, sigma2 + tau2), broadcasting over arrays."""
    if not (sigma2 > 0 and tau2 > 0):
        raise ValueError(f"variances must be positive, got sigma2={sigma2}, tau2={tau2}")
    mean = b + gamma * np.asarray(c_prev) + np.asarray(A)
    out = norm.logpdf(y_t, loc=mean, scale=np.sqrt(sigma2 + tau2))
    return float(out) if np.ndim(out) == 0 else out


def sample_log_dirichlet(concentration: np.ndarray, rng: np.random.Generator, axis: int = 0) -> np.ndarray:
    """Log of a Dirichlet draw, stable for very small concentrations.

    Uses Gamma(c) = Gamma(c + 1) * U^(1/c) so that log-weights never underflow.
    Several simplices may be drawn at once along ``axis``.
    """
    conc = np.asarray(concentration, dtype=np.float64)
    log_g = np.log(rng.standard_gamma(conc + 1.0)) + np.log(rng.random(conc.shape)) / conc
    return log_g - logsumexp(log_g, axis=axis, keepdims=True)


def sample_dirichlet(concentration: np.ndarray, rng: np.random.Generator, axis: int = 0) -> np.ndarray:
    """Dirichlet draw(s) along ``axis``; each simplex sums to 1 within rounding."""
    w = np.exp(sample_log_dirichlet(concentration, rng, axis=axis))
    return w / w.sum(axis=axis, keepdims=True)


def sample_categorical_log(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of unnormalized log-weights (inverse CDF)."""
    lw = np.atleast_2d(log_weights)
    shifted = np.exp(lw - lw.max(axis=1, keepdims=True))
    cdf = np.cumsum(shifted, axis=1)
    u = rng.random(lw.shape[0]) * cdf[:, -1]
    draws = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(draws, lw.shape[1] - 1)
