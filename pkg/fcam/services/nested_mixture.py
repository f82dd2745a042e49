"""Nested telescoping updates: weights, allocations, component counts,
Dirichlet concentrations and the spike-and-slab weight p.

State updates that relabel components act on the ChainState in place and
return it alongside the quantities named in their signatures.
"""
import logging
import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, xlogy

from fcam.core.exceptions import SamplerError
from fcam.models.domain import ChainState, PartitionCounts, Trace
from fcam.models.schemas import HyperParams
from fcam.services.densities import (
    collapsed_loglik,
    count_support_max,
    log_count_prior,
    sample_categorical_log,
    sample_dirichlet,
)

logger = logging.getLogger(__name__)


def _pad(counts: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    region = tuple(slice(0, min(a, b)) for a, b in zip(shape, counts.shape))
    out[region] = counts[region]
    return out


# Weights
def sample_distributional_weights(
    counts: PartitionCounts, K: int, alpha: float, rng: np.random.Generator
) -> np.ndarray:
    """pi ~ Dirichlet(alpha/K + J_k), k = 1..K."""
    if K == 1:
        return np.ones(1)
    return sample_dirichlet(alpha / K + _pad(counts.Jk, (K,)), rng)


def sample_observational_weights(
    counts: PartitionCounts, L: int, K: int, beta: float, rng: np.random.Generator
) -> np.ndarray:
    """Column k of omega ~ Dirichlet(beta/L + N_{l,k}); empty columns get the prior."""
    if L == 1:
        return np.ones((1, K))
    return sample_dirichlet(beta / L + _pad(counts.Nlk, (L, K)), rng, axis=0)


# Allocations
def observation_loglik(trace: Trace, c: np.ndarray, state: ChainState, prior_only: bool = False) -> np.ndarray:
    """T x L matrix of log N(y_t; b + gamma c_{t-1} + A*_l, sigma^2 + tau^2)."""
    if prior_only:
        return np.zeros((trace.T, state.L))
    return collapsed_loglik(
        trace.y[:, None], c[:-1, None], state.Astar[None, :], state.b, state.gamma, state.sigma2, state.tau2
    )


def distributional_log_probs(
    loglik: np.ndarray, g: np.ndarray, J: int, pi: np.ndarray, omega: np.ndarray
) -> np.ndarray:
    """J x K unnormalized log p(S_j = k | rest), with M marginalized out."""
    row_max = loglik.max(axis=1, keepdims=True)
    mixed = np.exp(loglik - row_max) @ omega
    with np.errstate(divide="ignore"):
        log_mixed = np.log(mixed) + row_max
        log_pi = np.log(pi)
    per_condition = np.vstack([log_mixed[g == j].sum(axis=0) for j in range(J)])
    return log_pi[None, :] + per_condition


def _first_appearance_order(labels: np.ndarray, n_components: int) -> np.ndarray:
    """Permutation putting occupied labels first (by smallest member index)."""
    occupied, first_index = np.unique(labels, return_index=True)
    occupied = occupied[np.argsort(first_index, kind="stable")]
    empty = np.setdiff1d(np.arange(n_components), occupied, assume_unique=True)
    return np.concatenate([occupied, empty]).astype(np.int64)


def _inverse(perm: np.ndarray) -> np.ndarray:
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.shape[0])
    return inv


def relabel_distributional(state: ChainState) -> ChainState:
    """Reorder distributional components so the K+ non-empty ones come first."""
    perm = _first_appearance_order(state.S, state.K)
    state.S = _inverse(perm)[state.S]
    state.pi = state.pi[perm]
    state.omega = state.omega[:, perm]
    state.Kplus = int(np.unique(state.S).shape[0])
    return state


def relabel_observational(state: ChainState) -> ChainState:
    """Reorder atoms so the L+ non-empty ones come first.

    Atoms are shared by every distributional component, so rows of omega and
    entries of Astar move together.
    """
    perm = _first_appearance_order(state.M, state.L)
    state.M = _inverse(perm)[state.M]
    state.Astar = state.Astar[perm]
    state.omega = state.omega[perm, :]
    state.Lplus = int(np.unique(state.M).shape[0])
    return state


def update_distributional_allocations(
    trace: Trace,
    c: np.ndarray,
    state: ChainState,
    rng: np.random.Generator,
    loglik: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, ChainState, int]:
    """Draw every S_j, then relabel so non-empty components come first.

    Raises:
        SamplerError: if every candidate has log-probability -inf for some j.
    """
    if loglik is None:
        loglik = observation_loglik(trace, c, state)
    logits = distributional_log_probs(loglik, trace.g, trace.J, state.pi, state.omega)
    if not np.all(np.isfinite(logits.max(axis=1))):
        raise SamplerError("all distributional allocation probabilities vanish (corrupted state)")
    state.S = sample_categorical_log(logits, rng)
    relabel_distributional(state)
    return state.S, state, state.Kplus


def observational_log_probs(loglik: np.ndarray, g: np.ndarray, S: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """T x L unnormalized log p(M_t = l | S, rest)."""
    with np.errstate(divide="ignore"):
        log_omega = np.log(omega)
    return log_omega[:, S[g]].T + loglik


def update_observational_allocations(
    trace: Trace,
    c: np.ndarray,
    state: ChainState,
    rng: np.random.Generator,
    loglik: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, ChainState, int]:
    """Draw every M_t given S, then relabel atoms so non-empty ones come first."""
    if loglik is None:
        loglik = observation_loglik(trace, c, state)
    logits = observational_log_probs(loglik, trace.g, state.S, state.omega)
    if not np.all(np.isfinite(logits.max(axis=1))):
        raise SamplerError("all observational allocation probabilities vanish (corrupted state)")
    state.M = sample_categorical_log(logits, rng)
    relabel_observational(state)
    return state.M, state, state.Lplus


# Component counts
def log_K_conditional(
    occupied: np.ndarray, alpha: float, prior: Sequence[float], K_values: np.ndarray
) -> np.ndarray:
    """log p(K | partition, alpha) up to a constant, for each K in K_values.

    p(K) K!/(K-K+)! prod_k Gamma(J_k + alpha/K) / Gamma(alpha/K).
    """
    occupied = np.asarray(occupied, dtype=np.float64)
    K = np.asarray(K_values, dtype=np.float64)
    kplus = occupied.shape[0]
    e = (alpha / K)[:, None]
    gamma_ratio = (gammaln(occupied[None, :] + e) - gammaln(e)).sum(axis=1)
    return log_count_prior(K, tuple(prior)) + gammaln(K + 1) - gammaln(K - kplus + 1) + gamma_ratio


def log_L_conditional(
    occupied: np.ndarray, Lplus: int, beta: float, prior: Sequence[float], L_values: np.ndarray
) -> np.ndarray:
    """log p(L | partition, beta) up to a constant, for each L in L_values.

    ``occupied`` holds the counts N_{l,k} of the L+ non-empty atoms within the
    K+ non-empty distributional components (zeros contribute nothing).
    """
    nonzero = np.asarray(occupied, dtype=np.float64).ravel()
    nonzero = nonzero[nonzero > 0]
    L = np.asarray(L_values, dtype=np.float64)
    f = (beta / L)[:, None]
    gamma_ratio = (gammaln(nonzero[None, :] + f) - gammaln(f)).sum(axis=1)
    return log_count_prior(L, tuple(prior)) + gammaln(L + 1) - gammaln(L - Lplus + 1) + gamma_ratio


def _draw_count(log_weights: np.ndarray, lowest: int, rng: np.random.Generator) -> int:
    return lowest + int(sample_categorical_log(log_weights[None, :], rng)[0])


def sample_K(
    counts: PartitionCounts,
    Kplus: int,
    alpha: float,
    prior: Sequence[float],
    rng: np.random.Generator,
    tail_mass: float = 1e-12,
) -> int:
    """Draw K from its conditional given the distributional partition, over Kplus..K_max."""
    k_max = max(count_support_max(tuple(prior), tail_mass), Kplus)
    K_values = np.arange(Kplus, k_max + 1)
    K = _draw_count(log_K_conditional(counts.Jk[:Kplus], alpha, prior, K_values), Kplus, rng)
    if K == k_max:
        logger.warning("sampled K hit the truncation bound K_max=%d", k_max)
    return K


def sample_L(
    counts: PartitionCounts,
    Lplus: int,
    Kplus: int,
    beta: float,
    prior: Sequence[float],
    rng: np.random.Generator,
    tail_mass: float = 1e-12,
) -> int:
    """Draw L from its conditional given the observational partition, over Lplus..L_max."""
    l_max = max(count_support_max(tuple(prior), tail_mass), Lplus)
    L_values = np.arange(Lplus, l_max + 1)
    L = _draw_count(log_L_conditional(counts.Nlk[:Lplus, :Kplus], Lplus, beta, prior, L_values), Lplus, rng)
    if L == l_max:
        logger.warning("sampled L hit the truncation bound L_max=%d", l_max)
    return L


# Concentrations
def concentration_log_target(
    value: float, groups: Iterable[np.ndarray], n_components: int, a: float, b: float
) -> float:
    """Ga(value; a, b) prior times the Dirichlet-multinomial partition factor.

    Each group is a vector of occupied-component counts drawn under one
    symmetric Dirichlet(value / n_components) weight vector.
    """
    if value <= 0:
        return -np.inf
    total = float(xlogy(a - 1.0, value) - b * value + a * math.log(b) - gammaln(a))
    e = value / n_components
    for counts in groups:
        counts = np.asarray(counts, dtype=np.float64)
        counts = counts[counts > 0]
        if counts.size == 0:
            continue
        total += gammaln(value) - gammaln(counts.sum() + value)
        total += float(np.sum(gammaln(counts + e) - gammaln(e)))
    return total


def concentration_log_accept_ratio(
    current: float, proposal: float, groups: Sequence[np.ndarray], n_components: int, a: float, b: float
) -> float:
    """log MH ratio for a log-scale random walk (includes the Jacobian proposal / current)."""
    return (
        concentration_log_target(proposal, groups, n_components, a, b)
        - concentration_log_target(current, groups, n_components, a, b)
        + math.log(proposal)
        - math.log(current)
    )


def update_concentration(
    current: float,
    groups: Sequence[np.ndarray],
    n_components: int,
    hyper: Tuple[float, float],
    rng: np.random.Generator,
    step: float = 0.5,
) -> Tuple[float, bool]:
    """One log-scale Gaussian random-walk MH step for alpha or beta."""
    a, b = hyper
    proposal = current * math.exp(step * rng.standard_normal())
    log_ratio = concentration_log_accept_ratio(current, proposal, groups, n_components, a, b)
    accepted = bool(rng.random() < math.exp(min(0.0, log_ratio)))
    return (proposal if accepted else current), accepted


def alpha_groups(counts: PartitionCounts, Kplus: int) -> list:
    return [counts.Jk[:Kplus]]


def beta_groups(counts: PartitionCounts, Lplus: int, Kplus: int) -> list:
    return [counts.Nlk[:Lplus, k] for k in range(Kplus)]


# Spike-and-slab weight
def update_p(counts: PartitionCounts, hyper: HyperParams, rng: np.random.Generator) -> float:
    """p ~ Beta(h1p + T - n0, h2p + n0), n0 = #{t: Astar[M_t] = 0}."""
    return float(rng.beta(hyper.h1p + counts.T - counts.n0, hyper.h2p + counts.n0))


def update_p_from_atoms(Astar: np.ndarray, hyper: HyperParams, rng: np.random.Generator) -> float:
    """p ~ Beta(h1p + #{l: A*_l > 0}, h2p + #{l: A*_l = 0}) over all L atoms."""
    positive = int(np.count_nonzero(Astar > 0))
    return float(rng.beta(hyper.h1p + positive, hyper.h2p + Astar.shape[0] - positive))
