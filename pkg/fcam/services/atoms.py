"""Spike-and-slab atom updates.

Each atom A*_l is either exactly 0 (point mass) or a draw from the gamma slab
Ga(hA1, hA2). Given the observations assigned to it, the slab-vs-point
indicator is drawn from the two marginal likelihoods and a slab amplitude is
refreshed by a short reflected random-walk Metropolis chain.

All likelihood terms depend on an atom's residuals r_i = y_i - mu_i only
through (n, mean, within sum of squares), so every atom costs O(1) after one
pass over the data.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp
from scipy.stats import gamma as gamma_dist

from fcam.core.exceptions import QuadratureError
from fcam.models.domain import ChainState, PartitionCounts, Trace
from fcam.models.schemas import HyperParams, SamplerOptions

logger = logging.getLogger(__name__)

MIN_SLAB_AMPLITUDE = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ResidualStats:
    """Sufficient statistics of the residuals assigned to one atom."""

    n: int
    mean: float
    ss: float
    max: float

    @classmethod
    def from_residuals(cls, residuals: Sequence[float]) -> "ResidualStats":
        r = np.asarray(residuals, dtype=np.float64)
        if r.size == 0:
            return cls(n=0, mean=0.0, ss=0.0, max=-np.inf)
        mean = float(r.mean())
        return cls(n=int(r.size), mean=mean, ss=float(np.sum((r - mean) ** 2)), max=float(r.max()))


def atom_residual_stats(residuals: np.ndarray, M: np.ndarray, L: int) -> list:
    """Per-atom ResidualStats for residuals r_t grouped by M_t."""
    n = np.bincount(M, minlength=L)
    sums = np.bincount(M, weights=residuals, minlength=L)
    means = np.divide(sums, n, out=np.zeros(L), where=n > 0)
    ss = np.bincount(M, weights=(residuals - means[M]) ** 2, minlength=L)
    maxima = np.full(L, -np.inf)
    np.maximum.at(maxima, M, residuals)
    return [ResidualStats(n=int(n[l]), mean=float(means[l]), ss=float(ss[l]), max=float(maxima[l])) for l in range(L)]


def point_mass_loglik(stats: ResidualStats, s2: float) -> float:
    """sum_i log N(r_i; 0, s2)."""
    if stats.n == 0:
        return 0.0
    return -0.5 * stats.n * (_LOG_2PI + math.log(s2)) - (stats.ss + stats.n * stats.mean**2) / (2.0 * s2)


def _slab_log_integrand(A: np.ndarray, stats: ResidualStats, s2: float, hA1: float, hA2: float) -> np.ndarray:
    quad = stats.ss + stats.n * (A - stats.mean) ** 2
    loglik = -0.5 * stats.n * (_LOG_2PI + math.log(s2)) - quad / (2.0 * s2)
    return gamma_dist.logpdf(A, hA1, scale=1.0 / hA2) + loglik


def slab_mode(stats: ResidualStats, s2: float, hA1: float, hA2: float) -> Tuple[float, float]:
    """Mode of Ga(A; hA1, hA2) * prod_i N(r_i; A, s2) on A > 0, and the curvature there.

    Newton search on the log density. Falls back to the mean residual clamped
    at 1e-3 when the search produces a non-finite value.
    """
    prec = stats.n / s2

    def grad_hess(A: float) -> Tuple[float, float]:
        g = (hA1 - 1.0) / A - hA2 - prec * (A - stats.mean)
        h = -(hA1 - 1.0) / (A * A) - prec
        return g, h

    A = max(stats.mean, 1e-3) if stats.n else max(hA1 / hA2, 1e-3)
    for _ in range(100):
        g, h = grad_hess(A)
        if not (math.isfinite(g) and math.isfinite(h)) or h >= 0.0:
            break
        proposal = A - g / h
        if proposal <= 0.0:
            proposal = 0.5 * A
        if abs(proposal - A) <= 1e-12 * max(A, 1.0):
            A = proposal
            break
        A = proposal
    g, h = grad_hess(A)
    if not (math.isfinite(A) and math.isfinite(h)) or h >= 0.0:
        logger.warning("Newton search for the slab mode failed; starting from the clamped mean residual")
        A = max(stats.mean, 1e-3)
        h = -prec - hA1 / (A * A)
    return float(A), float(-h)


@lru_cache(maxsize=16)
def _legendre_rule(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return x, np.log(w)


def _composite_log_integral(
    edges: np.ndarray, nodes: int, stats: ResidualStats, s2: float, hA1: float, hA2: float
) -> float:
    x, log_w = _legendre_rule(nodes)
    terms = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        A = half * x + 0.5 * (hi + lo)
        terms.append(_slab_log_integrand(A, stats, s2, hA1, hA2) + log_w + math.log(half))
    return float(logsumexp(np.concatenate(terms)))


def slab_log_marginal_stats(
    stats: ResidualStats,
    s2: float,
    hA1: float,
    hA2: float,
    nodes: int = 128,
    rtol: float = 1e-8,
    max_doublings: int = 4,
) -> float:
    """log of the integral over A > 0 of Ga(A; hA1, hA2) * prod_i N(r_i; A, s2).

    Gauss-Legendre quadrature on [0, A_hi], A_hi = max(0.9999 prior quantile,
    max residual + 8 sqrt(s2)), split into panels around the integrand mode.
    The node count doubles until the relative change drops below ``rtol``.

    Raises:
        QuadratureError: if ``max_doublings`` doublings do not converge.
    """
    if stats.n == 0:
        return 0.0
    mode, curvature = slab_mode(stats, s2, hA1, hA2)
    width = 12.0 / math.sqrt(curvature)
    upper = max(
        float(gamma_dist.ppf(0.9999, hA1, scale=1.0 / hA2)),
        stats.max + 8.0 * math.sqrt(s2),
        mode + width,
    )
    edges = np.unique(np.clip([0.0, mode - width, mode + width, upper], 0.0, upper))

    previous = _composite_log_integral(edges, nodes, stats, s2, hA1, hA2)
    for _ in range(max_doublings):
        nodes *= 2
        current = _composite_log_integral(edges, nodes, stats, s2, hA1, hA2)
        if abs(math.expm1(current - previous)) < rtol:
            return current
        previous = current
    raise QuadratureError(
        f"slab marginal did not converge with {nodes} nodes (n={stats.n}, mean residual={stats.mean:.4g}, s2={s2:.4g})"
    )


def slab_log_marginal(
    mu: Sequence[float],
    s2: float,
    y: Sequence[float],
    hA1: float,
    hA2: float,
    nodes: int = 128,
    rtol: float = 1e-8,
    max_doublings: int = 4,
) -> float:
    """Slab marginal for observations y_i with known offsets mu_i (see slab_log_marginal_stats)."""
    if not s2 > 0:
        raise ValueError(f"s2 must be positive, got {s2}")
    mu = np.asarray(mu, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mu.shape != y.shape:
        raise ValueError(f"mu and y lengths differ ({mu.shape[0]} vs {y.shape[0]})")
    stats = ResidualStats.from_residuals(y - mu)
    return slab_log_marginal_stats(stats, s2, hA1, hA2, nodes=nodes, rtol=rtol, max_doublings=max_doublings)


def slab_log_conditional(A: float, stats: ResidualStats, s2: float, hA1: float, hA2: float) -> float:
    """Unnormalized log density of a slab amplitude given its residuals."""
    if A < MIN_SLAB_AMPLITUDE:
        return -np.inf
    return float(_slab_log_integrand(np.asarray(A), stats, s2, hA1, hA2))


def sample_slab_amplitude(
    stats: ResidualStats,
    s2: float,
    hA1: float,
    hA2: float,
    rng: np.random.Generator,
    steps: int = 10,
    start: Optional[Tuple[float, float]] = None,
) -> Tuple[float, int]:
    """Reflected Gaussian random-walk MH on A > 0, started at the Newton mode.

    Returns the final amplitude and the number of accepted moves. The proposal
    A' = |A + s z| is symmetric on (0, inf).
    """
    mode, curvature = start if start is not None else slab_mode(stats, s2, hA1, hA2)
    scale = 1.0 / math.sqrt(curvature)
    A = max(mode, MIN_SLAB_AMPLITUDE)
    current = slab_log_conditional(A, stats, s2, hA1, hA2)
    accepted = 0
    for _ in range(steps):
        proposal = abs(A + scale * rng.standard_normal())
        target = slab_log_conditional(proposal, stats, s2, hA1, hA2)
        if rng.random() < math.exp(min(0.0, target - current)):
            A, current = proposal, target
            accepted += 1
    return float(A), accepted


def draw_from_base_measure(size: int, p: float, hyper: HyperParams, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` atoms from G_0 = (1 - p) delta_0 + p Ga(hA1, hA2)."""
    slab = rng.random(size) < p
    amplitudes = np.maximum(rng.gamma(hyper.hA1, 1.0 / hyper.hA2, size=size), MIN_SLAB_AMPLITUDE)
    return np.where(slab, amplitudes, 0.0)


def slab_log_odds(stats: ResidualStats, s2: float, p: float, hyper: HyperParams, options: SamplerOptions) -> float:
    """log p(slab | r) - log p(point mass | r)."""
    with np.errstate(divide="ignore"):
        log_p, log_q = np.log(p), np.log1p(-p)
    slab = slab_log_marginal_stats(
        stats,
        s2,
        hyper.hA1,
        hyper.hA2,
        nodes=options.quadrature_nodes,
        rtol=options.quadrature_rtol,
        max_doublings=options.quadrature_max_doublings,
    )
    return float(log_p + slab - log_q - point_mass_loglik(stats, s2))


def update_atoms(
    trace: Trace,
    c: np.ndarray,
    state: ChainState,
    counts: PartitionCounts,
    hyper: HyperParams,
    options: SamplerOptions,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, float]:
    """Refresh every atom given the current allocations.

    Non-empty atoms draw their slab indicator and amplitude from the full
    conditional; empty atoms and atoms without data are drawn from G_0.
    Returns the new Astar and the slab MH acceptance rate of this sweep.
    """
    L = state.L
    Astar = np.zeros(L)
    occupied = counts.Nl[:L] > 0
    if options.prior_only:
        occupied[:] = False

    empty = np.flatnonzero(~occupied)
    if empty.size:
        Astar[empty] = draw_from_base_measure(empty.size, state.p, hyper, rng)

    accepted = proposed = 0
    filled = np.flatnonzero(occupied)
    if filled.size:
        s2 = state.sigma2 + state.tau2
        residuals = trace.y - state.b - state.gamma * c[:-1]
        all_stats = atom_residual_stats(residuals, state.M, L)
        for l in filled:
            stats = all_stats[l]
            log_odds = slab_log_odds(stats, s2, state.p, hyper, options)
            if rng.random() >= expit(log_odds):
                continue
            Astar[l], n_acc = sample_slab_amplitude(
                stats, s2, hyper.hA1, hyper.hA2, rng, steps=options.slab_mh_steps
            )
            accepted += n_acc
            proposed += options.slab_mh_steps
    return Astar, (accepted / proposed if proposed else float("nan"))
