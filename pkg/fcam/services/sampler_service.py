"""MCMC orchestration: one full sweep, whole chains and multi-chain fits."""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Protocol, Tuple, Union

import numpy as np
import pandas as pd

from fcam.core.config import get_settings
from fcam.core.exceptions import ConfigError, SamplerError
from fcam.models.domain import ChainState, DrawStore, PartitionCounts, Trace
from fcam.models.schemas import HyperParams, RunConfig, SamplerOptions
from fcam.services import nested_mixture as nm
from fcam.services.atoms import draw_from_base_measure, update_atoms
from fcam.services.densities import sample_dirichlet
from fcam.services.state_space import (
    AdaptiveStep,
    ffbs_sample,
    kalman_forward,
    sample_calcium_prior,
    update_baseline,
    update_gamma_mh,
    update_variances,
)
from fcam.utils.diagnostics_logger import DiagnosticsLogger
from fcam.utils.draw_io import DrawFileWriter

logger = logging.getLogger(__name__)


class DrawSink(Protocol):
    def append(self, state: ChainState) -> None: ...


@dataclass
class SweepStats:
    """Acceptance outcomes of one sweep."""

    gamma_accept: bool = False
    alpha_accept: bool = False
    beta_accept: bool = False
    slab_accept: float = math.nan


def initial_state(trace: Trace, hyper: HyperParams) -> ChainState:
    """Deterministic starting point.

    One distributional component per condition, each with its own column of
    omega; two atoms, a point mass and one slab atom taking the frames whose
    fluorescence exceeds the median by two standard deviations.    """
    y = trace.y
    b = float(np.median(y))
    spread = float(np.std(y)) or 1.0
    variance = max(spread**2 / 4.0, 1e-4)
    high = (y - b) > 2.0 * spread
    amplitude = float(np.mean(y[high] - b)) if high.any() else hyper.hA1 / hyper.hA2
    M = high.astype(np.int64)
    J = trace.J
    n_high = np.bincount(trace.g, weights=high, minlength=J)
    n_cond = np.bincount(trace.g, minlength=J).astype(np.float64)
    omega = np.vstack([n_cond - n_high + 1.0, n_high + 1.0]) / (n_cond + 2.0)
    state = ChainState(
        c=np.zeros(trace.T + 1),
        b=b,
        sigma2=variance,
        tau2=variance,
        gamma=0.5,
        p=hyper.h1p / (hyper.h1p + hyper.h2p),
        K=J,
        L=2,
        Kplus=J,
        Lplus=2 if 0 < high.sum() < trace.T else 1,
        pi=np.full(J, 1.0 / J),
        omega=omega,
        Astar=np.array([0.0, max(amplitude, 1e-3)]),
        S=np.arange(J, dtype=np.int64),
        M=M,
        alpha=hyper.a_alpha / hyper.b_alpha,
        beta=hyper.a_beta / hyper.b_beta,
    )
    return nm.relabel_observational(state)


def _resize_components(
    state: ChainState, K: int, L: int, hyper: HyperParams, rng: np.random.Generator
) -> ChainState:
    """Apply newly drawn K and L: redraw pi, new atoms from G_0 and omega."""
    state.K = K
    Jk = np.bincount(state.S, minlength=K).astype(np.float64)
    state.pi = np.ones(1) if K == 1 else sample_dirichlet(state.alpha / K + Jk, rng)

    Astar = np.empty(L)
    Astar[: state.Lplus] = state.Astar[: state.Lplus]
    Astar[state.Lplus :] = draw_from_base_measure(L - state.Lplus, state.p, hyper, rng)
    state.Astar = Astar
    state.L = L
    return state


class ChainRunner:
    """Runs the sampler on one trace.

    The sweep order is: calcium path, baseline, variances, gamma, p, then the
    nested block (weights, distributional and observational allocations,
    atoms, K with pi, L with new atoms and omega, alpha, beta).

    Distributional allocations stay fixed for sweeps below
    ``hold_allocations_until``.
    """

    def __init__(
        self,
        trace: Trace,
        hyper: HyperParams,
        options: SamplerOptions,
        rng: np.random.Generator,
        state: Optional[ChainState] = None,
    ):
        self.trace = trace
        self.hyper = hyper
        self.options = options
        self.rng = rng
        self.state = state if state is not None else initial_state(trace, hyper)
        self.gamma_step = AdaptiveStep(log_step=math.log(options.gamma_initial_step), target=options.gamma_target_accept)
        self.hold_allocations_until = 0

    def _update_path_and_scalars(self, iteration: int) -> SweepStats:
        trace, state, hyper, rng = self.trace, self.state, self.hyper, self.rng
        stats = SweepStats()
        A = state.amplitudes()
        if self.options.prior_only:
            state.c = sample_calcium_prior(A, state.gamma, state.tau2, hyper.C0, rng)
            state.b = float(rng.normal(hyper.b0, math.sqrt(hyper.B0)))
            state.sigma2 = float(1.0 / rng.gamma(hyper.h1sigma, 1.0 / hyper.h2sigma))
            _, state.tau2 = update_variances(trace, state.c, A, state, hyper, rng)
        else:
            cache = kalman_forward(trace, state, A, hyper.C0)
            state.c = ffbs_sample(cache, state, rng)
            state.b = update_baseline(trace, state.c, state, hyper, rng)
            state.sigma2, state.tau2 = update_variances(trace, state.c, A, state, hyper, rng)
        state.gamma, stats.gamma_accept = update_gamma_mh(
            state.c, A, state, hyper, self.gamma_step, rng, iteration=iteration
        )
        if self.options.p_update_scope == "atoms":
            state.p = nm.update_p_from_atoms(state.Astar, hyper, rng)
        else:
            state.p = nm.update_p(PartitionCounts.from_state(state, trace.g), hyper, rng)
        return stats

    def _update_nested_block(self, stats: SweepStats, iteration: int) -> None:
        trace, state, hyper, options, rng = self.trace, self.state, self.hyper, self.options, self.rng
        counts = PartitionCounts.from_state(state, trace.g)
        state.pi = nm.sample_distributional_weights(counts, state.K, state.alpha, rng)
        state.omega = nm.sample_observational_weights(counts, state.L, state.K, state.beta, rng)

        loglik = nm.observation_loglik(trace, state.c, state, prior_only=options.prior_only)
        if iteration >= self.hold_allocations_until:
            nm.update_distributional_allocations(trace, state.c, state, rng, loglik=loglik)
        nm.update_observational_allocations(trace, state.c, state, rng, loglik=loglik)

        counts = PartitionCounts.from_state(state, trace.g)
        state.Astar, stats.slab_accept = update_atoms(trace, state.c, state, counts, hyper, options, rng)

        K = nm.sample_K(counts, state.Kplus, state.alpha, hyper.bnb_K, rng, options.bnb_tail_mass)
        L = nm.sample_L(counts, state.Lplus, state.Kplus, state.beta, hyper.bnb_L, rng, options.bnb_tail_mass)
        _resize_components(state, K, L, hyper, rng)
        counts = PartitionCounts.from_state(state, trace.g)
        state.omega = nm.sample_observational_weights(counts, state.L, state.K, state.beta, rng)

        state.alpha, stats.alpha_accept = nm.update_concentration(
            state.alpha,
            nm.alpha_groups(counts, state.Kplus),
            state.K,
            (hyper.a_alpha, hyper.b_alpha),
            rng,
            step=options.concentration_step,
        )
        state.beta, stats.beta_accept = nm.update_concentration(
            state.beta,
            nm.beta_groups(counts, state.Lplus, state.Kplus),
            state.L,
            (hyper.a_beta, hyper.b_beta),
            rng,
            step=options.concentration_step,
        )

    def step(self, iteration: int) -> SweepStats:
        """One full sweep. Step errors are re-raised with the iteration attached.

        Raises:
            SamplerError: if any update fails.
        """
        try:
            stats = self._update_path_and_scalars(iteration)
            self._update_nested_block(stats, iteration)
        except SamplerError as e:
            if e.iteration is not None:
                raise
            raise type(e)(str(e), iteration=iteration) from e
        except (ValueError, FloatingPointError, ZeroDivisionError, OverflowError) as e:
            raise SamplerError(f"{type(e).__name__}: {e}", iteration=iteration) from e
        return stats


def run_chain(
    trace: Trace,
    hyper: HyperParams,
    config: RunConfig,
    rng: np.random.Generator,
    chain_id: int = 0,
    diagnostics: Optional[DiagnosticsLogger] = None,
    sink: Optional[DrawSink] = None,
    state: Optional[ChainState] = None,
) -> DrawSink:
    """Run one chain and return its retained draws.

    Keeps iterations burnin, burnin + thin, ... below iters. Draws go to
    ``sink`` when given (e.g. a DrawFileWriter), otherwise to a new DrawStore.
    Condition allocations are held for the first
    min(sampler.allocation_warmup, burnin // 2) sweeps.

    Raises:
        ConfigError: if the schedule retains no draws.
        SamplerError: if a sweep fails; carries the iteration index.
    """
    if config.retained_draws == 0:
        raise ConfigError(f"no draws retained (iters={config.iters}, burnin={config.burnin})")
    sink = sink if sink is not None else DrawStore(T=trace.T, J=trace.J)
    DiagnosticsLogger.set_chain(chain_id)
    progress_every = get_settings().FCAM_PROGRESS_EVERY
    runner = ChainRunner(trace, hyper, config.sampler, rng, state=state)
    runner.hold_allocations_until = min(config.sampler.allocation_warmup, config.burnin // 2)
    slab_total = slab_seen = 0.0

    for iteration in range(config.iters):
        if iteration == config.burnin:
            runner.gamma_step.freeze()
        stats = runner.step(iteration)
        state = runner.state
        if not math.isnan(stats.slab_accept):
            slab_total += stats.slab_accept
            slab_seen += 1
        if diagnostics is not None:
            diagnostics.log_iteration(
                iteration,
                state.Kplus,
                state.Lplus,
                state.K,
                state.L,
                stats.gamma_accept,
                stats.alpha_accept,
                stats.beta_accept,
                stats.slab_accept,
                runner.gamma_step.step,
            )
        if iteration >= config.burnin and (iteration - config.burnin) % config.thin == 0:
            sink.append(state)
        if (iteration + 1) % progress_every == 0:
            logger.info(
                "chain %d iteration %d/%d: K+=%d L+=%d gamma=%.3f accept(gamma)=%.2f accept(slab)=%.2f",
                chain_id,
                iteration + 1,
                config.iters,
                state.Kplus,
                state.Lplus,
                state.gamma,
                runner.gamma_step.acceptance_rate,
                slab_total / slab_seen if slab_seen else math.nan,
            )
    return sink


@dataclass
class ChainResult:
    chain_id: int
    path: Path
    draws: int
    diagnostics: pd.DataFrame


def _fit_chain_to_file(
    trace: Trace, config: RunConfig, seed: np.random.SeedSequence, chain_id: int, path: Path
) -> ChainResult:
    diagnostics = DiagnosticsLogger()
    rng = np.random.default_rng(seed)
    with DrawFileWriter(path, trace.T, trace.J) as writer:
        run_chain(trace, config.hyper, config, rng, chain_id=chain_id, diagnostics=diagnostics, sink=writer)
        draws = writer.D
    return ChainResult(chain_id=chain_id, path=path, draws=draws, diagnostics=diagnostics.to_frame())


def chain_seeds(seed: int, chains: int) -> List[np.random.SeedSequence]:
    """Independent per-chain seed sequences spawned from one root seed."""
    return np.random.SeedSequence(seed).spawn(chains)


class SamplerService:
    """Service for fitting the model with one or more chains."""

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers or get_settings().max_workers

    def fit(self, trace: Trace, config: RunConfig) -> DrawStore:
        """Run ``config.chains`` chains in this process and pool their draws."""
        pooled = DrawStore(T=trace.T, J=trace.J)
        for chain_id, seed in enumerate(chain_seeds(config.seed, config.chains)):
            pooled.extend(run_chain(trace, config.hyper, config, np.random.default_rng(seed), chain_id=chain_id))
        return pooled

    def fit_to_directory(
        self, trace: Trace, config: RunConfig, output_dir: Union[str, Path], suffix: str = ".fcd"
    ) -> Tuple[List[ChainResult], pd.DataFrame]:
        """Run chains in worker processes, each streaming to ``chain_<i><suffix>``.

        Returns the per-chain results and the pooled diagnostics table.
        """
        if config.retained_draws == 0:
            raise ConfigError(f"no draws retained (iters={config.iters}, burnin={config.burnin})")
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        seeds = chain_seeds(config.seed, config.chains)
        paths = [output_dir / f"chain_{i}{suffix}" for i in range(config.chains)]
        workers = min(self.max_workers, config.chains)
        logger.info("fitting %d chain(s) on %d worker(s): T=%d, J=%d", config.chains, workers, trace.T, trace.J)

        if workers == 1:
            results = [_fit_chain_to_file(trace, config, s, i, p) for i, (s, p) in enumerate(zip(seeds, paths))]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_fit_chain_to_file, trace, config, s, i, p)
                    for i, (s, p) in enumerate(zip(seeds, paths))
                ]
                results = [f.result() for f in futures]
        diagnostics = pd.concat([r.diagnostics for r in results], ignore_index=True)
        return results, diagnostics


def get_sampler_service(max_workers: Optional[int] = None) -> SamplerService:
    """Get sampler service instance."""
    return SamplerService(max_workers=max_workers)
