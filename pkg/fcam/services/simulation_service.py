"""Synthetic traces with known spikes, amplitude clusters and condition clusters."""
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from fcam.core.config import get_settings
from fcam.core.exceptions import ConfigError, FcamError
from fcam.models.domain import GroundTruth, Trace
from fcam.models.schemas import EvaluationMetrics, RunConfig, ScenarioSpec
from fcam.services.ingestion_service import trace_to_frame, validate_trace
from fcam.services.sampler_service import SamplerService
from fcam.services.summary_service import SummaryService
from fcam.utils.loaders import write_frame

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]

_BUILTIN_AMPLITUDES: Dict[int, List[List[float]]] = {
    1: [
        [0.35, 0.89, 1.15, 1.80, 2.20],
        [0.65, 0.89, 1.40, 1.80],
        [0.35, 0.65, 1.15],
        [0.35, 0.89, 1.60],
    ],
    2: [
        [0.3, 0.5, 0.7, 0.9, 1.1, 1.5],
        [0.3, 0.9, 1.5, 1.8],
        [0.5, 0.9, 1.5],
    ],
    3: [
        [0.3, 0.5, 0.7, 0.9, 1.1],
        [0.3, 0.9, 1.1, 1.3],
        [0.7, 0.9, 1.3],
    ],
}
_BUILTIN_CONDITIONS = {1: 6, 2: 4, 3: 5}

SPIKE_PROB_RANGE = (0.005, 0.02)
METRIC_COLUMNS = ("misclassification_rate", "observational_ari", "distributional_ari")


def builtin_scenario(scenario_id: int, **overrides) -> ScenarioSpec:
    """One of the three built-in designs; condition j belongs to cluster (j mod K) + 1.

    Raises:
        ConfigError: for an unknown id.
    """
    if scenario_id not in _BUILTIN_AMPLITUDES:
        raise ConfigError(f"unknown scenario {scenario_id} (expected 1, 2 or 3)")
    sets = _BUILTIN_AMPLITUDES[scenario_id]
    J, K = _BUILTIN_CONDITIONS[scenario_id], len(sets)
    fields = dict(J=J, K=K, cluster_of_condition=[j % K + 1 for j in range(J)], amplitude_sets=sets)
    fields.update(overrides)
    return ScenarioSpec(**fields)


def condition_name(j: int) -> str:
    return f"cond{j + 1}"


def expected_spike_fraction(position: int, spike_prob: float, burst_prob: float, burst_window: int) -> float:
    """Exact P(spike at the given 0-based frame of a condition block)."""
    follow = min(position, burst_window)
    return 1.0 - (1.0 - spike_prob) * (1.0 - spike_prob * burst_prob) ** follow


def default_spike_probs(spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    """One rate per distributional cluster, uniform on SPIKE_PROB_RANGE, shared by its conditions.

    The spike rate is part of a condition's response distribution, so conditions
    of one cluster fire at the same rate.
    """
    cluster_probs = rng.uniform(*SPIKE_PROB_RANGE, size=spec.K)
    return cluster_probs[np.asarray(spec.cluster_of_condition) - 1]


def _spike_events(n: int, spike_prob: float, spec: ScenarioSpec, rng: np.random.Generator) -> np.ndarray:
    primary = rng.random(n) < spike_prob
    spikes = primary.copy()
    for offset in range(1, min(spec.burst_window, n - 1) + 1):
        follow = rng.random(n - offset) < spec.burst_prob
        spikes[offset:] |= primary[:-offset] & follow
    return spikes


def generate(spec: ScenarioSpec, seed: Seed) -> Tuple[Trace, GroundTruth]:
    """Simulate one trace and its ground truth.

    Each condition block gets Bernoulli primary events, follow-up spikes in the
    next ``burst_window`` frames, and amplitudes drawn uniformly from its
    cluster's set. The calcium path starts at c_0 = 0.
    """
    rng = np.random.default_rng(seed)
    probs = (
        np.asarray(spec.spike_prob_per_condition, dtype=np.float64)
        if spec.spike_prob_per_condition is not None
        else default_spike_probs(spec, rng)
    )
    n = spec.T_per_condition
    blocks = []
    for j in range(spec.J):
        amplitudes = np.asarray(spec.amplitude_sets[spec.cluster_of_condition[j] - 1])
        spikes = _spike_events(n, probs[j], spec, rng)
        drawn = amplitudes[rng.integers(amplitudes.size, size=n)]
        blocks.append(np.where(spikes, drawn, 0.0))
    A = np.concatenate(blocks)
    T = A.shape[0]
    condition = np.repeat(np.arange(spec.J), n)

    state_noise = rng.normal(0.0, np.sqrt(spec.tau2), size=T)
    obs_noise = rng.normal(0.0, np.sqrt(spec.sigma2), size=T)
    c = np.concatenate(([0.0], lfilter([1.0], [1.0, -spec.gamma], A + state_noise)))
    y = spec.b + c[1:] + obs_noise

    spike_true = A > 0.0
    levels = np.unique(np.concatenate([np.asarray(s) for s in spec.amplitude_sets]))
    obs_labels = np.where(spike_true, np.searchsorted(levels, A) + 1, 0)
    frame = pd.DataFrame(
        {"t": np.arange(1, T + 1), "y": y, "condition": [condition_name(j) for j in condition]}
    )
    trace = validate_trace(frame)
    truth = GroundTruth(
        A_true=A,
        spike_true=spike_true,
        obs_labels=obs_labels.astype(np.int64),
        dist_labels=np.asarray(spec.cluster_of_condition, dtype=np.int64),
        condition=condition,
        c_true=c,
        state_noise=state_noise,
        obs_noise=obs_noise,
    )
    logger.debug("generated T=%d with %d spikes across %d conditions", T, int(spike_true.sum()), spec.J)
    return trace, truth


def truth_to_frame(trace: Trace, truth: GroundTruth) -> pd.DataFrame:
    """Ground truth in the truth.csv layout (labels 1-based, 0 = no spike)."""
    return pd.DataFrame(
        {
            "t": trace.t,
            "A_true": truth.A_true,
            "spike_true": truth.spike_true.astype(np.int64),
            "obs_label": truth.obs_labels,
            "dist_label": truth.dist_labels[truth.condition],
            "condition": np.asarray(trace.labels, dtype=object)[trace.g],
        }
    )


def write_simulation(trace: Trace, truth: GroundTruth, out_dir: Union[str, Path]) -> Tuple[Path, Path]:
    """Write trace.csv and truth.csv into ``out_dir``."""
    out_dir = Path(out_dir)
    trace_path = write_frame(trace_to_frame(trace), out_dir / "trace.csv")
    truth_path = write_frame(truth_to_frame(trace, truth), out_dir / "truth.csv")
    return trace_path, truth_path


def fit_and_evaluate(trace: Trace, truth: GroundTruth, config: RunConfig) -> EvaluationMetrics:
    """Fit in-process and compare the summary against the truth."""
    draws = SamplerService(max_workers=1).fit(trace, config)
    summary = SummaryService(threshold=config.threshold).summarize(draws, trace)
    return SummaryService(threshold=config.threshold).evaluate_truth(summary, truth)


def _run_replicate(spec: ScenarioSpec, config: RunConfig, replicate: int, seed: np.random.SeedSequence) -> dict:
    data_seed, fit_seed = seed.spawn(2)
    trace, truth = generate(spec, data_seed)
    fit_config = config.model_copy(update={"seed": int(fit_seed.generate_state(1, dtype=np.uint64)[0])})
    try:
        metrics = fit_and_evaluate(trace, truth, fit_config)
    except FcamError as e:
        raise type(e)(f"replicate {replicate}: {e}") from e
    return {"replicate": replicate, **metrics.model_dump()}


def replicate_study(
    scenario: Union[int, ScenarioSpec],
    n_reps: int,
    config: RunConfig,
    seed: Optional[int] = None,
    max_workers: Optional[int] = None,
) -> pd.DataFrame:
    """Simulate and fit ``n_reps`` independent data sets; one metrics row per replicate."""
    if n_reps < 1:
        raise ConfigError(f"n_reps must be at least 1, got {n_reps}")
    spec = builtin_scenario(scenario) if isinstance(scenario, int) else scenario
    seeds = np.random.SeedSequence(config.seed if seed is None else seed).spawn(n_reps)
    workers = min(max_workers or get_settings().max_workers, n_reps)
    logger.info("replicate study: %d replicate(s) of T=%d on %d worker(s)", n_reps, spec.T, workers)
    if workers == 1:
        rows = [_run_replicate(spec, config, r, s) for r, s in enumerate(seeds)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_replicate, spec, config, r, s) for r, s in enumerate(seeds)]
            rows = [f.result() for f in futures]
    return pd.DataFrame(rows, columns=["replicate", *METRIC_COLUMNS])


def sensitivity_study(
    scenario: Union[int, ScenarioSpec],
    hA_values: Sequence[float],
    config: RunConfig,
    seed: Optional[int] = None,
) -> pd.DataFrame:
    """Refit one simulated data set with hA1 = hA2 = h for each h in ``hA_values``."""
    if not hA_values:
        raise ConfigError("at least one hA value is required")
    spec = builtin_scenario(scenario) if isinstance(scenario, int) else scenario
    data_seed = np.random.SeedSequence(config.seed if seed is None else seed)
    trace, truth = generate(spec, data_seed)
    rows = []
    for h in hA_values:
        hyper = config.hyper.model_copy(update={"hA1": float(h), "hA2": float(h)})
        metrics = fit_and_evaluate(trace, truth, config.model_copy(update={"hyper": hyper}))
        logger.info("hA=%g: misclassification %.4f", h, metrics.misclassification_rate)
        rows.append({"hA": float(h), **metrics.model_dump()})
    return pd.DataFrame(rows, columns=["hA", *METRIC_COLUMNS])


def summarize_study(table: pd.DataFrame) -> Dict[str, float]:
    """Median of each metric column."""
    return {f"median_{name}": float(table[name].median()) for name in METRIC_COLUMNS}


class SimulationService:
    """Service for synthetic data sets and simulation studies."""

    def simulate(
        self, spec: ScenarioSpec, seed: int, out_dir: Union[str, Path]
    ) -> Tuple[Trace, GroundTruth, Tuple[Path, Path]]:
        """Generate one data set and write trace.csv and truth.csv."""
        trace, truth = generate(spec, seed)
        paths = write_simulation(trace, truth, out_dir)
        logger.info(
            "simulated T=%d, J=%d, %d spikes -> %s", trace.T, trace.J, int(truth.spike_true.sum()), paths[0].parent
        )
        return trace, truth, paths


def get_simulation_service() -> SimulationService:
    """Get simulation service instance."""
    return SimulationService()
