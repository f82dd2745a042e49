"""Posterior summaries: spike calls, point partitions, amplitudes, rates, metrics."""
import logging
import math
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import adjusted_rand_score

from fcam.core.exceptions import DrawFileError
from fcam.models.domain import DrawStore, GroundTruth, Trace
from fcam.models.schemas import EvaluationMetrics, IntervalSummary, PartitionSummary, SummaryDocument

logger = logging.getLogger(__name__)

SUMMARIZED_PARAMETERS = ("b", "gamma", "sigma2", "tau2", "p", "alpha", "beta", "Kplus", "Lplus")


def _require_draws(draws: DrawStore) -> None:
    if draws.D == 0:
        raise DrawFileError("no draws found")


def _check_lengths(a: Sequence, b: Sequence, what: str) -> None:
    if len(a) != len(b):
        raise ValueError(f"{what} length mismatch: {len(a)} vs {len(b)}")


def positive_amplitude_matrix(draws: DrawStore, items: Optional[np.ndarray] = None) -> np.ndarray:
    """D x n boolean matrix of Astar[M_t] > 0, optionally restricted to ``items``."""
    rows = []
    for d in range(draws.D):
        M = draws.M[d] if items is None else draws.M[d][items]
        rows.append(draws.Astar[d][M] > 0.0)
    return np.vstack(rows)


# Spike detection
def detect_spikes(draws: DrawStore, threshold: float = 0.6) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior spike probability per frame and calls with prob > threshold.

    Raises:
        DrawFileError: if ``draws`` is empty.
    """
    _require_draws(draws)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    counts = np.zeros(draws.T)
    for d in range(draws.D):
        counts += draws.amplitudes(d) > 0.0
    spike_prob = counts / draws.D
    return spike_prob, spike_prob > threshold


def posterior_mean_amplitude(draws: DrawStore) -> np.ndarray:
    _require_draws(draws)
    total = np.zeros(draws.T)
    for d in range(draws.D):
        total += draws.amplitudes(d)
    return total / draws.D


# Partitions
def canonical_labels(labels: Sequence[int]) -> np.ndarray:
    """Relabel to 0..k-1 in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    return order[inverse.ravel()].astype(np.int64)


def _one_hot(labels: np.ndarray) -> np.ndarray:
    k = int(labels.max()) + 1 if labels.size else 0
    Z = np.zeros((labels.shape[0], k))
    Z[np.arange(labels.shape[0]), labels] = 1.0
    return Z


def posterior_similarity(
    draws: DrawStore, which: str = "observational", items: Optional[np.ndarray] = None
) -> np.ndarray:
    """Fraction of draws in which each pair of items shares a cluster.

    ``which`` selects time points ("observational", labels M) or conditions
    ("distributional", labels S). ``items`` restricts the matrix to a subset.
    """
    _require_draws(draws)
    if which not in ("observational", "distributional"):
        raise ValueError(f"which must be 'observational' or 'distributional', got {which!r}")
    rows = draws.M if which == "observational" else draws.S
    n = rows[0].shape[0] if items is None else len(items)
    psm = np.zeros((n, n))
    for labels in rows:
        labels = np.asarray(labels, dtype=np.int64)
        if items is not None:
            labels = labels[items]
        Z = _one_hot(canonical_labels(labels)) if n else np.zeros((0, 0))
        psm += Z @ Z.T
    return psm / draws.D


def vi_lower_bound(partition: np.ndarray, psm: np.ndarray) -> float:
    """Jensen lower bound on the posterior expected variation of information."""
    partition = canonical_labels(partition)
    Z = _one_hot(partition)
    n = partition.shape[0]
    sizes = Z.sum(axis=0)[partition]
    same = (psm @ Z)[np.arange(n), partition]
    totals = psm.sum(axis=1)
    return float(np.mean(np.log2(sizes) + np.log2(totals) - 2.0 * np.log2(same)))


def _cluster_cost(members: np.ndarray, q: np.ndarray) -> float:
    size = int(members.sum())
    if size == 0:
        return 0.0
    return size * math.log2(size) - 2.0 * float(np.sum(np.log2(q[members])))


def greedy_refine(partition: np.ndarray, psm: np.ndarray) -> np.ndarray:
    """One sweep of single-item moves into existing clusters, taking the best improving move.

    The VI bound never increases along the sweep.
    """
    labels = canonical_labels(partition).copy()
    n = labels.shape[0]
    k = int(labels.max()) + 1
    Q = psm @ _one_hot(labels)
    costs = np.array([_cluster_cost(labels == c, Q[:, c]) for c in range(k)])
    for m in range(n):
        a = labels[m]
        leave = labels == a
        leave[m] = False
        q_a = Q[:, a] - psm[:, m]
        cost_a = _cluster_cost(leave, q_a)
        best_delta, best_b, best_cost_b = -1e-12, -1, 0.0
        for b in range(k):
            if b == a or not np.any(labels == b):
                continue
            join = labels == b
            join[m] = True
            cost_b = _cluster_cost(join, Q[:, b] + psm[:, m])
            delta = cost_a + cost_b - costs[a] - costs[b]
            if delta < best_delta:
                best_delta, best_b, best_cost_b = delta, b, cost_b
        if best_b >= 0:
            labels[m] = best_b
            Q[:, a] = q_a
            Q[:, best_b] += psm[:, m]
            costs[a], costs[best_b] = cost_a, best_cost_b
    return canonical_labels(labels)


def minvi_partition(psm: np.ndarray, candidates: Iterable[Sequence[int]]) -> np.ndarray:
    """Candidate partition minimizing the VI lower bound (0-based labels).

    Candidates are the unique canonicalized inputs plus one greedy refinement
    sweep started from the best of them. Ties go to fewer clusters, then to the
    lexicographically smallest labels.

    Raises:
        ValueError: on an empty candidate set or a size mismatch with ``psm``.
    """
    rows = [canonical_labels(c) for c in candidates]
    if not rows:
        raise ValueError("empty candidate set")
    n = psm.shape[0]
    if any(r.shape[0] != n for r in rows):
        raise ValueError(f"candidate length does not match the {n} x {n} similarity matrix")
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    unique = np.unique(np.vstack(rows), axis=0)

    def key(p: np.ndarray) -> Tuple[float, int, Tuple[int, ...]]:
        return (round(vi_lower_bound(p, psm), 10), int(p.max()) + 1, tuple(int(v) for v in p))

    best = min(unique, key=key)
    refined = greedy_refine(best, psm)
    return min((best, refined), key=key)


def observational_point_partition(draws: DrawStore, spike_calls: np.ndarray) -> np.ndarray:
    """1-based minVI labels over the called spikes; 0 elsewhere."""
    items = np.flatnonzero(spike_calls)
    out = np.zeros(draws.T, dtype=np.int64)
    if items.size == 0:
        return out
    psm = posterior_similarity(draws, "observational", items=items)
    candidates = (np.asarray(M)[items] for M in draws.M)
    out[items] = minvi_partition(psm, candidates) + 1
    return out


def distributional_point_partition(draws: DrawStore) -> np.ndarray:
    """1-based minVI labels of the conditions."""
    psm = posterior_similarity(draws, "distributional")
    return minvi_partition(psm, draws.S) + 1


# Metrics
def adjusted_rand_index(p1: Sequence[int], p2: Sequence[int]) -> float:
    """Adjusted Rand index; 1.0 when both partitions are a single identical cluster."""
    _check_lengths(p1, p2, "partition")
    return float(adjusted_rand_score(np.asarray(p1), np.asarray(p2)))


def misclassification_rate(true_spikes: Sequence[bool], called: Sequence[bool]) -> float:
    _check_lengths(true_spikes, called, "spike vector")
    return float(np.mean(np.asarray(true_spikes, dtype=bool) != np.asarray(called, dtype=bool)))


# Intervals
def interval_summary(values: Sequence[float]) -> IntervalSummary:
    """Mean and equal-tailed 95% interval from order statistics.

    The endpoints are the order statistics at ranks ceil(0.025 D) and
    floor(0.975 D), both clamped to at least 1.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    D = v.shape[0]
    if D == 0:
        raise DrawFileError("no draws found")
    lower_rank = max(1, math.ceil(0.025 * D))
    upper_rank = max(1, math.floor(0.975 * D))
    return IntervalSummary(mean=float(v.mean()), lower95=float(v[lower_rank - 1]), upper95=float(v[upper_rank - 1]))


def firing_rate(draws: DrawStore, trace: Trace, condition: int) -> IntervalSummary:
    """Per-draw spikes per second within one condition (0-based index)."""
    _require_draws(draws)
    members = np.flatnonzero(trace.g == condition)
    if members.size == 0:
        raise ValueError(f"condition {condition} has no time points")
    positive = positive_amplitude_matrix(draws, members)
    rates = positive.sum(axis=1) * trace.frame_rate_hz / members.size
    return interval_summary(rates)


def cluster_amplitudes(draws: DrawStore, point_partition: Sequence[int]) -> Dict[int, float]:
    """Per-cluster amplitude: mean over members within a draw, then over draws.

    Label 0 marks frames outside every cluster.

    Raises:
        ValueError: if a label between 1 and the largest label has no members.
    """
    _require_draws(draws)
    labels = np.asarray(point_partition, dtype=np.int64)
    _check_lengths(labels, draws.M[0], "partition")
    items = np.flatnonzero(labels > 0)
    if items.size == 0:
        return {}
    k = int(labels.max())
    sizes = np.bincount(labels[items] - 1, minlength=k)
    if np.any(sizes == 0):
        raise ValueError(f"empty cluster {int(np.flatnonzero(sizes == 0)[0]) + 1} in point partition")
    Z = _one_hot(labels[items] - 1)
    amplitudes = np.vstack([draws.Astar[d][draws.M[d][items]] for d in range(draws.D)])
    per_draw = (amplitudes @ Z) / sizes
    return {label + 1: float(value) for label, value in enumerate(per_draw.mean(axis=0))}


class SummaryService:
    """Service for turning posterior draws into summaries and metrics."""

    def __init__(self, threshold: float = 0.6):
        self.threshold = threshold

    def summarize(self, draws: DrawStore, trace: Trace) -> SummaryDocument:
        """Build the summary document for a trace and its pooled draws."""
        _require_draws(draws)
        _check_lengths(trace.y, draws.M[0], "trace and draws T")
        spike_prob, spike_calls = detect_spikes(draws, self.threshold)
        obs_partition = observational_point_partition(draws, spike_calls)
        dist_partition = distributional_point_partition(draws)
        partition = PartitionSummary(
            spike_calls=spike_calls.tolist(),
            spike_prob=spike_prob.tolist(),
            obs_partition=obs_partition.tolist(),
            dist_partition=dist_partition.tolist(),
            cluster_amplitudes=cluster_amplitudes(draws, obs_partition),
            firing_rate_per_condition={j + 1: firing_rate(draws, trace, j) for j in range(trace.J)},
        )
        called = np.flatnonzero(spike_calls)
        logger.info(
            "summarized %d draws: %d spike calls, %d amplitude clusters, %d distributional clusters",
            draws.D,
            called.size,
            int(obs_partition.max()),
            int(dist_partition.max()) if dist_partition.size else 0,
        )
        return SummaryDocument(
            T=trace.T,
            J=trace.J,
            draws=draws.D,
            threshold=self.threshold,
            condition_labels=list(trace.labels),
            spike_times=[int(v) for v in trace.t[called]],
            spike_probabilities=spike_prob[called].tolist(),
            partition=partition,
            parameters={name: interval_summary(draws.scalar(name)) for name in SUMMARIZED_PARAMETERS},
            distributional_similarity=posterior_similarity(draws, "distributional").tolist(),
        )

    def plot_frame(self, draws: DrawStore, trace: Trace, summary: SummaryDocument) -> pd.DataFrame:
        """Plot-ready table: t, y, spike_prob, amplitude_label, A_mean (0 off calls)."""
        calls = np.asarray(summary.partition.spike_calls, dtype=bool)
        A_mean = np.where(calls, posterior_mean_amplitude(draws), 0.0)
        return pd.DataFrame(
            {
                "t": trace.t,
                "y": trace.y,
                "spike_prob": summary.partition.spike_prob,
                "amplitude_label": summary.partition.obs_partition,
                "A_mean": A_mean,
            }
        )

    def evaluate(self, summary: SummaryDocument, truth: pd.DataFrame) -> EvaluationMetrics:
        """Compare a summary with a ground-truth table (columns as written by simulate).

        Raises:
            ValueError: if the lengths differ or a condition is missing from the truth.
        """
        if len(truth) != summary.T:
            raise ValueError(f"length mismatch: truth has T={len(truth)}, summary has T={summary.T}")
        truth = truth.sort_values("t", kind="stable")
        dist_by_condition = truth.groupby("condition", sort=False)["dist_label"].first()
        missing = [c for c in summary.condition_labels if c not in dist_by_condition.index]
        if missing:
            raise ValueError(f"conditions {missing} are missing from the truth table")
        true_dist = dist_by_condition.loc[summary.condition_labels].to_numpy()
        return EvaluationMetrics(
            misclassification_rate=misclassification_rate(truth["spike_true"].to_numpy(), summary.partition.spike_calls),
            observational_ari=adjusted_rand_index(truth["obs_label"].to_numpy(), summary.partition.obs_partition),
            distributional_ari=adjusted_rand_index(true_dist, summary.partition.dist_partition),
        )

    def evaluate_truth(self, summary: SummaryDocument, truth: GroundTruth) -> EvaluationMetrics:
        """Same as ``evaluate`` for an in-memory GroundTruth (conditions in trace order)."""
        if truth.spike_true.shape[0] != summary.T:
            raise ValueError(f"length mismatch: truth has T={truth.spike_true.shape[0]}, summary has T={summary.T}")
        return EvaluationMetrics(
            misclassification_rate=misclassification_rate(truth.spike_true, summary.partition.spike_calls),
            observational_ari=adjusted_rand_index(truth.obs_labels, summary.partition.obs_partition),
            distributional_ari=adjusted_rand_index(truth.dist_labels, summary.partition.dist_partition),
        )


def get_summary_service(threshold: float = 0.6) -> SummaryService:
    """Get summary service instance."""
    return SummaryService(threshold=threshold)
