"""Pydantic schemas for configuration, scenarios and emitted summaries."""
import warnings
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator, model_validator

BNBParams = Tuple[PositiveFloat, PositiveFloat, PositiveFloat]


# Prior and sampler configuration
class HyperParams(BaseModel):
    """Fixed prior hyperparameters, including priors on component counts."""

    model_config = ConfigDict(frozen=True)

    b0: float = Field(default=0.0, description="Baseline prior mean")
    B0: PositiveFloat = Field(default=1.0, description="Baseline prior variance")
    C0: PositiveFloat = Field(default=1.0, description="Variance of c_0")
    h1sigma: PositiveFloat = 1.0
    h2sigma: PositiveFloat = 1.0
    h1tau: PositiveFloat = 1.0
    h2tau: PositiveFloat = 1.0
    h1gamma: PositiveFloat = 1.0
    h2gamma: PositiveFloat = 1.0
    h1p: PositiveFloat = 1.0
    h2p: PositiveFloat = 9.0
    hA1: PositiveFloat = Field(default=8.0, description="Gamma slab shape")
    hA2: PositiveFloat = Field(default=8.0, description="Gamma slab rate")
    bnb_K: BNBParams = Field(default=(1.0, 4.0, 3.0), description="(r, a, b) of the prior on K-1")
    bnb_L: BNBParams = Field(default=(1.0, 4.0, 3.0), description="(r, a, b) of the prior on L-1")
    a_alpha: PositiveFloat = 1.0
    b_alpha: PositiveFloat = 1.0
    a_beta: PositiveFloat = 1.0
    b_beta: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _warn_dense_detections(self) -> "HyperParams":
        if self.h1p >= self.h2p:
            warnings.warn(
                f"h1p={self.h1p} >= h2p={self.h2p}: the prior on p does not favor sparse detections.",
                UserWarning,
            )
        return self


class SamplerOptions(BaseModel):
    """Sampler tunables."""

    model_config = ConfigDict(frozen=True)

    slab_mh_steps: int = Field(default=10, ge=1)
    gamma_target_accept: float = Field(default=0.3, gt=0.0, lt=1.0)
    gamma_initial_step: PositiveFloat = 0.5
    concentration_step: PositiveFloat = 0.5
    quadrature_nodes: int = Field(default=128, ge=8)
    quadrature_max_doublings: int = Field(default=4, ge=0)
    quadrature_rtol: PositiveFloat = 1e-8
    bnb_tail_mass: float = Field(default=1e-12, gt=0.0, lt=1e-3)
    allocation_warmup: int = Field(default=500, ge=0, description="Sweeps with condition allocations held fixed")
    p_update_scope: Literal["observations", "atoms"] = "observations"
    prior_only: bool = False


class RunConfig(BaseModel):
    """Complete configuration of a fit."""

    iters: int = Field(default=10_000, ge=0)
    burnin: int = Field(default=7_000, ge=0)
    thin: int = Field(default=2, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    threshold: float = Field(default=0.6, gt=0.0, lt=1.0, description="Spike-call threshold")
    chains: int = Field(default=1, ge=1)
    hyper: HyperParams = Field(default_factory=HyperParams)
    sampler: SamplerOptions = Field(default_factory=SamplerOptions)
    input_path: Optional[Path] = None
    output_dir: Optional[Path] = None

    @model_validator(mode="after")
    def _check_schedule(self) -> "RunConfig":
        if self.iters < self.burnin:
            raise ValueError(f"iters ({self.iters}) must be >= burnin ({self.burnin})")
        return self

    @property
    def retained_draws(self) -> int:
        """Number of post-burn-in draws kept after thinning."""
        kept = self.iters - self.burnin
        return 0 if kept <= 0 else (kept + self.thin - 1) // self.thin


# Simulation scenarios
class ScenarioSpec(BaseModel):
    """Generator settings for one synthetic study design.

    ``spike_prob_per_condition`` may be left unset; the generator then draws
    one probability per distributional cluster uniformly in [0.005, 0.02] and
    gives it to every condition of that cluster.
    """

    J: int = Field(..., ge=1)
    K: int = Field(..., ge=1)
    cluster_of_condition: List[int] = Field(..., description="1-based cluster of each condition")
    amplitude_sets: List[List[PositiveFloat]]
    spike_prob_per_condition: Optional[List[float]] = None
    burst_prob: float = Field(default=0.4, ge=0.0, lt=1.0)
    burst_window: int = Field(default=5, ge=0)
    T_per_condition: int = Field(default=2000, ge=1)
    sigma2: PositiveFloat = 0.05
    tau2: PositiveFloat = 0.01
    b: float = 0.0
    gamma: float = Field(default=0.5, ge=0.0, lt=1.0)

    @field_validator("amplitude_sets")
    @classmethod
    def _sets_nonempty(cls, value: List[List[float]]) -> List[List[float]]:
        if any(len(s) == 0 for s in value):
            raise ValueError("amplitude sets must be nonempty")
        return value

    @model_validator(mode="after")
    def _check_shapes(self) -> "ScenarioSpec":
        if len(self.cluster_of_condition) != self.J:
            raise ValueError(f"cluster_of_condition has {len(self.cluster_of_condition)} entries, expected J={self.J}")
        if len(self.amplitude_sets) != self.K:
            raise ValueError(f"amplitude_sets has {len(self.amplitude_sets)} entries, expected K={self.K}")
        if any(k < 1 or k > self.K for k in self.cluster_of_condition):
            raise ValueError(f"cluster labels must lie in 1..{self.K}")
        probs = self.spike_prob_per_condition
        if probs is not None:
            if len(probs) != self.J:
                raise ValueError(f"spike_prob_per_condition has {len(probs)} entries, expected J={self.J}")
            if any(q < 0.0 or q >= 1.0 for q in probs):
                raise ValueError("spike probabilities must lie in [0, 1)")
        return self

    @property
    def T(self) -> int:
        return self.J * self.T_per_condition


# Emitted documents
class IntervalSummary(BaseModel):
    """Posterior mean with an equal-tailed 95% interval."""

    mean: float
    lower95: float
    upper95: float


class PartitionSummary(BaseModel):
    """Point estimates derived from the posterior draws (labels are 1-based)."""

    spike_calls: List[bool]
    spike_prob: List[float]
    obs_partition: List[int] = Field(..., description="0 marks time points without a spike call")
    dist_partition: List[int]
    cluster_amplitudes: Dict[int, float]
    firing_rate_per_condition: Dict[int, IntervalSummary]


class SummaryDocument(BaseModel):
    """Structured output of the summarize command."""

    T: int
    J: int
    draws: int
    threshold: float
    condition_labels: List[str]
    spike_times: List[int]
    spike_probabilities: List[float]
    partition: PartitionSummary
    parameters: Dict[str, IntervalSummary]
    distributional_similarity: List[List[float]]


class EvaluationMetrics(BaseModel):
    """Agreement between a fitted summary and the simulation truth."""

    misclassification_rate: float
    observational_ari: float
    distributional_ari: float


class RunMetadata(BaseModel):
    """Written next to the draw files so summaries can be rebuilt."""

    config: RunConfig
    condition_labels: List[str]
    frame_rate_hz: PositiveFloat
    T: int
    J: int
    chain_files: List[str]
