from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field

from expertbounds.datatypes.detection_types import MetaClass, MetaInputMode
from expertbounds.errors import DimensionError, ParameterError
from expertbounds.numerics.mlp import MlpParams

Vec = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class ExpertModel:
    """A specialist classifier plus the shared embedding network it reads its latent space from."""

    domain_id: str
    params: MlpParams
    embed_params: MlpParams

    @property
    def classes(self) -> int:
        """Number of output classes."""
        return self.params.output_dim

    @property
    def embedding_dim(self) -> int:
        """Width of the embedding space."""
        return self.embed_params.output_dim


@dataclass(frozen=True, eq=False)
class ExpertStats:
    """Training-distribution statistics of one expert in embedding space."""

    centroid: Vec
    variance: Vec
    sample_count: int

    def __post_init__(self) -> None:
        if self.centroid.shape != self.variance.shape or self.centroid.ndim != 1:
            raise DimensionError(f"centroid {self.centroid.shape} and variance {self.variance.shape} do not match")

    @property
    def dim(self) -> int:
        """Embedding dimension."""
        return int(self.centroid.size)


class TrainReport(BaseModel):
    """Summary of one training run."""

    epochs_run: int = Field(ge=0)
    initial_loss: float
    final_loss: float
    train_accuracy: float = Field(ge=0.0, le=1.0)
    val_accuracy: float = Field(ge=0.0, le=1.0)


@dataclass(frozen=True, eq=False)
class RouterParams:
    """Gating network and routing hyperparameters."""

    gate_net: MlpParams
    tau: float = 0.5
    k: int = 2
    lambda_lb: float = 0.01
    lambda_boundary: float = 0.1
    lambda_coverage: float = 0.1
    kernel_sigma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.tau < 1.0:
            raise ParameterError(f"tau must lie in (0, 1), got {self.tau}")
        if not 1 <= self.k <= self.experts:
            raise ParameterError(f"k must lie in [1, {self.experts}], got {self.k}")
        if min(self.lambda_lb, self.lambda_boundary, self.lambda_coverage) < 0.0:
            raise ParameterError("loss weights must be nonnegative")
        if self.kernel_sigma <= 0.0:
            raise ParameterError(f"kernel_sigma must be positive, got {self.kernel_sigma}")

    @property
    def experts(self) -> int:
        """Number of experts K the gate scores."""
        return self.gate_net.output_dim


@dataclass(frozen=True, eq=False)
class RoutingDecision:
    """Everything the router computed for one query."""

    raw_affinities: Vec
    gate_logits: Vec
    gate_weights: Vec
    selected: tuple[int, ...]
    selected_weights: Vec
    routing_entropy: float
    margin: float
    distances: Vec


class RouterLossTerms(BaseModel):
    """Per-epoch router loss decomposition (means over the epoch's samples)."""

    task_ce: float
    load_balance: float
    boundary: float
    coverage: float
    total: float


class TemperatureParams(BaseModel):
    """Scalar temperature."""

    temperature: float = Field(gt=0.0)


class AdaptiveTemperatureParams(BaseModel):
    """Input-dependent temperature ``T(x) = exp(a * H_norm(x) + b)``."""

    a: float
    b: float

    def temperature(self, normalized_entropy: float | Vec) -> float | Vec:
        """Temperature for a normalized raw entropy in [0, 1]."""
        return np.exp(self.a * normalized_entropy + self.b)


class ReliabilityBin(BaseModel):
    """One equal-width confidence bin."""

    lower: float
    upper: float
    count: int
    mean_confidence: float | None
    accuracy: float | None


class CalibrationReport(BaseModel):
    """Expected calibration error plus the reliability table it came from."""

    ece: float = Field(ge=0.0, le=1.0)
    bin_count: int
    bins: list[ReliabilityBin]


@dataclass(frozen=True, eq=False)
class MetaExpertModel:
    """Classifier over system state predicting in_coverage / boundary / gap."""

    params: MlpParams
    input_mode: MetaInputMode

    @property
    def input_dim(self) -> int:
        """Width of the assembled input."""
        return self.params.input_dim

    @property
    def classes(self) -> tuple[MetaClass, ...]:
        """Output classes in logit order."""
        return tuple(MetaClass)
