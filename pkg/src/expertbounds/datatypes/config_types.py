from enum import StrEnum

from pydantic import BaseModel, ConfigDict, Field

from expertbounds.datatypes.benchmark_types import BenchmarkConfig
from expertbounds.datatypes.detection_types import MetaInputMode, ResponsePolicy


class CalibrationMode(StrEnum):
    """Which specialist-level calibration the pipeline applies."""

    OFF = "off"
    TEMPERATURE = "temperature"
    ADAPTIVE = "adaptive"
    BOUNDARY_AWARE = "boundary_aware"


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ExpertTrainingConfig(_Section):
    """Specialist classifier training."""

    hidden: int = Field(default=32, ge=1)
    epochs: int = Field(default=50, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    streams: int = Field(default=4, ge=1, description="Residual streams when stream mixing is on")


class EmbeddingConfig(_Section):
    """Shared embedding network and its contrastive training."""

    hidden: int = Field(default=16, ge=1)
    dim: int = Field(default=8, ge=1)
    margin: float = Field(default=1.0, gt=0.0)
    epochs: int = Field(default=30, ge=0)
    learning_rate: float = Field(default=0.05, gt=0.0)
    batch_size: int = Field(default=32, ge=1)


class RouterConfig(_Section):
    """Gating network, top-k selection and auxiliary loss weights."""

    hidden: int = Field(default=16, ge=1)
    tau: float = Field(default=0.5, gt=0.0, lt=1.0)
    k: int = Field(default=2, ge=1)
    lambda_lb: float = Field(default=0.01, ge=0.0)
    lambda_boundary: float = Field(default=0.1, ge=0.0)
    lambda_coverage: float = Field(default=0.1, ge=0.0)
    kernel_sigma: float = Field(default=1.0, gt=0.0)
    epochs: int = Field(default=40, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0)
    batch_size: int = Field(default=64, ge=1)


class CalibrationConfig(_Section):
    """Temperature fitting and boundary-aware fine-tuning."""

    lambda_flat: float = Field(default=0.5, ge=0.0)
    finetune_epochs: int = Field(default=20, ge=0)
    finetune_learning_rate: float = Field(default=0.05, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    noise_samples: int = Field(default=200, ge=0, description="Foreign uniform-noise inputs flattened alongside boundary ones")
    adversarial_seeds: int = Field(default=200, ge=0, description="Boundary rows seeding the confident-wrong search")
    adversarial_steps: int = Field(default=10, ge=1)
    adversarial_step_size: float = Field(default=0.05, gt=0.0)
    adversarial_radius: float = Field(default=0.3, gt=0.0, description="Max per-dimension distance from the seed")
    adversarial_min_confidence: float = Field(default=0.8, gt=0.0, le=1.0)
    finetune_before_temperature: bool = True
    ece_bins: int = Field(default=15, ge=1)


class MetaExpertConfig(_Section):
    """Meta-expert architecture and training."""

    input_mode: MetaInputMode = MetaInputMode.EMBEDDING_PLUS_SIGNALS
    hidden: int = Field(default=32, ge=1)
    epochs: int = Field(default=60, ge=0)
    learning_rate: float = Field(default=0.1, gt=0.0)
    batch_size: int = Field(default=32, ge=1)


class DetectionConfig(_Section):
    """Verdict thresholds and evaluation knobs."""

    theta_ood: float | None = Field(default=None, gt=0.0, description="Unset: quantile of validation in-domain ood")
    theta_ood_quantile: float = Field(default=0.99, gt=0.0, lt=1.0)
    theta_jsd: float = Field(default=0.1, gt=0.0)
    gamma: float = Field(default=0.5, gt=0.0, le=1.0)
    coverage_target: float = Field(default=0.8, gt=0.0, le=1.0)


class InterventionSwitches(_Section):
    """Independent on/off switches for every intervention."""

    multi_expert_on: bool = True
    boundary_losses_on: bool = True
    calibration_mode: CalibrationMode = CalibrationMode.BOUNDARY_AWARE
    meta_expert_on: bool = True
    mhc_on: bool = False
    contrastive_on: bool = True
    adversarial_boundary_on: bool = False


class ExperimentConfig(_Section):
    """Everything a pipeline run needs."""

    benchmark: BenchmarkConfig = BenchmarkConfig()
    experts: ExpertTrainingConfig = ExpertTrainingConfig()
    embedding: EmbeddingConfig = EmbeddingConfig()
    router: RouterConfig = RouterConfig()
    calibration: CalibrationConfig = CalibrationConfig()
    meta: MetaExpertConfig = MetaExpertConfig()
    detection: DetectionConfig = DetectionConfig()
    policy: ResponsePolicy = ResponsePolicy()
    switches: InterventionSwitches = InterventionSwitches()
    seed: int = 42
