from typing import Literal

from pydantic import BaseModel

from expertbounds.datatypes.benchmark_types import CaseTag
from expertbounds.datatypes.detection_types import CoverageKind, ResponseAction
from expertbounds.datatypes.model_types import ReliabilityBin

INFINITE = "infinite"
Infinite = Literal["infinite"]


class DecisionRecord(BaseModel):
    """One query of the evaluation split as the system handled it.

    ``case_tag``, ``owner_domain``, ``cluster_id``, ``class_label``, ``correct`` and the
    ``owner_expert_*`` / ``counterpart_*`` columns are oracle annotations; every other field
    is observable at inference time.
    """

    query_id: int
    case_tag: CaseTag
    owner_domain: str
    cluster_id: int
    class_label: int
    prediction: int
    correct: bool
    confidence: float
    raw_confidence: float
    prediction_entropy: float
    reference_entropy: float | None
    routed_expert: str
    selected: list[str]
    selected_weights: list[float]
    routing_entropy: float
    margin: float
    min_ood: float
    max_affinity: float
    mean_jsd: float | None
    predictive_variance: float | None
    vote_disagreement: float | None
    comparable_confidence: bool | None
    meta_reliability: float | None
    verdict: CoverageKind
    action: ResponseAction
    owner_expert_confidence: float | None
    owner_expert_correct: bool | None
    counterpart_expert: str | None
    counterpart_confidence: float | None
    counterpart_correct: bool | None


class ExpertMonitoring(BaseModel):
    """Inference-time aggregates for queries routed (top-1) to one expert."""

    domain_id: str
    total_queries: int
    avg_routing_entropy: float
    avg_disagreement: float | None
    avg_reliability: float | None
    verdict_counts: dict[str, int]
    action_counts: dict[str, int]


class GlobalMonitoring(BaseModel):
    """Inference-time aggregates across all queries."""

    total_queries: int
    avg_routing_entropy: float
    avg_disagreement: float | None
    abstention_rate: float
    verdict_counts: dict[str, int]
    action_counts: dict[str, int]
    per_expert: list[ExpertMonitoring]


class DetectorRow(BaseModel):
    """Detection quality of one score for flagging boundary and gap queries."""

    detector: str
    status: Literal["ok", "not_applicable"]
    auroc: float | None = None
    pr_auc: float | None = None
    auroc_boundary: float | None = None
    auroc_gap: float | None = None
    aurc: float | None = None
    precision_at_coverage: float | None = None


class CurvePoint(BaseModel):
    """One abstention threshold of a risk-coverage sweep."""

    detector: str
    threshold: float | Infinite
    coverage: float
    precision: float


class TagStats(BaseModel):
    """Confidence and accuracy of the system on one case tag."""

    tag: CaseTag
    count: int
    mean_confidence: float
    accuracy: float
    dissociation: float


class PhenotypeBlock(BaseModel):
    """The confident-but-wrong signature, per case tag."""

    per_tag: list[TagStats]
    boundary_localization_ratio: float | Infinite
    ece: float
    reliability: list[ReliabilityBin]
    note: str


class FalseFriendRow(BaseModel):
    """One expert answering the other pair member's boundary samples."""

    pair: str
    expert: str
    other_owner: str
    boundary_samples: int
    boundary_accuracy: float
    boundary_confidence: float
    in_domain_confidence: float
    confidence_gap: float


class EntropyDistance(BaseModel):
    """Rank correlation between prediction entropy and distance to the nearest expert."""

    spearman: float | None
    spearman_reference: float | None
    samples: int


class RoutingSummary(BaseModel):
    """Router behavior on the evaluation split."""

    top1_accuracy_in_domain: float | None
    mean_entropy_by_tag: dict[str, float]


class VerdictRow(BaseModel):
    """How often each verdict was reached on one case tag."""

    tag: CaseTag
    in_coverage: int
    boundary_violation: int
    coverage_gap: int


class RunMetadata(BaseModel):
    """What a report was computed from."""

    config_hash: str
    benchmark_hash: str
    seed: int
    queries: int
    coverage_target: float
    label_source: str
    switches: dict[str, str]


class MetricsReport(BaseModel):
    """Everything the evaluation stage measures; recomputable from the decision log alone."""

    metadata: RunMetadata
    detectors: list[DetectorRow]
    risk_coverage: list[CurvePoint]
    phenotype: PhenotypeBlock
    false_friends: list[FalseFriendRow]
    entropy_distance: EntropyDistance
    routing: RoutingSummary
    verdicts: list[VerdictRow]


class RunManifest(BaseModel):
    """Stage bookkeeping of a run; kept apart from the metrics so the report stays reproducible."""

    config_hash: str
    benchmark_hash: str | None = None
    stages_completed: list[str] = []
    timings_s: dict[str, float] = {}
    incomplete: bool = True
    failed_stage: str | None = None
    error: str | None = None


class MetricDelta(BaseModel):
    """One metric of two runs side by side; ``delta`` is ``b - a`` when both sides are finite numbers."""

    section: str
    key: str
    metric: str
    a: float | Infinite | None
    b: float | Infinite | None
    delta: float | None


class ComparisonReport(BaseModel):
    """Per-metric deltas between two runs on the same benchmark."""

    benchmark_hash: str
    config_hash_a: str
    config_hash_b: str
    deltas: list[MetricDelta]
