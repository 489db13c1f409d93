"""The deployed expert system: one query in, prediction plus coverage verdict out."""

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from expertbounds.calibration.temperature import Calibrator
from expertbounds.datatypes.config_types import InterventionSwitches
from expertbounds.datatypes.detection_types import (
    CoverageVerdict,
    DisagreementReport,
    MetaInputMode,
    ResponseDecision,
    ResponsePolicy,
)
from expertbounds.datatypes.model_types import ExpertModel, ExpertStats, MetaExpertModel, RouterParams, RoutingDecision
from expertbounds.detection.disagreement import activate_experts, disagreement_report, mean_pairwise_jsd_rows
from expertbounds.detection.meta_expert import meta_input_rows, meta_predict
from expertbounds.detection.responses import system_response
from expertbounds.detection.verdict import coverage_verdict
from expertbounds.errors import ConfigError, DimensionError
from expertbounds.experts.embedding import embed
from expertbounds.experts.stats import distance_matrix
from expertbounds.experts.training import expert_logits
from expertbounds.numerics.core import as_finite_vector, entropy, softmax_rows
from expertbounds.numerics.mlp import MlpParams
from expertbounds.router.gating import gate, kernel_affinities, routing_margins

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class SystemSignals:
    """Batch view of the inference-time signals the meta-expert and thresholds are fitted on."""

    embeddings: Array
    outputs: Array
    distances: Array
    affinities: Array
    mean_jsd: Array
    margins: Array

    def meta_inputs(self, mode: MetaInputMode) -> Array:
        """Meta-expert inputs for every row."""
        return meta_input_rows(mode, self.embeddings, self.outputs, self.affinities, self.mean_jsd, self.margins)


@dataclass(frozen=True, eq=False)
class QueryOutcome:
    """Everything the system did for one query."""

    decision: RoutingDecision
    activated_outputs: tuple[Array, ...]
    report: DisagreementReport
    ood: Array
    raw_outputs: Array
    all_outputs: Array
    all_expert_jsd: float
    meta_distribution: Array | None
    meta_reliability: float | None
    verdict: CoverageVerdict
    response: ResponseDecision
    prediction: int
    confidence: float
    raw_confidence: float
    prediction_entropy: float
    reference_entropy: float | None

    @property
    def vote_disagreement(self) -> float | None:
        """1 when the two highest-ranked activated experts vote for different classes, else 0."""
        if len(self.activated_outputs) < 2:
            return None
        first, second = self.activated_outputs[0], self.activated_outputs[1]
        return float(int(np.argmax(first)) != int(np.argmax(second)))


@dataclass(frozen=True, eq=False)
class ExpertSystem:
    """Trained experts, router, calibrators and detectors assembled for inference.

    ``reference_experts`` (the experts before calibration) only feed the diagnostic
    ``reference_entropy``; they never influence a decision.
    """

    domain_ids: tuple[str, ...]
    experts: tuple[ExpertModel, ...]
    stats: tuple[ExpertStats, ...]
    router: RouterParams
    calibrators: tuple[Calibrator, ...]
    meta: MetaExpertModel | None
    theta_ood: float
    theta_jsd: float
    gamma: float
    policy: ResponsePolicy
    switches: InterventionSwitches
    reference_experts: tuple[ExpertModel, ...] | None = None

    def __post_init__(self) -> None:
        k = len(self.domain_ids)
        sizes = {len(self.experts), len(self.stats), len(self.calibrators), self.router.experts}
        if sizes != {k}:
            raise ConfigError(
                f"system for {k} domains has {len(self.experts)} experts, {len(self.stats)} statistics, "
                f"{len(self.calibrators)} calibrators and a router over {self.router.experts}"
            )

    @property
    def embed_params(self) -> MlpParams:
        """Shared embedding network."""
        return self.experts[0].embed_params

    @property
    def active_k(self) -> int:
        """Experts activated per query."""
        return self.router.k if self.switches.multi_expert_on else 1

    @property
    def input_dim(self) -> int:
        """Feature width of a query."""
        return self.experts[0].params.input_dim

    def expert_index(self, domain_id: str) -> int:
        """Position of a domain's expert."""
        return self.domain_ids.index(domain_id)

    def _calibrated_rows(self, raw_logits: Array) -> Array:
        return np.stack([cal.apply(raw_logits[:, i, :]) for i, cal in enumerate(self.calibrators)], axis=1)

    def _raw_logits_rows(self, features: Array) -> Array:
        return np.stack([expert_logits(e, features) for e in self.experts], axis=1)

    def signals_rows(self, features: Array) -> SystemSignals:
        """Embeddings, calibrated outputs of all experts, distances and routing signals for a batch."""
        if features.ndim != 2 or features.shape[1] != self.input_dim:
            raise DimensionError(f"features of shape {features.shape} do not match input width {self.input_dim}")
        embeddings = embed(self.embed_params, features)
        distances = distance_matrix(list(self.stats), embeddings)
        outputs = self._calibrated_rows(self._raw_logits_rows(features))
        return SystemSignals(
            embeddings=embeddings,
            outputs=outputs,
            distances=distances,
            affinities=kernel_affinities(distances, self.router.kernel_sigma),
            mean_jsd=mean_pairwise_jsd_rows(outputs),
            margins=routing_margins(distances),
        )

    def meta_input(self, x: ArrayLike, mode: MetaInputMode) -> Array:
        """Meta-expert input for one query."""
        vec = as_finite_vector(x, "x")
        return self.signals_rows(vec[np.newaxis, :]).meta_inputs(mode)[0]

    def process(self, x: ArrayLike) -> QueryOutcome:
        """Route, activate, judge and respond to one query.

        Raises:
            DimensionError: If ``x`` does not match the system's input width.
        """
        vec = as_finite_vector(x, "x")
        if vec.size != self.input_dim:
            raise DimensionError(f"query has {vec.size} features, system expects {self.input_dim}")
        signals = self.signals_rows(vec[np.newaxis, :])
        decision = gate(self.router, signals.embeddings[0], self.stats, k=self.active_k)

        activated = activate_experts(decision, self.experts, vec, self.calibrators)
        report = disagreement_report(decision, activated, self.gamma)
        raw_outputs = softmax_rows(self._raw_logits_rows(vec[np.newaxis, :])[0])

        weights = decision.selected_weights
        mixture = weights @ np.stack(activated)
        raw_mixture = weights @ raw_outputs[list(decision.selected)]

        meta_distribution: Array | None = None
        meta_reliability: float | None = None
        if self.meta is not None and self.switches.meta_expert_on:
            meta_distribution, meta_reliability = meta_predict(self.meta, signals.meta_inputs(self.meta.input_mode)[0])

        verdict = coverage_verdict(
            decision.distances, report, self.theta_ood, self.theta_jsd, self.policy, meta_score=meta_reliability
        )
        reference_entropy = None
        if self.reference_experts is not None:
            reference_rows = softmax_rows(
                np.stack([expert_logits(self.reference_experts[i], vec[np.newaxis, :])[0] for i in decision.selected])
            )
            reference = weights @ reference_rows
            reference_entropy = entropy(reference / reference.sum())

        return QueryOutcome(
            decision=decision,
            activated_outputs=tuple(activated),
            report=report,
            ood=decision.distances,
            raw_outputs=raw_outputs,
            all_outputs=signals.outputs[0],
            all_expert_jsd=float(signals.mean_jsd[0]),
            meta_distribution=meta_distribution,
            meta_reliability=meta_reliability,
            verdict=verdict,
            response=system_response(verdict.kind, self.policy),
            prediction=int(np.argmax(mixture)),
            confidence=float(np.max(mixture)),
            raw_confidence=float(np.max(raw_mixture)),
            prediction_entropy=entropy(mixture / mixture.sum()),
            reference_entropy=reference_entropy,
        )
