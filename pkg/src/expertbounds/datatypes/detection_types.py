from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel


class CoverageKind(StrEnum):
    """The system's judgment of whether a query is within its competence."""

    IN_COVERAGE = "in_coverage"
    BOUNDARY_VIOLATION = "boundary_violation"
    COVERAGE_GAP = "coverage_gap"


class ResponseAction(StrEnum):
    """What the system does with a query."""

    ANSWER = "answer"
    CAVEAT = "caveat"
    ABSTAIN = "abstain"
    FALLBACK = "fallback"
    REQUEST_CONTEXT = "request_context"


class MetaClass(StrEnum):
    """Output classes of the meta-expert, in logit order."""

    IN_COVERAGE = "in_coverage"
    BOUNDARY = "boundary"
    GAP = "gap"


class MetaInputMode(StrEnum):
    """What the meta-expert sees."""

    EMBEDDING = "embedding"
    CONCAT_OUTPUTS = "concat_outputs"
    EMBEDDING_PLUS_SIGNALS = "embedding_plus_signals"


@dataclass(frozen=True, eq=False)
class DisagreementReport:
    """Agreement among the activated experts of one query.

    When fewer than two experts were activated the report is not applicable and the
    divergence fields are ``None``.
    """

    activated: tuple[int, ...]
    per_expert_outputs: tuple[NDArray[np.float64], ...]
    mean_pairwise_jsd: float | None
    predictive_variance: float | None
    comparable_confidence: bool | None

    @property
    def applicable(self) -> bool:
        """Whether at least two experts were activated."""
        return self.mean_pairwise_jsd is not None


class VerdictEvidence(BaseModel):
    """Signals behind a coverage verdict."""

    min_ood: float
    max_ood: float
    mean_pairwise_jsd: float | None
    comparable_confidence: bool | None
    meta_score: float | None


class CoverageVerdict(BaseModel):
    """Boundary judgment plus the action the policy assigns to it."""

    kind: CoverageKind
    action: ResponseAction
    evidence: VerdictEvidence


class ResponseDecision(BaseModel):
    """Action for a verdict plus the id of the note template that goes with it."""

    action: ResponseAction
    template_id: str


class ResponsePolicy(BaseModel):
    """Maps every verdict kind to an action."""

    in_coverage: ResponseAction = ResponseAction.ANSWER
    boundary_violation: ResponseAction = ResponseAction.CAVEAT
    coverage_gap: ResponseAction = ResponseAction.ABSTAIN

    def as_mapping(self) -> dict[CoverageKind, ResponseAction]:
        """Policy table keyed by verdict kind."""
        return {
            CoverageKind.IN_COVERAGE: self.in_coverage,
            CoverageKind.BOUNDARY_VIOLATION: self.boundary_violation,
            CoverageKind.COVERAGE_GAP: self.coverage_gap,
        }

    @classmethod
    def for_deployment(cls, name: str) -> "ResponsePolicy":
        """Preset tables: ``balanced``, ``high_stakes`` (abstain aggressively), ``exploratory`` (caveat, keep answering)."""
        presets = {
            "balanced": cls(),
            "high_stakes": cls(boundary_violation=ResponseAction.ABSTAIN, coverage_gap=ResponseAction.ABSTAIN),
            "exploratory": cls(boundary_violation=ResponseAction.CAVEAT, coverage_gap=ResponseAction.CAVEAT),
        }
        if name not in presets:
            msg = f"unknown deployment preset '{name}', expected one of {sorted(presets)}"
            raise ValueError(msg)
        return presets[name]
