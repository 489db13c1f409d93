"""The combined coverage verdict: OOD first, then disagreement under comparable confidence."""

from collections.abc import Mapping

import numpy as np
from numpy.typing import ArrayLike

from expertbounds.datatypes.detection_types import (
    CoverageKind,
    CoverageVerdict,
    DisagreementReport,
    ResponseAction,
    ResponsePolicy,
    VerdictEvidence,
)
from expertbounds.detection.responses import system_response
from expertbounds.errors import DimensionError, ParameterError


def classify_coverage(min_ood: float, report: DisagreementReport, theta_ood: float, theta_jsd: float) -> CoverageKind:
    """Verdict table; a coverage gap takes precedence over a boundary violation."""
    if min_ood > theta_ood:
        return CoverageKind.COVERAGE_GAP
    jsd = report.mean_pairwise_jsd
    if jsd is not None and report.comparable_confidence and jsd > theta_jsd:
        return CoverageKind.BOUNDARY_VIOLATION
    return CoverageKind.IN_COVERAGE


def coverage_verdict(
    ood: ArrayLike,
    report: DisagreementReport,
    theta_ood: float,
    theta_jsd: float,
    policy: ResponsePolicy | Mapping[CoverageKind, ResponseAction] | None = None,
    meta_score: float | None = None,
) -> CoverageVerdict:
    """Judge one query from per-expert OOD scores and the disagreement report.

    Args:
        ood: OOD score against every expert (length K).
        report: Disagreement among the activated experts.
        theta_ood: A query is a gap when even the closest activated expert is farther than this.
        theta_jsd: Disagreement above this is a boundary violation under comparable confidence.
        policy: Action table; defaults to the balanced policy.
        meta_score: Meta-expert reliability, recorded as evidence.

    Raises:
        ParameterError: If a threshold is not positive.
        DimensionError: If an activated expert id has no OOD score.
    """
    if theta_ood <= 0.0 or theta_jsd <= 0.0:
        raise ParameterError(f"thresholds must be positive, got theta_ood={theta_ood}, theta_jsd={theta_jsd}")
    scores = np.asarray(ood, dtype=np.float64)
    if scores.ndim != 1 or any(not 0 <= i < scores.size for i in report.activated) or not report.activated:
        raise DimensionError(f"ood scores of shape {scores.shape} do not cover activated experts {report.activated}")
    activated = scores[list(report.activated)]
    min_ood, max_ood = float(activated.min()), float(activated.max())
    kind = classify_coverage(min_ood, report, theta_ood, theta_jsd)
    decision = system_response(kind, policy if policy is not None else ResponsePolicy())
    return CoverageVerdict(
        kind=kind,
        action=decision.action,
        evidence=VerdictEvidence(
            min_ood=min_ood,
            max_ood=max_ood,
            mean_pairwise_jsd=report.mean_pairwise_jsd,
            comparable_confidence=report.comparable_confidence,
            meta_score=meta_score,
        ),
    )
