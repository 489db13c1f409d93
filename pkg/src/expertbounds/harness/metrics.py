"""Detector scoring, selective prediction, phenotype scorecard and the report built from decision records.

Everything here reads only :class:`DecisionRecord` rows, so a report can be recomputed from a
persisted decision log without the models.
"""

import math
from collections.abc import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, stats
from sklearn.metrics import average_precision_score, roc_auc_score

from expertbounds.calibration.ece import ece_from_confidences
from expertbounds.datatypes.benchmark_types import CaseTag, FalseFriendPair
from expertbounds.datatypes.detection_types import CoverageKind
from expertbounds.datatypes.metrics_types import (
    INFINITE,
    CurvePoint,
    DecisionRecord,
    DetectorRow,
    EntropyDistance,
    FalseFriendRow,
    Infinite,
    MetricsReport,
    PhenotypeBlock,
    RoutingSummary,
    RunMetadata,
    TagStats,
    VerdictRow,
)
from expertbounds.errors import DimensionError, ParameterError, UndefinedMetricError

PLAUSIBILITY_NOTE = (
    "Structural plausibility is approximated by confidence plus a valid class output; "
    "a classifier has no richer notion of a well-formed answer."
)
LABEL_SOURCE = "oracle case tags stand in for human identification of boundary cases"

ScoreFn = Callable[[DecisionRecord], float | None]

# Higher score = more suspect.
DETECTORS: dict[str, ScoreFn] = {
    "max_softmax": lambda r: 1.0 - r.raw_confidence,
    "calibrated_confidence": lambda r: 1.0 - r.confidence,
    "centroid_distance": lambda r: r.min_ood,
    "vote_disagreement": lambda r: r.vote_disagreement,
    "routing_entropy": lambda r: r.routing_entropy,
    "expert_disagreement": lambda r: r.mean_jsd,
    "coverage_affinity": lambda r: 1.0 - r.max_affinity,
    "meta_reliability": lambda r: r.meta_reliability,
}


def _binary(scores: ArrayLike, positives: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positives, dtype=bool)
    if s.shape != y.shape or s.ndim != 1:
        raise DimensionError(f"scores {s.shape} and labels {y.shape} do not align")
    if y.all() or not y.any():
        raise UndefinedMetricError("detection metrics need both positives and negatives")
    return s, y


def auroc(scores: ArrayLike, positives: ArrayLike) -> float:
    """Area under the ROC curve (rank statistic, ties averaged).

    Raises:
        UndefinedMetricError: If either class is absent.
    """
    s, y = _binary(scores, positives)
    return float(roc_auc_score(y, s))


def pr_auc(scores: ArrayLike, positives: ArrayLike) -> float:
    """Average precision (step-wise precision-recall integration).

    Raises:
        UndefinedMetricError: If either class is absent.
    """
    s, y = _binary(scores, positives)
    return float(average_precision_score(y, s))


def risk_coverage_curve(scores: ArrayLike, correct: ArrayLike) -> list[tuple[float, float, float]]:
    """Sweep abstention thresholds from admitting everything to admitting nothing.

    At threshold ``t`` the queries with ``score < t`` are committed. Thresholds are ``inf``
    followed by the unique scores in descending order; thresholds committing nothing are dropped.

    Returns:
        ``(threshold, coverage, precision)`` triples with non-increasing coverage.

    Raises:
        ParameterError: On empty input.
    """
    s = np.asarray(scores, dtype=np.float64)
    hits = np.asarray(correct, dtype=bool)
    if s.size == 0:
        raise ParameterError("risk-coverage needs at least one query")
    if s.shape != hits.shape:
        raise DimensionError(f"scores {s.shape} and correctness {hits.shape} do not align")
    points = []
    for threshold in [math.inf, *np.unique(s)[::-1]]:
        committed = s < threshold
        count = int(committed.sum())
        if count == 0:
            continue
        points.append((float(threshold), count / s.size, float(hits[committed].mean())))
    return points


def precision_at_coverage(points: Sequence[tuple[float, float, float]], target: float) -> float:
    """Precision at the tightest threshold that still commits at least ``target`` of the queries."""
    eligible = [p for p in points if p[1] >= target]
    if not eligible:
        raise ParameterError(f"no threshold reaches coverage {target}")
    return min(eligible, key=lambda p: p[1])[2]


def area_under_risk_coverage(points: Sequence[tuple[float, float, float]]) -> float:
    """Trapezoidal area under risk (1 - precision) over the swept coverage range."""
    ordered = sorted(points, key=lambda p: p[1])
    if len(ordered) == 1:
        return 1.0 - ordered[0][2]
    coverage = np.array([p[1] for p in ordered])
    risk = np.array([1.0 - p[2] for p in ordered])
    return float(integrate.trapezoid(risk, coverage))


def entropy_distance_correlation(entropies: ArrayLike, distances: ArrayLike) -> float:
    """Spearman rank correlation (ties averaged) between prediction entropy and centroid distance.

    Raises:
        ParameterError: With fewer than 3 samples.
        UndefinedMetricError: If either sequence is constant.
    """
    h = np.asarray(entropies, dtype=np.float64)
    d = np.asarray(distances, dtype=np.float64)
    if h.shape != d.shape or h.ndim != 1:
        raise DimensionError(f"entropies {h.shape} and distances {d.shape} do not align")
    if h.size < 3:
        raise ParameterError(f"rank correlation needs at least 3 samples, got {h.size}")
    if np.ptp(h) == 0.0 or np.ptp(d) == 0.0:
        raise UndefinedMetricError("rank correlation is undefined for a constant sequence")
    return float(stats.spearmanr(h, d)[0])


def _tag_stats(confidences: NDArray[np.float64], hits: NDArray[np.bool_], tag: CaseTag) -> TagStats:
    mean_conf = float(confidences.mean())
    accuracy = float(hits.mean())
    return TagStats(
        tag=tag, count=int(hits.size), mean_confidence=mean_conf, accuracy=accuracy, dissociation=mean_conf - accuracy
    )


def localization_ratio(boundary_error: float, in_domain_error: float) -> float | Infinite:
    """Boundary error rate over in-domain error rate; ``"infinite"`` when in-domain is error-free."""
    if in_domain_error == 0.0:
        return INFINITE
    return boundary_error / in_domain_error


def phenotype_metrics(
    confidences: ArrayLike,
    correct: ArrayLike,
    tags: Sequence[CaseTag],
    bin_count: int = 15,
    required: Sequence[CaseTag] = (CaseTag.IN_DOMAIN, CaseTag.BOUNDARY),
) -> PhenotypeBlock:
    """Per-tag confidence, accuracy and their dissociation, plus localization ratio and ECE.

    Raises:
        UndefinedMetricError: If a required tag has no samples.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    hits = np.asarray(correct, dtype=bool)
    tag_arr = np.array([t.value for t in tags])
    if conf.shape != hits.shape or conf.size != tag_arr.size:
        raise DimensionError("confidences, correctness and tags must align")
    for tag in required:
        if not np.any(tag_arr == tag.value):
            raise UndefinedMetricError(f"no samples tagged '{tag.value}'")

    per_tag = [
        _tag_stats(conf[tag_arr == t.value], hits[tag_arr == t.value], t) for t in CaseTag if np.any(tag_arr == t.value)
    ]
    by_tag = {s.tag: s for s in per_tag}
    report = ece_from_confidences(conf, hits, bin_count)
    return PhenotypeBlock(
        per_tag=per_tag,
        boundary_localization_ratio=localization_ratio(
            1.0 - by_tag[CaseTag.BOUNDARY].accuracy, 1.0 - by_tag[CaseTag.IN_DOMAIN].accuracy
        ),
        ece=report.ece,
        reliability=report.bins,
        note=PLAUSIBILITY_NOTE,
    )


def _optional(fn: Callable[[], float]) -> float | None:
    try:
        return fn()
    except UndefinedMetricError:
        return None


def detector_table(
    records: Sequence[DecisionRecord], coverage_target: float
) -> tuple[list[DetectorRow], list[CurvePoint]]:
    """Score every detector on the identical query set; positives are boundary and gap queries."""
    tags = np.array([r.case_tag.value for r in records])
    positives = tags != CaseTag.IN_DOMAIN.value
    hits = np.array([r.correct for r in records], dtype=bool)
    rows: list[DetectorRow] = []
    curve: list[CurvePoint] = []
    for name, score_fn in DETECTORS.items():
        raw = [score_fn(r) for r in records]
        if any(v is None for v in raw):
            rows.append(DetectorRow(detector=name, status="not_applicable"))
            continue
        scores = np.array(raw, dtype=np.float64)
        points = risk_coverage_curve(scores, hits)
        per_tag = {}
        for tag in (CaseTag.BOUNDARY, CaseTag.GAP):
            keep = (tags == CaseTag.IN_DOMAIN.value) | (tags == tag.value)
            per_tag[tag] = _optional(lambda keep=keep: auroc(scores[keep], positives[keep]))
        rows.append(
            DetectorRow(
                detector=name,
                status="ok",
                auroc=auroc(scores, positives),
                pr_auc=pr_auc(scores, positives),
                auroc_boundary=per_tag[CaseTag.BOUNDARY],
                auroc_gap=per_tag[CaseTag.GAP],
                aurc=area_under_risk_coverage(points),
                precision_at_coverage=precision_at_coverage(points, coverage_target),
            )
        )
        curve.extend(
            CurvePoint(detector=name, threshold=INFINITE if math.isinf(t) else t, coverage=c, precision=p)
            for t, c, p in points
        )
    return rows, curve


def false_friend_rows(records: Sequence[DecisionRecord], pairs: Sequence[FalseFriendPair]) -> list[FalseFriendRow]:
    """Each pair member's accuracy and confidence on the other member's boundary samples."""
    rows = []
    for pair in pairs:
        if pair.shared_clusters == 0:
            continue
        for expert, other in ((pair.first, pair.second), (pair.second, pair.first)):
            boundary = [
                r
                for r in records
                if r.case_tag == CaseTag.BOUNDARY and r.owner_domain == other and r.counterpart_expert == expert
            ]
            own = [
                r.owner_expert_confidence
                for r in records
                if r.case_tag == CaseTag.IN_DOMAIN and r.owner_domain == expert and r.owner_expert_confidence is not None
            ]
            if not boundary or not own:
                continue
            boundary_conf = float(np.mean([r.counterpart_confidence for r in boundary]))
            in_domain_conf = float(np.mean(own))
            rows.append(
                FalseFriendRow(
                    pair=f"{pair.first}:{pair.second}",
                    expert=expert,
                    other_owner=other,
                    boundary_samples=len(boundary),
                    boundary_accuracy=float(np.mean([bool(r.counterpart_correct) for r in boundary])),
                    boundary_confidence=boundary_conf,
                    in_domain_confidence=in_domain_conf,
                    confidence_gap=in_domain_conf - boundary_conf,
                )
            )
    return rows


def _entropy_distance(records: Sequence[DecisionRecord]) -> EntropyDistance:
    distances = [r.min_ood for r in records]
    spearman = _optional(lambda: entropy_distance_correlation([r.prediction_entropy for r in records], distances))
    reference = None
    if records and all(r.reference_entropy is not None for r in records):
        reference = _optional(
            lambda: entropy_distance_correlation([float(r.reference_entropy or 0.0) for r in records], distances)
        )
    return EntropyDistance(spearman=spearman, spearman_reference=reference, samples=len(records))


def _routing_summary(records: Sequence[DecisionRecord]) -> RoutingSummary:
    in_domain = [r for r in records if r.case_tag == CaseTag.IN_DOMAIN]
    top1 = float(np.mean([r.routed_expert == r.owner_domain for r in in_domain])) if in_domain else None
    by_tag = {
        t.value: float(np.mean([r.routing_entropy for r in records if r.case_tag == t]))
        for t in CaseTag
        if any(r.case_tag == t for r in records)
    }
    return RoutingSummary(top1_accuracy_in_domain=top1, mean_entropy_by_tag=by_tag)


def _verdict_rows(records: Sequence[DecisionRecord]) -> list[VerdictRow]:
    rows = []
    for tag in CaseTag:
        tagged = [r.verdict for r in records if r.case_tag == tag]
        if tagged:
            rows.append(
                VerdictRow(
                    tag=tag,
                    in_coverage=tagged.count(CoverageKind.IN_COVERAGE),
                    boundary_violation=tagged.count(CoverageKind.BOUNDARY_VIOLATION),
                    coverage_gap=tagged.count(CoverageKind.COVERAGE_GAP),
                )
            )
    return rows


def compute_metrics(
    records: Sequence[DecisionRecord],
    pairs: Sequence[FalseFriendPair],
    metadata: RunMetadata,
    bin_count: int = 15,
) -> MetricsReport:
    """Build the full report from decision records alone.

    Raises:
        UndefinedMetricError: If the records lack positives or negatives, or a required tag.
    """
    if not records:
        raise ParameterError("cannot compute metrics from an empty decision log")
    ordered = sorted(records, key=lambda r: r.query_id)
    detectors, curve = detector_table(ordered, metadata.coverage_target)
    phenotype = phenotype_metrics(
        [r.confidence for r in ordered], [r.correct for r in ordered], [r.case_tag for r in ordered], bin_count
    )
    return MetricsReport(
        metadata=metadata,
        detectors=detectors,
        risk_coverage=curve,
        phenotype=phenotype,
        false_friends=false_friend_rows(ordered, pairs),
        entropy_distance=_entropy_distance(ordered),
        routing=_routing_summary(ordered),
        verdicts=_verdict_rows(ordered),
    )
