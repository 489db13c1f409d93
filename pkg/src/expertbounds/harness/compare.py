"""A/B comparison of two evaluated runs."""

from collections.abc import Iterator

from loguru import logger

from expertbounds.datatypes.metrics_types import ComparisonReport, Infinite, MetricDelta, MetricsReport
from expertbounds.errors import ComparisonError

DETECTOR_METRICS = ("auroc", "pr_auc", "auroc_boundary", "auroc_gap", "aurc", "precision_at_coverage")
TAG_METRICS = ("mean_confidence", "accuracy", "dissociation")

Value = float | Infinite | None


def _delta(section: str, key: str, metric: str, a: Value, b: Value) -> MetricDelta:
    numeric = isinstance(a, float | int) and isinstance(b, float | int)
    return MetricDelta(
        section=section, key=key, metric=metric, a=a, b=b, delta=float(b) - float(a) if numeric else None
    )


def _pairs(report_a: MetricsReport, report_b: MetricsReport) -> Iterator[MetricDelta]:
    detectors_b = {row.detector: row for row in report_b.detectors}
    for row_a in report_a.detectors:
        row_b = detectors_b.get(row_a.detector)
        if row_b is None:
            continue
        for metric in DETECTOR_METRICS:
            yield _delta("detectors", row_a.detector, metric, getattr(row_a, metric), getattr(row_b, metric))

    tags_b = {s.tag: s for s in report_b.phenotype.per_tag}
    for stats_a in report_a.phenotype.per_tag:
        stats_b = tags_b.get(stats_a.tag)
        if stats_b is None:
            continue
        for metric in TAG_METRICS:
            yield _delta("phenotype", stats_a.tag.value, metric, getattr(stats_a, metric), getattr(stats_b, metric))
    yield _delta(
        "phenotype",
        "all",
        "boundary_localization_ratio",
        report_a.phenotype.boundary_localization_ratio,
        report_b.phenotype.boundary_localization_ratio,
    )
    yield _delta("phenotype", "all", "ece", report_a.phenotype.ece, report_b.phenotype.ece)
    yield _delta(
        "entropy_distance", "all", "spearman", report_a.entropy_distance.spearman, report_b.entropy_distance.spearman
    )
    yield _delta(
        "routing",
        "all",
        "top1_accuracy_in_domain",
        report_a.routing.top1_accuracy_in_domain,
        report_b.routing.top1_accuracy_in_domain,
    )


def ab_compare(report_a: MetricsReport, report_b: MetricsReport) -> ComparisonReport:
    """Per-metric deltas ``b - a`` for every detector and phenotype metric.

    Metrics that are not applicable or infinite on either side keep both values and a null delta.

    Raises:
        ComparisonError: If the runs were evaluated on different benchmarks.
    """
    hash_a, hash_b = report_a.metadata.benchmark_hash, report_b.metadata.benchmark_hash
    if hash_a != hash_b:
        raise ComparisonError(f"runs use different benchmarks ({hash_a[:12]} vs {hash_b[:12]})")
    deltas = list(_pairs(report_a, report_b))
    logger.info(f"Compared {len(deltas)} metrics on benchmark {hash_a[:12]}")
    return ComparisonReport(
        benchmark_hash=hash_a,
        config_hash_a=report_a.metadata.config_hash,
        config_hash_b=report_b.metadata.config_hash,
        deltas=deltas,
    )
