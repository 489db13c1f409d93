"""Shipped-seed experiments on the default, interventions-off and uninformative-context configs.

These run the full pipeline at shipped scale and are deselected by default; run them with
``pytest -m acceptance``.
"""

import time

import numpy as np
import pytest

from expertbounds.datatypes.benchmark_types import CaseTag, SplitName
from expertbounds.errors import ComparisonError
from expertbounds.experts.training import expert_logits
from expertbounds.harness.compare import ab_compare
from expertbounds.harness.config import load_experiment_config
from expertbounds.harness.layout import METRICS_FILE
from expertbounds.harness.pipeline import RunArtifact, reevaluate_run, run_pipeline
from expertbounds.harness.selftest import run_selftest
from expertbounds.paths import DEFAULT_CONFIG_PATH, INTERVENTIONS_OFF_CONFIG_PATH, KAPPA_ZERO_CONFIG_PATH

pytestmark = pytest.mark.acceptance

MIN_DIVERGENCE = 0.5
DETECTOR_MARGIN = 0.05
PIPELINE_BUDGET_S = 300.0


@pytest.fixture(scope="module")
def default_run(tmp_path_factory: pytest.TempPathFactory) -> RunArtifact:
    return run_pipeline(load_experiment_config(DEFAULT_CONFIG_PATH), tmp_path_factory.mktemp("default"))


@pytest.fixture(scope="module")
def interventions_off_run(tmp_path_factory: pytest.TempPathFactory) -> tuple[RunArtifact, float]:
    started = time.perf_counter()
    artifact = run_pipeline(load_experiment_config(INTERVENTIONS_OFF_CONFIG_PATH), tmp_path_factory.mktemp("off"))
    return artifact, time.perf_counter() - started


@pytest.fixture(scope="module")
def kappa_zero_run(tmp_path_factory: pytest.TempPathFactory) -> RunArtifact:
    return run_pipeline(load_experiment_config(KAPPA_ZERO_CONFIG_PATH), tmp_path_factory.mktemp("kappa_zero"))


def _detectors(artifact: RunArtifact) -> dict:
    return {row.detector: row for row in artifact.report.detectors}


def _in_domain_accuracy(artifact: RunArtifact, experts) -> float:
    test = artifact.benchmark.splits[SplitName.TEST]
    hits = []
    for domain, expert in zip(artifact.system.domain_ids, experts, strict=True):
        own = test.subset(test.mask(owner=domain, tag=CaseTag.IN_DOMAIN))
        hits.extend(np.argmax(expert_logits(expert, own.features), axis=1) == own.class_labels)
    return float(np.mean(hits))


class TestNumericSoundness:
    """Test the invariant suite at shipped network shapes."""

    def test_selftest(self) -> None:
        """Test gradients, distributions and Sinkhorn projection on the default config."""
        started = time.perf_counter()
        results = run_selftest(load_experiment_config(DEFAULT_CONFIG_PATH), samples=10_000, seed=0)
        assert all(r.passed for r in results)
        assert time.perf_counter() - started < 15.0


class TestPhenotype:
    """Test the confident-but-wrong signature with every intervention switched off."""

    def test_false_friend_pairs(self, interventions_off_run) -> None:
        """Test low accuracy at in-domain confidence on the false friend's boundary samples."""
        artifact, _ = interventions_off_run
        rows = artifact.report.false_friends
        assert {row.pair for row in rows} == {"A:B", "C:D"}
        for row in rows:
            assert row.boundary_accuracy <= 1.0 - MIN_DIVERGENCE
            assert abs(row.confidence_gap) <= 0.1

    def test_errors_localize_on_boundaries(self, interventions_off_run) -> None:
        """Test that boundary queries fail at least twice as often as in-domain ones."""
        artifact, _ = interventions_off_run
        ratio = artifact.report.phenotype.boundary_localization_ratio
        assert ratio == "infinite" or ratio >= 2.0

    def test_single_expert_detectors(self, interventions_off_run) -> None:
        """Test that disagreement detectors are not applicable under top-1 routing."""
        artifact, _ = interventions_off_run
        detectors = _detectors(artifact)
        assert detectors["expert_disagreement"].status == "not_applicable"
        assert detectors["vote_disagreement"].status == "not_applicable"

    def test_pipeline_budget(self, interventions_off_run) -> None:
        """Test that a shipped-scale run fits the desk-scale budget."""
        _, seconds = interventions_off_run
        assert seconds < PIPELINE_BUDGET_S


class TestInterventions:
    """Test that the interventions beat confidence thresholding on the default config."""

    def test_disagreement_beats_confidence(self, default_run) -> None:
        """Test disagreement AUROC against the max-softmax baseline."""
        detectors = _detectors(default_run)
        assert detectors["expert_disagreement"].auroc >= detectors["max_softmax"].auroc + DETECTOR_MARGIN

    def test_meta_expert_beats_confidence(self, default_run) -> None:
        """Test meta-expert PR-AUC against the max-softmax baseline."""
        detectors = _detectors(default_run)
        assert detectors["meta_reliability"].pr_auc >= detectors["max_softmax"].pr_auc + DETECTOR_MARGIN

    def test_selective_prediction(self, default_run) -> None:
        """Test that abstaining on disagreement raises precision at 80% coverage."""
        curve = [p for p in default_run.report.risk_coverage if p.detector == "expert_disagreement"]
        no_abstention = curve[0].precision
        assert curve[0].coverage == 1.0
        assert _detectors(default_run)["expert_disagreement"].precision_at_coverage > no_abstention

    def test_coverage_non_increasing(self, default_run) -> None:
        """Test that every sweep's coverage never grows as the threshold tightens."""
        for name in _detectors(default_run):
            coverage = [p.coverage for p in default_run.report.risk_coverage if p.detector == name]
            assert all(a >= b for a, b in zip(coverage, coverage[1:], strict=False))

    def test_boundary_aware_calibration(self, default_run) -> None:
        """Test that entropy tracks distance after fine-tuning without costing in-domain accuracy."""
        entropy_distance = default_run.report.entropy_distance
        assert entropy_distance.spearman >= 0.5
        assert entropy_distance.spearman > entropy_distance.spearman_reference
        before = _in_domain_accuracy(default_run, default_run.system.reference_experts)
        after = _in_domain_accuracy(default_run, default_run.system.experts)
        assert before - after <= 0.02

    def test_interventions_beat_baseline_run(self, default_run, interventions_off_run) -> None:
        """Test that the treatment run detects boundary cases better than the baseline run."""
        baseline, _ = interventions_off_run
        comparison = ab_compare(baseline.report, default_run.report)
        deltas = {(d.key, d.metric): d for d in comparison.deltas if d.section == "detectors"}
        assert deltas[("centroid_distance", "auroc")].delta is not None
        assert deltas[("expert_disagreement", "auroc")].a is None
        assert deltas[("expert_disagreement", "auroc")].b > 0.5


class TestDeterminism:
    """Test bit-reproducible runs and replay from the decision log."""

    def test_rerun_is_byte_identical(self, default_run, tmp_path) -> None:
        """Test that the same config and seed give the same metrics file."""
        again = run_pipeline(default_run.config, tmp_path)
        assert (again.run_dir / METRICS_FILE).read_bytes() == (default_run.run_dir / METRICS_FILE).read_bytes()

    def test_replay(self, default_run) -> None:
        """Test that metrics recompute identically from the decision log."""
        before = (default_run.run_dir / METRICS_FILE).read_bytes()
        assert reevaluate_run(default_run.run_dir) == default_run.report
        assert (default_run.run_dir / METRICS_FILE).read_bytes() == before


class TestNegativeControls:
    """Test that the harness completes and reports with uninformative context."""

    def test_kappa_zero_completes(self, kappa_zero_run) -> None:
        """Test that every detector still gets a row."""
        assert not kappa_zero_run.manifest.incomplete
        assert len(kappa_zero_run.report.detectors) == len(_detectors(kappa_zero_run))

    def test_mismatched_benchmarks(self, default_run, kappa_zero_run) -> None:
        """Test that runs on different benchmarks refuse comparison."""
        with pytest.raises(ComparisonError):
            ab_compare(default_run.report, kappa_zero_run.report)
