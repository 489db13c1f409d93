"""Shared fixtures: a tiny benchmark, one tiny end-to-end run and a decision record factory."""

from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from expertbounds.datatypes.benchmark_types import Benchmark, BenchmarkConfig, CaseTag
from expertbounds.datatypes.config_types import (
    CalibrationConfig,
    EmbeddingConfig,
    ExperimentConfig,
    ExpertTrainingConfig,
    MetaExpertConfig,
    RouterConfig,
)
from expertbounds.datatypes.detection_types import CoverageKind, ResponseAction
from expertbounds.datatypes.metrics_types import DecisionRecord
from expertbounds.harness.pipeline import RunArtifact, run_pipeline
from expertbounds.synth.benchmark import build_benchmark

TINY_BENCHMARK = BenchmarkConfig(
    input_dim=4,
    num_domains=3,
    classes=3,
    private_clusters_per_domain=2,
    false_friend_pairs="A:B:1",
    gap_clusters=1,
    context_dims=2,
    train_samples_per_cluster=40,
    val_samples_per_cluster=20,
    test_samples_per_cluster=20,
    contrastive_pairs_per_relation=20,
    seed=7,
)

TINY_CONFIG = ExperimentConfig(
    benchmark=TINY_BENCHMARK,
    experts=ExpertTrainingConfig(hidden=8, epochs=5, batch_size=16, streams=2),
    embedding=EmbeddingConfig(hidden=8, dim=4, epochs=3, batch_size=8),
    router=RouterConfig(hidden=8, epochs=3, batch_size=32),
    calibration=CalibrationConfig(finetune_epochs=2, batch_size=16, noise_samples=20),
    meta=MetaExpertConfig(hidden=8, epochs=5, batch_size=16),
    seed=7,
)


@pytest.fixture(scope="session")
def tiny_config() -> ExperimentConfig:
    return TINY_CONFIG


@pytest.fixture(scope="session")
def tiny_benchmark() -> Benchmark:
    return build_benchmark(TINY_BENCHMARK)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory: pytest.TempPathFactory) -> RunArtifact:
    return run_pipeline(TINY_CONFIG, tmp_path_factory.mktemp("tiny_run"))


@pytest.fixture(scope="session")
def tiny_run_dir(tiny_run: RunArtifact) -> Path:
    return tiny_run.run_dir


@pytest.fixture
def make_record() -> Callable[..., DecisionRecord]:
    """Factory of decision records: a correct, confidently routed in-domain query unless overridden."""

    def _make(query_id: int = 0, **overrides: Any) -> DecisionRecord:
        fields: dict[str, Any] = {
            "query_id": query_id,
            "case_tag": CaseTag.IN_DOMAIN,
            "owner_domain": "A",
            "cluster_id": 0,
            "class_label": 1,
            "prediction": 1,
            "correct": True,
            "confidence": 0.9,
            "raw_confidence": 0.95,
            "prediction_entropy": 0.3,
            "reference_entropy": None,
            "routed_expert": "A",
            "selected": ["A", "B"],
            "selected_weights": [0.8, 0.2],
            "routing_entropy": 0.5,
            "margin": 0.6,
            "min_ood": 1.0,
            "max_affinity": 0.8,
            "mean_jsd": 0.05,
            "predictive_variance": 0.01,
            "vote_disagreement": 0.0,
            "comparable_confidence": False,
            "meta_reliability": 0.1,
            "verdict": CoverageKind.IN_COVERAGE,
            "action": ResponseAction.ANSWER,
            "owner_expert_confidence": 0.9,
            "owner_expert_correct": True,
            "counterpart_expert": None,
            "counterpart_confidence": None,
            "counterpart_correct": None,
        }
        fields.update(overrides)
        return DecisionRecord(**fields)

    return _make
