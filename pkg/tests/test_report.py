"""Tests for report emission and A/B comparison of runs."""

import csv
import io

import pytest

from expertbounds.datatypes.metrics_types import INFINITE
from expertbounds.errors import ComparisonError, EmissionError, StageError, TrainingError
from expertbounds.harness import pipeline
from expertbounds.harness.compare import DETECTOR_METRICS, ab_compare
from expertbounds.harness.layout import METRICS_FILE
from expertbounds.harness.report import emit_report, parse_json_report, report_tables, report_to_json


class TestEmission:
    """Test JSON and CSV emission of a finished run."""

    def test_json_is_byte_stable(self, tiny_run, tmp_path) -> None:
        """Test that emitting twice and re-emitting a parsed report give identical bytes."""
        first = emit_report(tiny_run.run_dir, "json", tmp_path / "a")
        second = emit_report(tiny_run.run_dir, "json", tmp_path / "b")
        text = first[0].read_text(encoding="utf-8")
        assert text == second[0].read_text(encoding="utf-8")
        assert text == (tiny_run.run_dir / METRICS_FILE).read_text(encoding="utf-8")
        assert report_to_json(parse_json_report(text)) == text

    def test_csv_tables(self, tiny_run, tmp_path) -> None:
        """Test one CSV per table with one row per report entry."""
        written = emit_report(tiny_run.run_dir, "csv", tmp_path)
        assert [p.stem for p in written] == list(report_tables(tiny_run.report))
        detectors = list(csv.DictReader(io.StringIO((tmp_path / "detectors.csv").read_text(encoding="utf-8"))))
        assert len(detectors) == len(tiny_run.report.detectors)
        curve = list(csv.DictReader(io.StringIO((tmp_path / "risk_coverage.csv").read_text(encoding="utf-8"))))
        assert len(curve) == len(tiny_run.report.risk_coverage)
        assert curve[0]["threshold"] == INFINITE

    def test_incomplete_run(self, tiny_config, tmp_path, monkeypatch) -> None:
        """Test that a run missing stages cannot be reported."""

        def broken_meta(*args, **kwargs):
            raise TrainingError("gap class absent")

        monkeypatch.setattr(pipeline, "train_meta_expert", broken_meta)
        with pytest.raises(StageError):
            pipeline.run_pipeline(tiny_config, tmp_path)
        with pytest.raises(EmissionError) as info:
            emit_report(tmp_path, "json")
        assert info.value.missing_stages == ["meta", "evaluate"]


class TestComparison:
    """Test per-metric deltas between two runs."""

    def test_identical_runs(self, tiny_run) -> None:
        """Test that comparing a run with itself gives zero deltas wherever both sides are numbers."""
        comparison = ab_compare(tiny_run.report, tiny_run.report)
        assert comparison.config_hash_a == comparison.config_hash_b
        numeric = [d for d in comparison.deltas if d.delta is not None]
        assert numeric
        assert all(d.delta == 0.0 for d in numeric)
        assert all(d.a == d.b for d in comparison.deltas)
        detector_deltas = [d for d in comparison.deltas if d.section == "detectors"]
        assert len(detector_deltas) == len(tiny_run.report.detectors) * len(DETECTOR_METRICS)

    def test_changed_metric(self, tiny_run) -> None:
        """Test the sign of a delta and a null delta against an infinite ratio."""
        report_b = tiny_run.report.model_copy(
            update={
                "phenotype": tiny_run.report.phenotype.model_copy(
                    update={"ece": tiny_run.report.phenotype.ece + 0.25, "boundary_localization_ratio": INFINITE}
                )
            }
        )
        deltas = {(d.section, d.metric): d for d in ab_compare(tiny_run.report, report_b).deltas}
        assert deltas[("phenotype", "ece")].delta == pytest.approx(0.25)
        assert deltas[("phenotype", "boundary_localization_ratio")].delta is None

    def test_different_benchmarks(self, tiny_run) -> None:
        """Test that runs on different benchmarks cannot be compared."""
        metadata = tiny_run.report.metadata.model_copy(update={"benchmark_hash": "0" * 64})
        with pytest.raises(ComparisonError):
            ab_compare(tiny_run.report, tiny_run.report.model_copy(update={"metadata": metadata}))
