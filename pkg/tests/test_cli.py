"""Tests for the command-line entry point and its exit codes."""

import json

from expertbounds.cli import EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main
from expertbounds.harness.layout import BENCHMARK_FILE, CONFIG_FILE
from expertbounds.paths import DEFAULT_CONFIG_PATH

SMALL = [
    "--set",
    "benchmark.train_samples_per_cluster=5",
    "--set",
    "benchmark.val_samples_per_cluster=5",
    "--set",
    "benchmark.test_samples_per_cluster=5",
    "--set",
    "benchmark.contrastive_pairs_per_relation=5",
]


class TestCommands:
    """Test each subcommand on small inputs."""

    def test_synth(self, tmp_path) -> None:
        """Test that synth writes the benchmark and the config snapshot."""
        code = main(["synth", "--config", str(DEFAULT_CONFIG_PATH), "--out", str(tmp_path), *SMALL])
        assert code == EXIT_OK
        assert (tmp_path / BENCHMARK_FILE).is_file()
        assert "benchmark.train_samples_per_cluster=5" in (tmp_path / CONFIG_FILE).read_text(encoding="utf-8")

    def test_eval(self, tiny_run_dir) -> None:
        """Test recomputing a finished run's metrics."""
        assert main(["eval", "--run", str(tiny_run_dir)]) == EXIT_OK

    def test_report(self, tiny_run_dir, tmp_path, capsys) -> None:
        """Test that report prints the written files."""
        assert main(["report", "--run", str(tiny_run_dir), "--format", "csv", "--out", str(tmp_path)]) == EXIT_OK
        printed = capsys.readouterr().out.split()
        assert str(tmp_path / "detectors.csv") in printed

    def test_ab(self, tiny_run_dir, capsys) -> None:
        """Test comparing a run with itself on stdout."""
        assert main(["ab", "--run-a", str(tiny_run_dir), "--run-b", str(tiny_run_dir)]) == EXIT_OK
        comparison = json.loads(capsys.readouterr().out)
        assert comparison["config_hash_a"] == comparison["config_hash_b"]
        assert comparison["deltas"]

    def test_selftest(self) -> None:
        """Test that a passing suite exits cleanly."""
        assert main(["selftest", "--samples", "100"]) == EXIT_OK


class TestExitCodes:
    """Test how failures map to exit codes."""

    def test_unknown_override(self, tmp_path) -> None:
        """Test that an unknown config key is a validation failure."""
        code = main(["synth", "--out", str(tmp_path), "--set", "router.depth=3"])
        assert code == EXIT_VALIDATION

    def test_malformed_override(self, tmp_path) -> None:
        """Test that an override without '=' is a validation failure."""
        assert main(["synth", "--out", str(tmp_path), "--set", "seed"]) == EXIT_VALIDATION

    def test_out_of_range_value(self, tmp_path) -> None:
        """Test that a value outside its field's range is a validation failure."""
        assert main(["synth", "--out", str(tmp_path), "--set", "router.tau=1.5"]) == EXIT_VALIDATION

    def test_missing_config(self, tmp_path) -> None:
        """Test that a missing config file is a validation failure."""
        assert main(["synth", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)]) == EXIT_VALIDATION

    def test_report_without_run(self, tmp_path) -> None:
        """Test that reporting from an empty directory is a runtime failure."""
        assert main(["report", "--run", str(tmp_path)]) == EXIT_RUNTIME
