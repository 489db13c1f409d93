from expertbounds.harness.compare import ab_compare
from expertbounds.harness.config import load_experiment_config
from expertbounds.harness.pipeline import load_run, reevaluate_run, run_pipeline
from expertbounds.harness.report import emit_report
from expertbounds.harness.selftest import run_selftest

__all__ = [
    "ab_compare",
    "emit_report",
    "load_experiment_config",
    "load_run",
    "reevaluate_run",
    "run_pipeline",
    "run_selftest",
]
