"""File layout of a run directory."""

from pathlib import Path

from expertbounds.datatypes.metrics_types import RunManifest
from expertbounds.errors import StorageError

STAGES = ("synth", "experts", "stats", "contrastive", "router", "calibration", "meta", "evaluate")

CONFIG_FILE = "config.cfg"
BENCHMARK_FILE = "benchmark.txt"
CHECKPOINT_DIR = "checkpoints"
SYSTEM_FILE = "system.json"
DECISIONS_FILE = "decisions.csv"
METRICS_FILE = "metrics.json"
MANIFEST_FILE = "manifest.json"
LOG_FILE = "run.log"
REPORT_DIR = "report"


def read_manifest(run_dir: Path) -> RunManifest:
    """Load ``manifest.json`` of a run."""
    path = run_dir / MANIFEST_FILE
    try:
        return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise StorageError(f"cannot read run manifest {path}: {e}") from e


def write_manifest(manifest: RunManifest, run_dir: Path) -> None:
    """Persist ``manifest.json`` of a run."""
    path = run_dir / MANIFEST_FILE
    try:
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write run manifest {path}: {e}") from e


def missing_stages(manifest: RunManifest) -> list[str]:
    """Stages a run has not completed, in pipeline order."""
    return [s for s in STAGES if s not in manifest.stages_completed]
