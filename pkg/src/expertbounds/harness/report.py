"""Byte-stable JSON and CSV emission of a metrics report.

Fields keep model order and floats are written at 17 significant digits, so emitting the
same report twice, or re-reading and re-emitting it, yields identical bytes.
"""

import csv
import io
import math
from enum import Enum
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ValidationError

from expertbounds.datatypes.metrics_types import MetricsReport
from expertbounds.errors import EmissionError, NumericDomainError, ParseError, StorageError
from expertbounds.harness.layout import METRICS_FILE, REPORT_DIR, missing_stages, read_manifest
from expertbounds.synth.storage import fmt_float

ReportFormat = Literal["json", "csv"]
INDENT = "  "


def _json_value(value: Any, depth: int) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return _json_value(value.value, depth)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise NumericDomainError(f"non-finite value {value} cannot be written as JSON")
        return fmt_float(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(value, BaseModel):
        value = {name: getattr(value, name) for name in type(value).model_fields}
    pad, inner = INDENT * depth, INDENT * (depth + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{inner}{_json_value(str(k), 0)}: {_json_value(v, depth + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, list | tuple):
        if not value:
            return "[]"
        return "[\n" + ",\n".join(f"{inner}{_json_value(v, depth + 1)}" for v in value) + f"\n{pad}]"
    raise TypeError(f"cannot encode {type(value).__name__} as JSON")


def model_to_json(model: BaseModel) -> str:
    """Serialize any model with stable field order and 17-digit floats."""
    return _json_value(model, 0) + "\n"


def report_to_json(report: MetricsReport) -> str:
    """Serialize a report with stable field order and 17-digit floats."""
    return model_to_json(report)


def parse_json_report(text: str) -> MetricsReport:
    """Inverse of :func:`report_to_json`."""
    try:
        return MetricsReport.model_validate_json(text)
    except ValidationError as e:
        raise ParseError(1, f"not a metrics report: {e}") from e


def write_json_report(report: MetricsReport, path: Path) -> None:
    """Write ``report`` as JSON to ``path``."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report_to_json(report), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write metrics report {path}: {e}") from e


def load_metrics_report(path: Path) -> MetricsReport:
    """Read a JSON report written by :func:`write_json_report`."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read metrics report {path}: {e}") from e
    return parse_json_report(text)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def _table(rows: list[BaseModel], columns: tuple[str, ...] | None = None) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    if columns is None:
        columns = tuple(type(rows[0]).model_fields) if rows else ()
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(getattr(row, c)) for c in columns])
    return buffer.getvalue()


def report_tables(report: MetricsReport) -> dict[str, str]:
    """One CSV document per report table, keyed by table name."""
    return {
        "detectors": _table(list(report.detectors)),
        "risk_coverage": _table(list(report.risk_coverage)),
        "phenotype": _table(list(report.phenotype.per_tag)),
        "reliability": _table(list(report.phenotype.reliability)),
        "false_friends": _table(list(report.false_friends)),
        "verdicts": _table(list(report.verdicts)),
    }


def emit_report(run_dir: Path, fmt: ReportFormat, out_dir: Path | None = None) -> list[Path]:
    """Emit a finished run's report as one JSON file or one CSV file per table.

    Args:
        run_dir: Run directory holding ``manifest.json`` and ``metrics.json``.
        fmt: ``json`` or ``csv``.
        out_dir: Destination, ``<run_dir>/report`` by default.

    Returns:
        Written files, in table order.

    Raises:
        EmissionError: If the run has not completed every stage.
    """
    manifest = read_manifest(run_dir)
    missing = missing_stages(manifest)
    if manifest.incomplete or missing:
        raise EmissionError(missing or [manifest.failed_stage or "unknown"])
    report = load_metrics_report(run_dir / METRICS_FILE)
    target = out_dir or run_dir / REPORT_DIR
    if fmt == "json":
        path = target / "report.json"
        write_json_report(report, path)
        return [path]

    written = []
    try:
        target.mkdir(parents=True, exist_ok=True)
        for name, text in report_tables(report).items():
            path = target / f"{name}.csv"
            path.write_text(text, encoding="utf-8")
            written.append(path)
    except OSError as e:
        raise StorageError(f"cannot write report tables to {target}: {e}") from e
    return written
