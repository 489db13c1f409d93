import csv
import io
from collections import Counter
from collections.abc import Iterable
from enum import Enum
from pathlib import Path
from threading import Lock

import numpy as np
from pydantic import ValidationError

from expertbounds.datatypes.detection_types import ResponseAction
from expertbounds.datatypes.metrics_types import DecisionRecord, ExpertMonitoring, GlobalMonitoring
from expertbounds.errors import ParseError, StorageError
from expertbounds.synth.storage import fmt_float

RECORD_COLUMNS: tuple[str, ...] = tuple(DecisionRecord.model_fields)
_LIST_COLUMNS = {"selected", "selected_weights"}

_ABSTAINING = {ResponseAction.ABSTAIN, ResponseAction.FALLBACK, ResponseAction.REQUEST_CONTEXT}


def _mean(values: Iterable[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


class DecisionLog:
    """In-memory log of per-query decisions plus the label-free monitoring view over it."""

    def __init__(self, records: Iterable[DecisionRecord] = ()) -> None:
        self._records: list[DecisionRecord] = list(records)
        self._lock = Lock()

    def __len__(self) -> int:
        return len(self._records)

    def add(self, record: DecisionRecord) -> None:
        """Append one decision.

        Args:
            record (DecisionRecord): The decision to log.
        """
        with self._lock:
            self._records.append(record)

    def records(self) -> list[DecisionRecord]:
        """All decisions ordered by query id.

        Returns:
            list[DecisionRecord]: Logged decisions.
        """
        with self._lock:
            return sorted(self._records, key=lambda r: r.query_id)

    def expert_monitoring(self, domain_id: str) -> ExpertMonitoring:
        """Aggregates for the queries routed (top-1) to one expert.

        Only inference-time fields are read; oracle annotations are ignored.

        Args:
            domain_id (str): The expert's domain id.

        Returns:
            ExpertMonitoring: Aggregated signals for that expert.
        """
        routed = [r for r in self.records() if r.routed_expert == domain_id]
        if not routed:
            return ExpertMonitoring(
                domain_id=domain_id,
                total_queries=0,
                avg_routing_entropy=0.0,
                avg_disagreement=None,
                avg_reliability=None,
                verdict_counts={},
                action_counts={},
            )
        return ExpertMonitoring(
            domain_id=domain_id,
            total_queries=len(routed),
            avg_routing_entropy=float(np.mean([r.routing_entropy for r in routed])),
            avg_disagreement=_mean(r.mean_jsd for r in routed),
            avg_reliability=_mean(r.meta_reliability for r in routed),
            verdict_counts=dict(sorted(Counter(r.verdict.value for r in routed).items())),
            action_counts=dict(sorted(Counter(r.action.value for r in routed).items())),
        )

    def monitoring_summary(self) -> GlobalMonitoring:
        """Global aggregates plus one block per routed expert.

        Returns:
            GlobalMonitoring: Aggregated signals across all logged queries.
        """
        records = self.records()
        experts = sorted({r.routed_expert for r in records})
        if not records:
            return GlobalMonitoring(
                total_queries=0,
                avg_routing_entropy=0.0,
                avg_disagreement=None,
                abstention_rate=0.0,
                verdict_counts={},
                action_counts={},
                per_expert=[],
            )
        return GlobalMonitoring(
            total_queries=len(records),
            avg_routing_entropy=float(np.mean([r.routing_entropy for r in records])),
            avg_disagreement=_mean(r.mean_jsd for r in records),
            abstention_rate=sum(r.action in _ABSTAINING for r in records) / len(records),
            verdict_counts=dict(sorted(Counter(r.verdict.value for r in records).items())),
            action_counts=dict(sorted(Counter(r.action.value for r in records).items())),
            per_expert=[self.expert_monitoring(d) for d in experts],
        )


def _encode(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt_float(value)
    if isinstance(value, list):
        return "|".join(_encode(v) for v in value)
    if isinstance(value, Enum):
        return str(value.value)
    return str(value)


def serialize_records(records: Iterable[DecisionRecord]) -> str:
    """Decision log as CSV: one header row, one row per query, floats at 17 significant digits."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RECORD_COLUMNS)
    for record in records:
        writer.writerow([_encode(getattr(record, column)) for column in RECORD_COLUMNS])
    return buffer.getvalue()


def parse_records(text: str) -> list[DecisionRecord]:
    """Inverse of :func:`serialize_records`.

    Raises:
        ParseError: On a wrong header or a row that does not validate.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != RECORD_COLUMNS:
        raise ParseError(1, "decision log header does not match the record columns")
    records = []
    for line_number, row in enumerate(rows[1:], start=2):
        if len(row) != len(RECORD_COLUMNS):
            raise ParseError(line_number, f"expected {len(RECORD_COLUMNS)} fields, got {len(row)}")
        values: dict[str, object] = {}
        for column, raw in zip(RECORD_COLUMNS, row, strict=True):
            if column in _LIST_COLUMNS:
                values[column] = raw.split("|") if raw else []
            else:
                values[column] = None if raw == "" else raw
        try:
            records.append(DecisionRecord.model_validate(values))
        except ValidationError as e:
            raise ParseError(line_number, str(e)) from e
    return records


def write_decision_log(log: DecisionLog, path: Path) -> None:
    """Persist a decision log as CSV."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_records(log.records()), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write decision log {path}: {e}") from e


def read_decision_log(path: Path) -> DecisionLog:
    """Load a decision log written by :func:`write_decision_log`."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read decision log {path}: {e}") from e
    return DecisionLog(parse_records(text))
