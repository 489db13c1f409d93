"""Text serialization of a benchmark.

Layout: a format line, a block of header lines (config, owner codes, label functions, clusters,
contrastive pairs), then one block per split of comma-separated records with the fixed field
order ``features..., class_label, owner_domain, cluster_id, case_tag``, and a closing ``end``.
Floats are written with 17 significant digits so reading back is exact.
"""

import hashlib
from collections.abc import Iterable
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from expertbounds.datatypes.benchmark_types import (
    GAP_OWNER,
    Benchmark,
    BenchmarkConfig,
    CaseTag,
    ClusterKind,
    ClusterSpec,
    ContrastivePair,
    DomainSpec,
    LabelFunction,
    PairRelation,
    Split,
    SplitName,
)
from expertbounds.errors import ParseError, StorageError

FORMAT_LINE = "expertbounds-benchmark,1"


def fmt_float(value: float) -> str:
    """17-significant-digit text form of a float."""
    return format(float(value), ".17g")


def _floats(values: Iterable[float]) -> str:
    return ",".join(fmt_float(v) for v in values)


def serialize_benchmark(benchmark: Benchmark) -> str:
    """Render a benchmark in the dataset text format."""
    config = benchmark.config
    lines = [FORMAT_LINE, f"config,{config.model_dump_json()}"]
    for domain_id, spec in benchmark.domains.items():
        lines.append(f"code,{domain_id},{_floats(spec.owner_code)}".rstrip(","))
    for owner, fn in [*((d, s.label_fn) for d, s in benchmark.domains.items()), (GAP_OWNER, benchmark.gap_fn)]:
        rows, cols = fn.label_map.shape
        lines.append(f"label_fn,{owner},{rows},{cols},{_floats(fn.label_map.ravel())},{_floats(fn.bias)}")
    for cluster in benchmark.clusters:
        lines.append(f"cluster,{cluster.cluster_id},{cluster.kind.value},{'|'.join(cluster.owners)},{_floats(cluster.center)}")
    lines.append(f"pairs,{len(benchmark.contrastive_pairs)}")
    lines.extend(f"pair,{p.relation.value},{p.anchor_index},{p.other_index}" for p in benchmark.contrastive_pairs)

    feature_cols = ",".join(f"f{i}" for i in range(config.feature_dim))
    lines.append(f"columns,{feature_cols},class_label,owner_domain,cluster_id,case_tag")
    for name in SplitName:
        split = benchmark.splits[name]
        lines.append(f"split,{name.value},{len(split)}")
        for i in range(len(split)):
            lines.append(
                f"{_floats(split.features[i])},{int(split.class_labels[i])},{split.owners[i]},"
                f"{int(split.cluster_ids[i])},{split.case_tags[i].value}"
            )
    lines.append("end")
    return "\n".join(lines) + "\n"


def benchmark_hash(benchmark: Benchmark) -> str:
    """SHA-256 of the serialized benchmark; identifies the dataset across runs."""
    return hashlib.sha256(serialize_benchmark(benchmark).encode("utf-8")).hexdigest()


def write_benchmark(benchmark: Benchmark, path: Path) -> None:
    """Write a benchmark file.

    Raises:
        StorageError: If the file cannot be written.
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_benchmark(benchmark), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write benchmark to {path}: {e}") from e


class _Reader:
    def __init__(self, lines: list[str]) -> None:
        self._lines = lines
        self.position = 0

    @property
    def line_number(self) -> int:
        return self.position + 1

    def next(self, kind: str | None = None) -> list[str]:
        if self.position >= len(self._lines):
            raise ParseError(self.line_number, f"unexpected end of file, expected {kind or 'a record'}")
        fields = self._lines[self.position].split(",")
        if kind is not None and fields[0] != kind:
            raise ParseError(self.line_number, f"expected '{kind}' line, found '{fields[0]}'")
        self.position += 1
        return fields

    def raw(self, kind: str) -> str:
        line = self._lines[self.position] if self.position < len(self._lines) else ""
        prefix = f"{kind},"
        if not line.startswith(prefix):
            raise ParseError(self.line_number, f"expected '{kind}' line")
        self.position += 1
        return line[len(prefix) :]

    def floats(self, values: list[str]) -> np.ndarray:
        try:
            return np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as e:
            raise ParseError(self.position, f"bad number: {e}") from e

    def integer(self, value: str) -> int:
        try:
            return int(value)
        except ValueError as e:
            raise ParseError(self.position, f"bad integer '{value}'") from e


def parse_benchmark(text: str) -> Benchmark:
    """Parse the dataset text format.

    Raises:
        ParseError: With the offending line number if the text is malformed or truncated.
    """
    reader = _Reader(text.splitlines())
    if reader.next() != FORMAT_LINE.split(","):
        raise ParseError(1, "not an expertbounds benchmark file")
    try:
        config = BenchmarkConfig.model_validate_json(reader.raw("config"))
    except ValidationError as e:
        raise ParseError(reader.position, f"invalid config: {e}") from e

    codes = {}
    for domain in config.domain_ids:
        fields = reader.next("code")
        if fields[1] != domain:
            raise ParseError(reader.position, f"expected code for domain {domain}")
        codes[domain] = reader.floats(fields[2:])

    fns: dict[str, LabelFunction] = {}
    for owner in (*config.domain_ids, GAP_OWNER):
        fields = reader.next("label_fn")
        rows, cols = reader.integer(fields[2]), reader.integer(fields[3])
        values = reader.floats(fields[4:])
        if fields[1] != owner or values.size != rows * cols + rows:
            raise ParseError(reader.position, f"malformed label function for {owner}")
        fns[owner] = LabelFunction(values[: rows * cols].reshape(rows, cols), values[rows * cols :])

    clusters = []
    for i in range(config.total_clusters):
        fields = reader.next("cluster")
        if reader.integer(fields[1]) != i:
            raise ParseError(reader.position, f"expected cluster {i}")
        try:
            kind = ClusterKind(fields[2])
        except ValueError as e:
            raise ParseError(reader.position, f"unknown cluster kind '{fields[2]}'") from e
        owners = tuple(fields[3].split("|")) if fields[3] else ()
        clusters.append(ClusterSpec(i, kind, owners, reader.floats(fields[4:])))

    pair_count = reader.integer(reader.next("pairs")[1])
    pair_refs = []
    for _ in range(pair_count):
        fields = reader.next("pair")
        try:
            relation = PairRelation(fields[1])
        except ValueError as e:
            raise ParseError(reader.position, f"unknown pair relation '{fields[1]}'") from e
        pair_refs.append((reader.position, relation, reader.integer(fields[2]), reader.integer(fields[3])))

    reader.next("columns")
    width = config.feature_dim
    splits: dict[SplitName, Split] = {}
    for name in SplitName:
        fields = reader.next("split")
        if fields[1] != name.value:
            raise ParseError(reader.position, f"expected split '{name.value}'")
        count = reader.integer(fields[2])
        features = np.empty((count, width))
        labels = np.empty(count, dtype=np.int64)
        cluster_ids = np.empty(count, dtype=np.int64)
        owners, tags = [], []
        for row in range(count):
            record = reader.next()
            if len(record) != width + 4:
                raise ParseError(reader.position, f"record has {len(record)} fields, expected {width + 4}")
            features[row] = reader.floats(record[:width])
            labels[row] = reader.integer(record[width])
            owners.append(record[width + 1])
            cluster_ids[row] = reader.integer(record[width + 2])
            try:
                tags.append(CaseTag(record[width + 3]))
            except ValueError as e:
                raise ParseError(reader.position, f"unknown case tag '{record[width + 3]}'") from e
        splits[name] = Split(name, features, labels, tuple(owners), cluster_ids, tuple(tags))
    reader.next("end")

    domains = {
        d: DomainSpec(
            domain_id=d,
            label_fn=fns[d],
            owner_code=codes[d],
            owned_cluster_ids=tuple(c.cluster_id for c in clusters if c.kind == ClusterKind.PRIVATE and d in c.owners),
            shared_cluster_ids=tuple(c.cluster_id for c in clusters if c.kind == ClusterKind.SHARED and d in c.owners),
        )
        for d in config.domain_ids
    }
    train = splits[SplitName.TRAIN]
    for line, _, a, b in pair_refs:
        if not (0 <= a < len(train) and 0 <= b < len(train)):
            raise ParseError(line, f"pair index out of range for {len(train)} training rows")
    pairs = tuple(ContrastivePair(train.example(a), train.example(b), rel, a, b) for _, rel, a, b in pair_refs)
    return Benchmark(config, domains, fns[GAP_OWNER], tuple(clusters), splits, pairs)


def read_benchmark(path: Path) -> Benchmark:
    """Read a benchmark file.

    Raises:
        StorageError: If the file cannot be read.
        ParseError: If it is malformed; no partial benchmark is returned.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot read benchmark from {path}: {e}") from e
    return parse_benchmark(text)


def dataset_round_trip(benchmark: Benchmark, path: Path) -> Benchmark:
    """Write ``benchmark`` to ``path`` and read it back."""
    write_benchmark(benchmark, path)
    return read_benchmark(path)
