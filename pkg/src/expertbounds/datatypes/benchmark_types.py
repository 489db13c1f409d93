import string
from collections.abc import Iterator
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

GAP_OWNER = "GAP"


class CaseTag(StrEnum):
    """Oracle tag of a benchmark sample."""

    IN_DOMAIN = "in_domain"
    BOUNDARY = "boundary"
    GAP = "gap"


class SplitName(StrEnum):
    """Dataset split."""

    TRAIN = "train"
    VAL = "val"
    TEST = "test"


class ClusterKind(StrEnum):
    """Who owns a cluster: one domain, a false-friend pair, or nobody."""

    PRIVATE = "private"
    SHARED = "shared"
    GAP = "gap"


class PairRelation(StrEnum):
    """Relation between the two samples of a contrastive pair."""

    SAME_DOMAIN = "same_domain"
    FALSE_FRIEND = "false_friend"


class FalseFriendPair(BaseModel):
    """Two domains sharing ``shared_clusters`` clusters with divergent label functions."""

    model_config = ConfigDict(frozen=True)

    first: str
    second: str
    shared_clusters: int = Field(ge=0)


def _parse_pairs(value: Any) -> Any:
    if not isinstance(value, str):
        return value
    pairs = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            msg = f"false-friend pair '{chunk}' must look like 'A:B:2'"
            raise ValueError(msg)
        pairs.append({"first": parts[0].strip(), "second": parts[1].strip(), "shared_clusters": parts[2].strip()})
    return pairs


class BenchmarkConfig(BaseModel):
    """Shape of the synthetic false-friend benchmark."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_dim: int = Field(default=16, ge=1)
    num_domains: int = Field(default=4, ge=2, le=26)
    classes: int = Field(default=3, ge=2)
    private_clusters_per_domain: int = Field(default=3, ge=0)
    false_friend_pairs: tuple[FalseFriendPair, ...] = (
        FalseFriendPair(first="A", second="B", shared_clusters=2),
        FalseFriendPair(first="C", second="D", shared_clusters=1),
    )
    gap_clusters: int = Field(default=2, ge=0)
    cluster_sigma: float = Field(default=0.15, gt=0.0)
    context_informativeness: float = Field(default=0.3, ge=0.0, le=1.0, description="kappa")
    context_dims: int = Field(default=2, ge=0)
    train_samples_per_cluster: int = Field(default=200, ge=1)
    val_samples_per_cluster: int = Field(default=50, ge=1)
    test_samples_per_cluster: int = Field(default=100, ge=1)
    min_divergence: float = Field(default=0.5, ge=0.0, le=1.0, description="rho_min")
    max_label_retries: int = Field(default=200, ge=1)
    contrastive_pairs_per_relation: int = Field(default=100, ge=0)
    seed: int = 42

    @field_validator("false_friend_pairs", mode="before")
    @classmethod
    def parse_pairs(cls, v: Any) -> Any:
        """Accept the config-file form ``A:B:2,C:D:1``."""
        return _parse_pairs(v)

    @model_validator(mode="after")
    def check_consistency(self) -> "BenchmarkConfig":
        """Pairs must join distinct existing domains and at least one cluster must exist."""
        known = set(self.domain_ids)
        for pair in self.false_friend_pairs:
            if pair.first == pair.second:
                msg = f"false-friend pair {pair.first}:{pair.second} must join two distinct domains"
                raise ValueError(msg)
            for domain in (pair.first, pair.second):
                if domain not in known:
                    msg = f"false-friend pair references unknown domain '{domain}'"
                    raise ValueError(msg)
        if self.total_clusters == 0:
            msg = "benchmark has zero clusters configured"
            raise ValueError(msg)
        return self

    @property
    def domain_ids(self) -> tuple[str, ...]:
        """Domain ids ``A``, ``B``, ... in order."""
        return tuple(string.ascii_uppercase[: self.num_domains])

    @property
    def feature_dim(self) -> int:
        """Surface dims plus context dims."""
        return self.input_dim + self.context_dims

    @property
    def total_clusters(self) -> int:
        """Private, shared and gap clusters together."""
        shared = sum(p.shared_clusters for p in self.false_friend_pairs)
        return self.num_domains * self.private_clusters_per_domain + shared + self.gap_clusters

    def samples_per_cluster(self, split: SplitName) -> int:
        """Per-cluster sample count of a split."""
        return {
            SplitName.TRAIN: self.train_samples_per_cluster,
            SplitName.VAL: self.val_samples_per_cluster,
            SplitName.TEST: self.test_samples_per_cluster,
        }[split]


@dataclass(frozen=True, eq=False)
class LabelFunction:
    """Affine causal label function ``y = argmax(label_map @ x + bias)``."""

    label_map: NDArray[np.float64]
    bias: NDArray[np.float64]

    def apply(self, features: NDArray[np.float64]) -> NDArray[np.int64]:
        """Labels for a batch of feature rows; ties resolve to the lowest class index."""
        return np.argmax(features @ self.label_map.T + self.bias, axis=1)

    def equals(self, other: "LabelFunction") -> bool:
        """Exact array equality."""
        return bool(np.array_equal(self.label_map, other.label_map) and np.array_equal(self.bias, other.bias))


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """One domain: its label function, context code and cluster ownership."""

    domain_id: str
    label_fn: LabelFunction
    owner_code: NDArray[np.float64]
    owned_cluster_ids: tuple[int, ...]
    shared_cluster_ids: tuple[int, ...]

    def equals(self, other: "DomainSpec") -> bool:
        """Field-for-field equality."""
        return (
            self.domain_id == other.domain_id
            and self.label_fn.equals(other.label_fn)
            and bool(np.array_equal(self.owner_code, other.owner_code))
            and self.owned_cluster_ids == other.owned_cluster_ids
            and self.shared_cluster_ids == other.shared_cluster_ids
        )


@dataclass(frozen=True, eq=False)
class ClusterSpec:
    """A Gaussian cluster of surface features."""

    cluster_id: int
    kind: ClusterKind
    owners: tuple[str, ...]
    center: NDArray[np.float64]

    def equals(self, other: "ClusterSpec") -> bool:
        """Field-for-field equality."""
        return (
            self.cluster_id == other.cluster_id
            and self.kind == other.kind
            and self.owners == other.owners
            and bool(np.array_equal(self.center, other.center))
        )


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """One benchmark sample with its oracle annotations."""

    features: NDArray[np.float64]
    class_label: int
    owner_domain: str
    cluster_id: int
    case_tag: CaseTag


@dataclass(frozen=True, eq=False)
class Split:
    """Column-oriented storage of one split's samples."""

    name: SplitName
    features: NDArray[np.float64]
    class_labels: NDArray[np.int64]
    owners: tuple[str, ...]
    cluster_ids: NDArray[np.int64]
    case_tags: tuple[CaseTag, ...]

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def __iter__(self) -> Iterator[LabeledExample]:
        return (self.example(i) for i in range(len(self)))

    def example(self, index: int) -> LabeledExample:
        """Materialize one sample."""
        return LabeledExample(
            features=self.features[index],
            class_label=int(self.class_labels[index]),
            owner_domain=self.owners[index],
            cluster_id=int(self.cluster_ids[index]),
            case_tag=self.case_tags[index],
        )

    def mask(self, *, owner: str | None = None, tag: CaseTag | None = None) -> NDArray[np.bool_]:
        """Boolean row mask selecting an owner and/or a case tag."""
        keep = np.ones(len(self), dtype=bool)
        if owner is not None:
            keep &= np.array([o == owner for o in self.owners], dtype=bool)
        if tag is not None:
            keep &= np.array([t == tag for t in self.case_tags], dtype=bool)
        return keep

    def subset(self, mask: NDArray[np.bool_]) -> "Split":
        """Rows selected by a boolean mask, order preserved."""
        idx = np.flatnonzero(mask)
        return Split(
            name=self.name,
            features=self.features[idx],
            class_labels=self.class_labels[idx],
            owners=tuple(self.owners[i] for i in idx),
            cluster_ids=self.cluster_ids[idx],
            case_tags=tuple(self.case_tags[i] for i in idx),
        )

    def equals(self, other: "Split") -> bool:
        """Field-for-field equality."""
        return (
            self.name == other.name
            and bool(np.array_equal(self.features, other.features))
            and bool(np.array_equal(self.class_labels, other.class_labels))
            and self.owners == other.owners
            and bool(np.array_equal(self.cluster_ids, other.cluster_ids))
            and self.case_tags == other.case_tags
        )


@dataclass(frozen=True, eq=False)
class ContrastivePair:
    """Two samples of one split, related either by owner or by shared cluster."""

    anchor: LabeledExample
    other: LabeledExample
    relation: PairRelation
    anchor_index: int
    other_index: int


@dataclass(frozen=True, eq=False)
class Benchmark:
    """A generated benchmark: domain specs, clusters, splits and contrastive pairs."""

    config: BenchmarkConfig
    domains: dict[str, DomainSpec]
    gap_fn: LabelFunction
    clusters: tuple[ClusterSpec, ...]
    splits: dict[SplitName, Split]
    contrastive_pairs: tuple[ContrastivePair, ...]

    @property
    def domain_ids(self) -> tuple[str, ...]:
        """Domain ids in expert order."""
        return tuple(self.domains)

    def cluster(self, cluster_id: int) -> ClusterSpec:
        """Cluster by id."""
        return self.clusters[cluster_id]

    def counterpart(self, cluster_id: int, owner: str) -> str | None:
        """For a shared cluster, the pair member that does not own this sample."""
        cluster = self.clusters[cluster_id]
        if cluster.kind != ClusterKind.SHARED:
            return None
        others = [o for o in cluster.owners if o != owner]
        return others[0] if others else None

    def equals(self, other: "Benchmark") -> bool:
        """Field-for-field equality (used for storage round trips)."""
        if self.config != other.config or tuple(self.domains) != tuple(other.domains):
            return False
        if not all(self.domains[d].equals(other.domains[d]) for d in self.domains):
            return False
        if not self.gap_fn.equals(other.gap_fn) or len(self.clusters) != len(other.clusters):
            return False
        if not all(a.equals(b) for a, b in zip(self.clusters, other.clusters, strict=True)):
            return False
        if set(self.splits) != set(other.splits) or not all(self.splits[s].equals(other.splits[s]) for s in self.splits):
            return False
        mine = [(p.relation, p.anchor_index, p.other_index) for p in self.contrastive_pairs]
        theirs = [(p.relation, p.anchor_index, p.other_index) for p in other.contrastive_pairs]
        return mine == theirs
