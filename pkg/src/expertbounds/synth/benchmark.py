"""Synthetic false-friend benchmark generator.

Domains own private clusters; false-friend pairs share clusters with identical surface
distribution but divergent affine label functions; gap clusters belong to nobody and are
labeled by a hidden gap function so that answering them anyway has a measurable accuracy.
"""

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from expertbounds.datatypes.benchmark_types import (
    GAP_OWNER,
    Benchmark,
    BenchmarkConfig,
    CaseTag,
    ClusterKind,
    ClusterSpec,
    DomainSpec,
    FalseFriendPair,
    LabelFunction,
    Split,
    SplitName,
)
from expertbounds.errors import GenerationError, UnknownDomainError
from expertbounds.numerics.rng import make_rng
from expertbounds.synth.contrastive import draw_contrastive_pairs

_CASE_BY_KIND = {
    ClusterKind.PRIVATE: CaseTag.IN_DOMAIN,
    ClusterKind.SHARED: CaseTag.BOUNDARY,
    ClusterKind.GAP: CaseTag.GAP,
}


def _draw_label_fn(rng: np.random.Generator, classes: int, dim: int) -> LabelFunction:
    return LabelFunction(label_map=rng.standard_normal((classes, dim)), bias=rng.normal(0.0, 0.5, size=classes))


def _layout_clusters(config: BenchmarkConfig) -> list[ClusterSpec]:
    rng = make_rng(config.seed, "synth", "centers")
    layout: list[tuple[ClusterKind, tuple[str, ...]]] = []
    for domain in config.domain_ids:
        layout.extend((ClusterKind.PRIVATE, (domain,)) for _ in range(config.private_clusters_per_domain))
    for pair in config.false_friend_pairs:
        layout.extend((ClusterKind.SHARED, (pair.first, pair.second)) for _ in range(pair.shared_clusters))
    layout.extend((ClusterKind.GAP, ()) for _ in range(config.gap_clusters))
    return [
        ClusterSpec(cluster_id=i, kind=kind, owners=owners, center=rng.uniform(-1.0, 1.0, size=config.input_dim))
        for i, (kind, owners) in enumerate(layout)
    ]


def _owner_codes(config: BenchmarkConfig) -> dict[str, NDArray[np.float64]]:
    rng = make_rng(config.seed, "synth", "codes")
    raw = rng.standard_normal((config.num_domains, config.context_dims))
    if config.context_dims:
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    return {domain: raw[i] for i, domain in enumerate(config.domain_ids)}


def _sample_split(
    config: BenchmarkConfig,
    split: SplitName,
    clusters: list[ClusterSpec],
    codes: dict[str, NDArray[np.float64]],
) -> tuple[NDArray[np.float64], list[str], NDArray[np.int64], list[CaseTag]]:
    rng = make_rng(config.seed, "synth", "samples", split.value)
    count = config.samples_per_cluster(split)
    kappa = config.context_informativeness
    no_code = np.zeros(config.context_dims)

    blocks, owners, cluster_ids, tags = [], [], [], []
    for cluster in clusters:
        surface = cluster.center + rng.normal(0.0, config.cluster_sigma, size=(count, config.input_dim))
        if cluster.kind == ClusterKind.SHARED:
            picks = rng.integers(0, 2, size=count)
            row_owners = [cluster.owners[p] for p in picks]
        elif cluster.kind == ClusterKind.PRIVATE:
            row_owners = [cluster.owners[0]] * count
        else:
            row_owners = [GAP_OWNER] * count
        noise = rng.standard_normal((count, config.context_dims))
        code_rows = np.array([codes.get(o, no_code) for o in row_owners]).reshape(count, config.context_dims)
        context = kappa * code_rows + (1.0 - kappa) * noise
        blocks.append(np.hstack([surface, context]))
        owners.extend(row_owners)
        cluster_ids.extend([cluster.cluster_id] * count)
        tags.extend([_CASE_BY_KIND[cluster.kind]] * count)
    return np.vstack(blocks), owners, np.asarray(cluster_ids, dtype=np.int64), tags


def _pair_divergence(
    pair: FalseFriendPair,
    fns: dict[str, LabelFunction],
    samples: dict[SplitName, tuple[NDArray[np.float64], list[str], NDArray[np.int64], list[CaseTag]]],
    shared_ids: set[int],
) -> float:
    """Smallest disagreement rate over every (split, owner) subset of the pair's shared clusters."""
    worst = 1.0
    for features, owners, cluster_ids, _ in samples.values():
        in_pair = np.isin(cluster_ids, list(shared_ids))
        for owner in (pair.first, pair.second):
            rows = in_pair & np.array([o == owner for o in owners], dtype=bool)
            if not rows.any():
                continue
            x = features[rows]
            worst = min(worst, float(np.mean(fns[pair.first].apply(x) != fns[pair.second].apply(x))))
    return worst


def _enforce_divergence(
    config: BenchmarkConfig,
    fns: dict[str, LabelFunction],
    clusters: list[ClusterSpec],
    samples: dict[SplitName, tuple[NDArray[np.float64], list[str], NDArray[np.int64], list[CaseTag]]],
    rng: np.random.Generator,
) -> None:
    def shared_of(pair: FalseFriendPair) -> set[int]:
        return {
            c.cluster_id for c in clusters if c.kind == ClusterKind.SHARED and c.owners == (pair.first, pair.second)
        }

    for pair in config.false_friend_pairs:
        shared_ids = shared_of(pair)
        if not shared_ids:
            continue
        for attempt in range(config.max_label_retries + 1):
            divergence = _pair_divergence(pair, fns, samples, shared_ids)
            if divergence >= config.min_divergence:
                logger.debug(f"Pair {pair.first}:{pair.second} reached divergence {divergence:.3f} after {attempt} redraws")
                break
            fns[pair.second] = _draw_label_fn(rng, config.classes, config.feature_dim)
        else:
            raise GenerationError(
                f"false-friend pair {pair.first}:{pair.second} did not reach min_divergence "
                f"{config.min_divergence} within {config.max_label_retries} redraws"
            )

    # A later redraw can undo an earlier pair when domains appear in several pairs.
    for pair in config.false_friend_pairs:
        shared_ids = shared_of(pair)
        if shared_ids and _pair_divergence(pair, fns, samples, shared_ids) < config.min_divergence:
            raise GenerationError(f"false-friend pair {pair.first}:{pair.second} lost its divergence to a later redraw")


def label_oracle(
    domains: dict[str, DomainSpec], features: NDArray[np.float64], owner: str, gap_fn: LabelFunction
) -> int:
    """Causally correct label of one sample under its owner's label function.

    Args:
        domains: Domain specs by id.
        features: Full feature vector (surface + context dims).
        owner: Owning domain id, or ``GAP``.
        gap_fn: The hidden label function of unowned clusters.

    Raises:
        UnknownDomainError: If ``owner`` is neither a domain nor ``GAP``.
    """
    row = np.asarray(features, dtype=np.float64)[np.newaxis, :]
    return int(oracle_labels(row, (owner,), domains, gap_fn)[0])


def oracle_labels(
    features: NDArray[np.float64], owners: tuple[str, ...], domains: dict[str, DomainSpec], gap_fn: LabelFunction
) -> NDArray[np.int64]:
    """Vectorized :func:`label_oracle` over feature rows and their owners.

    Raises:
        UnknownDomainError: If an owner is neither a domain nor ``GAP``.
    """
    labels = np.empty(features.shape[0], dtype=np.int64)
    owner_arr = np.asarray(owners)
    for owner in sorted(set(owners)):
        if owner == GAP_OWNER:
            fn = gap_fn
        elif owner in domains:
            fn = domains[owner].label_fn
        else:
            raise UnknownDomainError(f"unknown owner domain '{owner}'")
        rows = owner_arr == owner
        labels[rows] = fn.apply(features[rows])
    return labels


def build_benchmark(config: BenchmarkConfig) -> Benchmark:
    """Generate the full benchmark; a pure function of ``config`` (including its seed).

    Raises:
        GenerationError: If a false-friend pair cannot reach ``min_divergence``.
    """
    clusters = _layout_clusters(config)
    codes = _owner_codes(config)
    samples = {split: _sample_split(config, split, clusters, codes) for split in SplitName}

    label_rng = make_rng(config.seed, "synth", "labels")
    fns = {domain: _draw_label_fn(label_rng, config.classes, config.feature_dim) for domain in config.domain_ids}
    gap_fn = _draw_label_fn(label_rng, config.classes, config.feature_dim)
    _enforce_divergence(config, fns, clusters, samples, label_rng)

    domains = {
        domain: DomainSpec(
            domain_id=domain,
            label_fn=fns[domain],
            owner_code=codes[domain],
            owned_cluster_ids=tuple(
                c.cluster_id for c in clusters if c.kind == ClusterKind.PRIVATE and domain in c.owners
            ),
            shared_cluster_ids=tuple(c.cluster_id for c in clusters if c.kind == ClusterKind.SHARED and domain in c.owners),
        )
        for domain in config.domain_ids
    }

    splits: dict[SplitName, Split] = {}
    for split, (features, owners, cluster_ids, tags) in samples.items():
        labels = np.empty(len(owners), dtype=np.int64)
        for owner in sorted(set(owners)):
            rows = np.array([o == owner for o in owners], dtype=bool)
            fn = gap_fn if owner == GAP_OWNER else fns[owner]
            labels[rows] = fn.apply(features[rows])
        splits[split] = Split(split, features, labels, tuple(owners), cluster_ids, tuple(tags))

    has_shared = any(c.kind == ClusterKind.SHARED for c in clusters)
    pairs = ()
    if has_shared and config.contrastive_pairs_per_relation:
        pairs = draw_contrastive_pairs(
            splits[SplitName.TRAIN], config.domain_ids, config.contrastive_pairs_per_relation, config.seed
        )

    logger.info(
        f"Built benchmark: {config.num_domains} domains, {len(clusters)} clusters, "
        f"{sum(len(s) for s in splits.values())} samples, {len(pairs)} contrastive pairs"
    )
    return Benchmark(
        config=config,
        domains=domains,
        gap_fn=gap_fn,
        clusters=tuple(clusters),
        splits=splits,
        contrastive_pairs=tuple(pairs),
    )
