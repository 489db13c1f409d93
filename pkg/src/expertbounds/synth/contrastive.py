"""Contrastive pair sampling for embedding training."""

from collections import defaultdict

import numpy as np

from expertbounds.datatypes.benchmark_types import Benchmark, CaseTag, ContrastivePair, PairRelation, Split, SplitName
from expertbounds.errors import GenerationError
from expertbounds.numerics.rng import make_rng


def draw_contrastive_pairs(
    split: Split, domain_ids: tuple[str, ...], pairs_per_relation: int, seed: int
) -> tuple[ContrastivePair, ...]:
    """Draw ``pairs_per_relation`` same-domain and false-friend pairs from one split.

    Same-domain pairs join two distinct in-domain samples of one domain. False-friend pairs
    join two samples of one shared cluster that have different owners.

    Raises:
        GenerationError: If the split cannot supply either relation.
    """
    if pairs_per_relation == 0:
        return ()
    rng = make_rng(seed, "synth", "pairs", split.name.value)

    by_domain = {d: np.flatnonzero(split.mask(owner=d, tag=CaseTag.IN_DOMAIN)) for d in domain_ids}
    eligible_domains = [d for d in domain_ids if by_domain[d].size >= 2]
    if not eligible_domains:
        raise GenerationError("no domain has two in-domain samples for same-domain pairs")

    by_cluster: dict[int, dict[str, list[int]]] = defaultdict(lambda: defaultdict(list))
    for i in np.flatnonzero(split.mask(tag=CaseTag.BOUNDARY)):
        by_cluster[int(split.cluster_ids[i])][split.owners[i]].append(int(i))
    eligible_clusters = sorted(c for c, owners in by_cluster.items() if len(owners) >= 2)
    if not eligible_clusters:
        raise GenerationError("no shared cluster holds samples of both owners for false-friend pairs")

    pairs: list[ContrastivePair] = []
    for _ in range(pairs_per_relation):
        domain = eligible_domains[int(rng.integers(len(eligible_domains)))]
        a, b = rng.choice(by_domain[domain], size=2, replace=False)
        pairs.append(ContrastivePair(split.example(int(a)), split.example(int(b)), PairRelation.SAME_DOMAIN, int(a), int(b)))

    for _ in range(pairs_per_relation):
        cluster_id = eligible_clusters[int(rng.integers(len(eligible_clusters)))]
        owners = sorted(by_cluster[cluster_id])
        first = owners[int(rng.integers(len(owners)))]
        second_choices = [o for o in owners if o != first]
        second = second_choices[int(rng.integers(len(second_choices)))]
        a = by_cluster[cluster_id][first][int(rng.integers(len(by_cluster[cluster_id][first])))]
        b = by_cluster[cluster_id][second][int(rng.integers(len(by_cluster[cluster_id][second])))]
        pairs.append(ContrastivePair(split.example(a), split.example(b), PairRelation.FALSE_FRIEND, a, b))
    return tuple(pairs)


def make_contrastive_pairs(benchmark: Benchmark, pairs_per_relation: int, seed: int) -> list[ContrastivePair]:
    """Draw contrastive pairs from the benchmark's training split.

    Args:
        benchmark: Benchmark with at least one false-friend pair.
        pairs_per_relation: Number of pairs of each relation.
        seed: Seed of the pair stream.

    Raises:
        GenerationError: If the benchmark has no shared clusters or too few samples.
    """
    if pairs_per_relation == 0:
        return []
    if not any(d.shared_cluster_ids for d in benchmark.domains.values()):
        raise GenerationError("benchmark has no false-friend clusters to draw pairs from")
    return list(draw_contrastive_pairs(benchmark.splits[SplitName.TRAIN], benchmark.domain_ids, pairs_per_relation, seed))
