"""Training-distribution statistics and diagonal Mahalanobis OOD scoring."""

import numpy as np
from numpy.typing import ArrayLike, NDArray

from expertbounds.datatypes.benchmark_types import Split
from expertbounds.datatypes.model_types import ExpertModel, ExpertStats
from expertbounds.errors import DimensionError, StatsError
from expertbounds.experts.embedding import embed
from expertbounds.numerics.core import as_finite_vector

VARIANCE_FLOOR = 1e-6


def stats_from_embeddings(embeddings: NDArray[np.float64]) -> ExpertStats:
    """Centroid and floored per-dimension population variance of a set of embeddings."""
    if embeddings.ndim != 2 or embeddings.shape[0] == 0:
        raise StatsError("cannot fit statistics on an empty dataset")
    variance = np.maximum(embeddings.var(axis=0), VARIANCE_FLOOR)
    return ExpertStats(centroid=embeddings.mean(axis=0), variance=variance, sample_count=int(embeddings.shape[0]))


def fit_expert_stats(model: ExpertModel, dataset: Split) -> ExpertStats:
    """Embed the expert's own training samples and summarize them.

    Raises:
        StatsError: If the dataset is empty.
    """
    if len(dataset) == 0:
        raise StatsError(f"no samples to fit statistics for expert '{model.domain_id}'")
    return stats_from_embeddings(embed(model.embed_params, dataset.features))


def ood_score(stats: ExpertStats, embedding: ArrayLike) -> float:
    """Diagonal Mahalanobis distance ``sqrt(sum((e - c)^2 / v))`` of one embedding.

    Raises:
        DimensionError: If the embedding width differs from the statistics.
    """
    vec = as_finite_vector(embedding, "embedding")
    if vec.size != stats.dim:
        raise DimensionError(f"embedding has {vec.size} dims, statistics have {stats.dim}")
    return float(ood_score_rows(stats, vec[np.newaxis, :])[0])


def ood_score_rows(stats: ExpertStats, embeddings: NDArray[np.float64]) -> NDArray[np.float64]:
    """Vectorized :func:`ood_score` over embedding rows."""
    if embeddings.shape[-1] != stats.dim:
        raise DimensionError(f"embeddings have {embeddings.shape[-1]} dims, statistics have {stats.dim}")
    return np.sqrt(np.sum((embeddings - stats.centroid) ** 2 / stats.variance, axis=-1))


def distance_matrix(stats: list[ExpertStats], embeddings: NDArray[np.float64]) -> NDArray[np.float64]:
    """OOD scores of every row against every expert, shape (N, K)."""
    return np.stack([ood_score_rows(s, embeddings) for s in stats], axis=1)
