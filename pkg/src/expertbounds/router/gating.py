"""Learned gate, centroid-kernel affinities and top-k selection."""

from collections.abc import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from expertbounds.datatypes.config_types import RouterConfig
from expertbounds.datatypes.model_types import ExpertStats, RouterParams, RoutingDecision
from expertbounds.errors import ConfigError, ParameterError
from expertbounds.experts.stats import ood_score_rows
from expertbounds.numerics.core import as_finite_vector, entropy, entropy_rows, softmax, softmax_rows
from expertbounds.numerics.mlp import init_mlp, mlp_forward
from expertbounds.numerics.rng import make_rng

MARGIN_EPSILON = 1e-12

Array = NDArray[np.float64]


def init_router(embedding_dim: int, experts: int, config: RouterConfig, seed: int) -> RouterParams:
    """Seeded router ``embedding -> hidden -> K`` carrying the configured hyperparameters."""
    gate_net = init_mlp((embedding_dim, config.hidden, experts), make_rng(seed, "router", "init"))
    return RouterParams(
        gate_net=gate_net,
        tau=config.tau,
        k=min(config.k, experts),
        lambda_lb=config.lambda_lb,
        lambda_boundary=config.lambda_boundary,
        lambda_coverage=config.lambda_coverage,
        kernel_sigma=config.kernel_sigma,
    )


def kernel_affinities(distances: Array, sigma: float) -> Array:
    """Gaussian kernel ``exp(-d^2 / (2 sigma^2))`` of centroid distances."""
    return np.exp(-(distances**2) / (2.0 * sigma * sigma))


def routing_margins(distances: Array) -> Array:
    """Relative gap of the two nearest centroids per row, clamped to [0, 1]."""
    nearest = np.sort(distances, axis=-1)
    d1, d2 = nearest[..., 0], nearest[..., 1]
    return np.clip((d2 - d1) / np.maximum(d2, MARGIN_EPSILON), 0.0, 1.0)


def select_top_k(gate_weights: ArrayLike, k: int) -> tuple[tuple[int, ...], Array]:
    """The ``k`` largest gate weights, renormalized.

    Ties go to the lower expert id. Ids come back in rank order.

    Raises:
        ParameterError: If ``k`` is outside ``[1, K]``.
    """
    weights = as_finite_vector(gate_weights, "gate_weights")
    if not 1 <= k <= weights.size:
        raise ParameterError(f"k must lie in [1, {weights.size}], got {k}")
    order = np.argsort(-weights, kind="stable")[:k]
    chosen = weights[order]
    return tuple(int(i) for i in order), chosen / chosen.sum()


def gate(
    router: RouterParams, embedding: ArrayLike, stats: Sequence[ExpertStats], k: int | None = None
) -> RoutingDecision:
    """Route one embedded query.

    Args:
        router: Gate network and hyperparameters.
        embedding: Query embedding.
        stats: Fitted statistics of every expert, in expert order.
        k: Override of ``router.k`` (1 when multi-expert activation is off).

    Raises:
        ConfigError: If statistics are missing for some expert.
    """
    vec = as_finite_vector(embedding, "embedding")
    if len(stats) != router.experts:
        raise ConfigError(f"router scores {router.experts} experts but statistics exist for {len(stats)}")
    distances = np.array([float(ood_score_rows(s, vec[np.newaxis, :])[0]) for s in stats])
    logits, _ = mlp_forward(router.gate_net, vec)
    weights = softmax(logits)
    selected, selected_weights = select_top_k(weights, router.k if k is None else k)
    return RoutingDecision(
        raw_affinities=kernel_affinities(distances, router.kernel_sigma),
        gate_logits=logits,
        gate_weights=weights,
        selected=selected,
        selected_weights=selected_weights,
        routing_entropy=entropy(weights),
        margin=float(routing_margins(distances)),
        distances=distances,
    )


def gate_weights_rows(router: RouterParams, embeddings: Array) -> tuple[Array, Array]:
    """Gate logits and weights for a batch of embeddings."""
    logits, _ = mlp_forward(router.gate_net, embeddings)
    return logits, softmax_rows(logits)


def routing_entropy_rows(router: RouterParams, embeddings: Array) -> Array:
    """Routing entropy ``H(g)`` per row."""
    _, weights = gate_weights_rows(router, embeddings)
    return entropy_rows(weights)
