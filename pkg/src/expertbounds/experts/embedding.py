"""Shared embedding network and its margin-based contrastive training.

Same-domain pairs are pulled together with ``d^2``; false-friend pairs (same surface
cluster, different owners) are pushed apart until they are at least ``margin`` away,
with loss ``max(0, margin - d)^2``.
"""

from collections.abc import Sequence

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from expertbounds.datatypes.benchmark_types import ContrastivePair, PairRelation
from expertbounds.datatypes.config_types import EmbeddingConfig
from expertbounds.errors import ParameterError, TrainingError
from expertbounds.numerics.mlp import (
    MlpParams,
    OptimizerState,
    add_grads,
    init_mlp,
    mlp_backward,
    mlp_forward,
    sgd_step,
)
from expertbounds.numerics.rng import make_rng


def init_embedding(input_dim: int, config: EmbeddingConfig, seed: int) -> MlpParams:
    """Seeded initial embedding network ``input -> hidden -> dim``."""
    return init_mlp((input_dim, config.hidden, config.dim), make_rng(seed, "embedding", "init"))


def embed(embed_params: MlpParams, features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Embedding of one input vector or a batch of rows."""
    out, _ = mlp_forward(embed_params, features)
    return out


def contrastive_pair_loss(distance: float, relation: PairRelation, margin: float) -> float:
    """Loss of one pair at embedding distance ``distance``."""
    if margin <= 0.0:
        raise ParameterError(f"margin must be positive, got {margin}")
    if relation == PairRelation.SAME_DOMAIN:
        return distance * distance
    return max(0.0, margin - distance) ** 2


def _pair_terms(
    ea: NDArray[np.float64], eb: NDArray[np.float64], same: NDArray[np.bool_], margin: float
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Per-pair losses and dLoss/d(ea); dLoss/d(eb) is the negation."""
    diff = ea - eb
    dist = np.linalg.norm(diff, axis=1)
    shortfall = np.maximum(0.0, margin - dist)
    losses = np.where(same, dist * dist, shortfall * shortfall)
    safe = np.where(dist > 0.0, dist, 1.0)
    # d/d(ea) of (m - d)^2 is -2 (m - d) diff / d; zero when the pair coincides.
    push = np.where(dist > 0.0, -2.0 * shortfall / safe, 0.0)
    scale = np.where(same, 2.0, push)
    return losses, diff * scale[:, np.newaxis]


def _pair_arrays(
    pairs: Sequence[ContrastivePair],
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    anchors = np.stack([p.anchor.features for p in pairs])
    others = np.stack([p.other.features for p in pairs])
    same = np.array([p.relation == PairRelation.SAME_DOMAIN for p in pairs], dtype=bool)
    return anchors, others, same


def contrastive_loss(embed_params: MlpParams, pairs: Sequence[ContrastivePair], margin: float) -> float:
    """Mean pair loss over ``pairs``."""
    anchors, others, same = _pair_arrays(pairs)
    losses, _ = _pair_terms(embed(embed_params, anchors), embed(embed_params, others), same, margin)
    return float(losses.mean())


def contrastive_grad(
    embed_params: MlpParams, pairs: Sequence[ContrastivePair], margin: float
) -> tuple[float, MlpParams]:
    """Mean pair loss and its gradient with respect to the embedding params."""
    anchors, others, same = _pair_arrays(pairs)
    ea, cache_a = mlp_forward(embed_params, anchors)
    eb, cache_b = mlp_forward(embed_params, others)
    losses, d_ea = _pair_terms(ea, eb, same, margin)
    batch = len(pairs)
    grads = add_grads(
        mlp_backward(embed_params, cache_a, d_ea / batch),
        mlp_backward(embed_params, cache_b, -d_ea / batch),
    )
    return float(losses.mean()), grads


def mean_pair_distance(embed_params: MlpParams, pairs: Sequence[ContrastivePair], relation: PairRelation) -> float:
    """Mean embedding distance over the pairs of one relation."""
    chosen = [p for p in pairs if p.relation == relation]
    if not chosen:
        raise ParameterError(f"no pairs of relation '{relation}'")
    anchors, others, _ = _pair_arrays(chosen)
    return float(np.linalg.norm(embed(embed_params, anchors) - embed(embed_params, others), axis=1).mean())


def contrastive_embed_train(
    embed_params: MlpParams, pairs: Sequence[ContrastivePair], config: EmbeddingConfig, seed: int
) -> tuple[MlpParams, list[float]]:
    """Minibatch SGD on the contrastive pair loss.

    Returns:
        Tuple of (trained params, mean loss after each epoch).

    Raises:
        TrainingError: If ``pairs`` is empty or lacks one of the two relations.
    """
    if not pairs:
        raise TrainingError("contrastive training needs at least one pair")
    present = {p.relation for p in pairs}
    missing = [r.value for r in PairRelation if r not in present]
    if missing:
        raise TrainingError(f"contrastive training needs pairs of every relation, missing {missing}")

    order_rng = make_rng(seed, "embedding", "batches")
    state = OptimizerState(learning_rate=config.learning_rate)
    params = embed_params
    trace: list[float] = []
    n = len(pairs)
    initial = contrastive_loss(params, pairs, config.margin)
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = [pairs[i] for i in order[start : start + config.batch_size]]
            _, grads = contrastive_grad(params, batch, config.margin)
            params, state = sgd_step(params, grads, state)
        trace.append(contrastive_loss(params, pairs, config.margin))
        logger.debug(f"embedding epoch {epoch + 1}/{config.epochs}: pair loss {trace[-1]:.6f}")
    final = trace[-1] if trace else initial
    logger.info(f"Contrastive embedding trained on {n} pairs: loss {initial:.4f} -> {final:.4f}")
    return params, trace
