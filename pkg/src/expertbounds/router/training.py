"""Router training on the mixed training split.

Task cross-entropy supervises in-domain samples with their owner as target; the load
balance, boundary and coverage terms apply to every sample. Embeddings and centroid
distances stay fixed while the gate trains.
"""

from collections.abc import Sequence

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from expertbounds.datatypes.benchmark_types import CaseTag, Split
from expertbounds.datatypes.config_types import RouterConfig
from expertbounds.datatypes.model_types import ExpertModel, ExpertStats, RouterLossTerms, RouterParams
from expertbounds.errors import ConfigError, TrainingError
from expertbounds.experts.embedding import embed
from expertbounds.experts.stats import distance_matrix
from expertbounds.numerics.core import softmax_cross_entropy, softmax_rows
from expertbounds.numerics.mlp import MlpParams, OptimizerState, mlp_backward, mlp_forward, sgd_step
from expertbounds.numerics.rng import make_rng
from expertbounds.router.gating import kernel_affinities, routing_margins
from expertbounds.router.losses import boundary_rows, coverage_rows, load_balance_rows, softmax_backward

Array = NDArray[np.float64]


def owner_targets(split: Split, domain_ids: Sequence[str]) -> NDArray[np.int64]:
    """Owner expert index of every in-domain row; -1 for boundary and gap rows."""
    index = {d: i for i, d in enumerate(domain_ids)}
    return np.array(
        [index[o] if t == CaseTag.IN_DOMAIN else -1 for o, t in zip(split.owners, split.case_tags, strict=True)],
        dtype=np.int64,
    )


def router_objective(
    router: RouterParams,
    gate_net: MlpParams,
    embeddings: Array,
    targets: NDArray[np.int64],
    affinities: Array,
    margins: Array,
) -> tuple[RouterLossTerms, MlpParams]:
    """All router loss terms on a batch and the gradient of their weighted total w.r.t. the gate."""
    n = embeddings.shape[0]
    logits, cache = mlp_forward(gate_net, embeddings)
    weights = softmax_rows(logits)
    d_logits = np.zeros_like(logits)

    supervised = targets >= 0
    task_ce = 0.0
    if np.any(supervised):
        task_ce, ce_grad = softmax_cross_entropy(logits[supervised], targets[supervised])
        d_logits[supervised] += ce_grad

    load_balance = boundary = coverage = 0.0
    if router.lambda_lb > 0.0:
        load_balance, lb_grad = load_balance_rows(weights)
        d_logits += router.lambda_lb * softmax_backward(weights, lb_grad)
    if router.lambda_boundary > 0.0:
        values, grad = boundary_rows(weights, margins)
        boundary = float(values.mean())
        d_logits += router.lambda_boundary * grad / n
    if router.lambda_coverage > 0.0:
        values, grad = coverage_rows(weights, affinities, router.tau)
        coverage = float(values.mean())
        d_logits += router.lambda_coverage * grad / n

    total = (
        task_ce
        + router.lambda_lb * load_balance
        + router.lambda_boundary * boundary
        + router.lambda_coverage * coverage
    )
    terms = RouterLossTerms(
        task_ce=task_ce, load_balance=load_balance, boundary=boundary, coverage=coverage, total=total
    )
    return terms, mlp_backward(gate_net, cache, d_logits)


def fit_router(
    router: RouterParams,
    embeddings: Array,
    distances: Array,
    targets: NDArray[np.int64],
    config: RouterConfig,
    seed: int,
) -> tuple[RouterParams, list[RouterLossTerms]]:
    """Train the gate on precomputed embeddings and centroid distances.

    Returns:
        Tuple of (trained router, loss terms over the whole set after each epoch).

    Raises:
        TrainingError: If no row carries an owner target.
    """
    if not np.any(targets >= 0):
        raise TrainingError("router training needs in-domain samples")
    affinities = kernel_affinities(distances, router.kernel_sigma)
    margins = routing_margins(distances)
    order_rng = make_rng(seed, "router", "batches")
    state = OptimizerState(learning_rate=config.learning_rate)
    gate_net = router.gate_net
    trace: list[RouterLossTerms] = []

    n = embeddings.shape[0]
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, grads = router_objective(router, gate_net, embeddings[idx], targets[idx], affinities[idx], margins[idx])
            gate_net, state = sgd_step(gate_net, grads, state)
        terms, _ = router_objective(router, gate_net, embeddings, targets, affinities, margins)
        trace.append(terms)
        logger.debug(f"router epoch {epoch + 1}/{config.epochs}: {terms.model_dump()}")

    trained = RouterParams(
        gate_net=gate_net,
        tau=router.tau,
        k=router.k,
        lambda_lb=router.lambda_lb,
        lambda_boundary=router.lambda_boundary,
        lambda_coverage=router.lambda_coverage,
        kernel_sigma=router.kernel_sigma,
    )
    if trace:
        logger.info(f"Router trained for {config.epochs} epochs: total loss {trace[0].total:.4f} -> {trace[-1].total:.4f}")
    return trained, trace


def train_router(
    router: RouterParams,
    experts: Sequence[ExpertModel],
    stats: Sequence[ExpertStats],
    split: Split,
    config: RouterConfig,
    seed: int,
) -> tuple[RouterParams, list[RouterLossTerms]]:
    """Embed the mixed split with the shared embedding and train the gate on it.

    Raises:
        ConfigError: If experts and statistics disagree in number or order.
        TrainingError: If the split holds no in-domain sample.
    """
    if len(experts) != len(stats) or len(experts) != router.experts:
        raise ConfigError(f"{len(experts)} experts, {len(stats)} statistics, router scores {router.experts}")
    embeddings = embed(experts[0].embed_params, split.features)
    distances = distance_matrix(list(stats), embeddings)
    targets = owner_targets(split, [e.domain_id for e in experts])
    return fit_router(router, embeddings, distances, targets, config, seed)


def top1_routing_accuracy(router: RouterParams, embeddings: Array, targets: NDArray[np.int64]) -> float:
    """Fraction of supervised rows whose argmax gate weight is the owner."""
    supervised = targets >= 0
    if not np.any(supervised):
        raise TrainingError("no in-domain rows to score routing accuracy on")
    logits, _ = mlp_forward(router.gate_net, embeddings[supervised])
    return float(np.mean(np.argmax(logits, axis=1) == targets[supervised]))
