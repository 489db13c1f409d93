"""Boundary-aware fine-tuning: keep in-domain accuracy, flatten predictions on boundary inputs."""

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from expertbounds.calibration.temperature import confidence_penalty_rows
from expertbounds.datatypes.benchmark_types import CaseTag, ClusterSpec, Split
from expertbounds.datatypes.config_types import CalibrationConfig
from expertbounds.datatypes.model_types import ExpertModel
from expertbounds.errors import TrainingError
from expertbounds.numerics.core import entropy_deficit_grad, softmax_cross_entropy, softmax_rows
from expertbounds.numerics.mlp import MlpParams, OptimizerState, add_grads, mlp_backward, mlp_forward, sgd_step
from expertbounds.numerics.rng import make_rng

Array = NDArray[np.float64]


def counterpart_boundary(split: Split, clusters: tuple[ClusterSpec, ...], domain_id: str) -> Split:
    """Boundary samples of clusters ``domain_id`` shares, owned by the other pair member.

    These are the inputs the expert recognizes by surface but labels with the wrong function.
    """
    shared = {c.cluster_id for c in clusters if domain_id in c.owners}
    keep = np.array(
        [
            tag == CaseTag.BOUNDARY and int(cid) in shared and owner != domain_id
            for tag, cid, owner in zip(split.case_tags, split.cluster_ids, split.owners, strict=True)
        ],
        dtype=bool,
    )
    return split.subset(keep)


def feature_box_noise(features: Array, count: int, rng: np.random.Generator) -> Array:
    """Uniform samples inside the per-dimension bounding box of ``features``."""
    low = features.min(axis=0)
    high = features.max(axis=0)
    return rng.uniform(low, high, size=(count, features.shape[1]))


def _flatten_term(params: MlpParams, inputs: Array) -> tuple[float, MlpParams]:
    """Mean entropy deficit ``ln C - H(p)`` over ``inputs`` and its gradient."""
    logits, cache = mlp_forward(params, inputs)
    probs = softmax_rows(logits)
    grad = entropy_deficit_grad(probs) / inputs.shape[0]
    return float(confidence_penalty_rows(probs, 1.0).mean()), mlp_backward(params, cache, grad)


def finetune_objective(
    params: MlpParams,
    features: Array,
    labels: NDArray[np.int64],
    flatten_inputs: Array,
    lambda_flat: float,
) -> tuple[float, MlpParams]:
    """``CE(features, labels) + lambda_flat * mean(ln C - H)`` over ``flatten_inputs``, with its gradient."""
    logits, cache = mlp_forward(params, features)
    ce, d_logits = softmax_cross_entropy(logits, labels)
    grads = mlp_backward(params, cache, d_logits)
    if lambda_flat == 0.0 or flatten_inputs.shape[0] == 0:
        return ce, grads
    flat, flat_grads = _flatten_term(params, flatten_inputs)
    scaled = MlpParams(
        tuple(lambda_flat * w for w in flat_grads.weights),
        tuple(lambda_flat * b for b in flat_grads.biases),
        params.activation,
        params.stream_mix,
    )
    return ce + lambda_flat * flat, add_grads(grads, scaled)


def boundary_aware_finetune(
    expert: ExpertModel,
    in_domain: Split,
    boundary: Split,
    config: CalibrationConfig,
    seed: int,
    noise: Array | None = None,
    adversarial: Array | None = None,
) -> tuple[ExpertModel, list[float]]:
    """Fine-tune one expert toward flat predictions on boundary inputs and optional extra inputs.

    Each step pairs an in-domain minibatch with an equally sized, cyclically drawn batch of
    flatten inputs.

    Args:
        expert: Expert to fine-tune.
        in_domain: The expert's own labeled samples.
        boundary: Boundary inputs to flatten on (labels unused).
        config: ``lambda_flat``, epochs, learning rate and batch size.
        seed: Run seed.
        noise: Extra foreign inputs flattened with the same term.
        adversarial: Inputs found by :func:`~expertbounds.calibration.adversarial.confidently_wrong_search`,
            flattened with the same term.

    Returns:
        Tuple of (fine-tuned expert, full objective after each epoch).

    Raises:
        TrainingError: If either split is empty.
    """
    if len(in_domain) == 0:
        raise TrainingError(f"expert '{expert.domain_id}' has no in-domain samples to fine-tune on")
    if len(boundary) == 0:
        raise TrainingError(f"expert '{expert.domain_id}' has no boundary samples to flatten on")

    extra = [a for a in (noise, adversarial) if a is not None and a.size]
    flatten = np.vstack([boundary.features, *extra])
    rng = make_rng(seed, "calibration", expert.domain_id)
    state = OptimizerState(learning_rate=config.finetune_learning_rate)
    params = expert.params
    trace: list[float] = []
    n = len(in_domain)
    bs = config.batch_size
    for epoch in range(config.finetune_epochs):
        order = rng.permutation(n)
        flat_order = rng.permutation(flatten.shape[0])
        for step, start in enumerate(range(0, n, bs)):
            idx = order[start : start + bs]
            flat_idx = np.take(flat_order, np.arange(step * bs, step * bs + idx.size), mode="wrap")
            _, grads = finetune_objective(
                params, in_domain.features[idx], in_domain.class_labels[idx], flatten[flat_idx], config.lambda_flat
            )
            params, state = sgd_step(params, grads, state)
        objective, _ = finetune_objective(params, in_domain.features, in_domain.class_labels, flatten, config.lambda_flat)
        trace.append(objective)
        logger.debug(f"finetune {expert.domain_id} epoch {epoch + 1}/{config.finetune_epochs}: objective {trace[-1]:.6f}")

    logger.info(
        f"Boundary-aware finetune of expert {expert.domain_id}: {len(boundary)} boundary inputs, "
        f"{0 if noise is None else noise.shape[0]} noise inputs, "
        f"{0 if adversarial is None else adversarial.shape[0]} confident-wrong inputs, lambda_flat={config.lambda_flat}"
    )
    return ExpertModel(domain_id=expert.domain_id, params=params, embed_params=expert.embed_params), trace
