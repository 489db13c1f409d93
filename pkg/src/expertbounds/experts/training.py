"""Per-domain specialist training and prediction."""

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray

from expertbounds.datatypes.benchmark_types import Split
from expertbounds.datatypes.config_types import ExpertTrainingConfig
from expertbounds.datatypes.model_types import ExpertModel, TrainReport
from expertbounds.errors import DimensionError, TrainingError
from expertbounds.numerics.core import as_finite_vector, softmax, softmax_cross_entropy, softmax_rows
from expertbounds.numerics.mlp import MlpParams, OptimizerState, init_mlp, mlp_backward, mlp_forward, sgd_step
from expertbounds.numerics.rng import make_rng


def domain_dataset(split: Split, domain_id: str) -> Split:
    """Samples a domain owns: its private clusters plus its share of every false-friend cluster."""
    return split.subset(split.mask(owner=domain_id))


def _mean_loss(params: MlpParams, split: Split) -> float:
    logits, _ = mlp_forward(params, split.features)
    loss, _ = softmax_cross_entropy(logits, split.class_labels)
    return loss


def classifier_accuracy(params: MlpParams, split: Split) -> float:
    """Fraction of ``split`` whose argmax prediction matches its label (0.0 on an empty split)."""
    if len(split) == 0:
        return 0.0
    logits, _ = mlp_forward(params, split.features)
    return float(np.mean(np.argmax(logits, axis=1) == split.class_labels))


def train_expert(
    domain_id: str,
    train: Split,
    val: Split | None,
    classes: int,
    embed_params: MlpParams,
    config: ExpertTrainingConfig,
    seed: int,
    stream_mix: NDArray[np.float64] | None = None,
) -> tuple[ExpertModel, TrainReport]:
    """Train one domain's classifier with minibatch SGD on cross-entropy.

    Args:
        domain_id: Domain the expert specializes in.
        train: The domain's own training samples (see :func:`domain_dataset`).
        val: Held-out samples for ``val_accuracy``; ``None`` or empty reports 0.0.
        classes: Number of output classes.
        embed_params: Shared embedding network attached to the expert.
        config: Width, epochs, learning rate and batch size.
        seed: Run seed; initialization and batch order derive from it.
        stream_mix: Optional doubly stochastic matrix mixing hidden streams.

    Raises:
        TrainingError: If the dataset is empty or holds samples of another domain.
    """
    if len(train) == 0:
        raise TrainingError(f"domain '{domain_id}' has no training samples")
    foreign = sorted(set(train.owners) - {domain_id})
    if foreign:
        raise TrainingError(f"training set for '{domain_id}' contains samples owned by {foreign}")

    params = init_mlp((train.features.shape[1], config.hidden, classes), make_rng(seed, "experts", domain_id), stream_mix)
    order_rng = make_rng(seed, "experts", domain_id, "batches")
    state = OptimizerState(learning_rate=config.learning_rate)
    initial_loss = _mean_loss(params, train)

    n = len(train)
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, cache = mlp_forward(params, train.features[idx])
            _, d_logits = softmax_cross_entropy(logits, train.class_labels[idx])
            params, state = sgd_step(params, mlp_backward(params, cache, d_logits), state)
        logger.debug(f"expert {domain_id} epoch {epoch + 1}/{config.epochs}: loss {_mean_loss(params, train):.6f}")

    final_loss = _mean_loss(params, train)
    if not np.isfinite(final_loss):
        raise TrainingError(f"expert '{domain_id}' diverged (final loss {final_loss})")
    report = TrainReport(
        epochs_run=config.epochs,
        initial_loss=initial_loss,
        final_loss=final_loss,
        train_accuracy=classifier_accuracy(params, train),
        val_accuracy=classifier_accuracy(params, val) if val is not None else 0.0,
    )
    logger.info(
        f"Trained expert {domain_id}: loss {initial_loss:.4f} -> {final_loss:.4f}, "
        f"train acc {report.train_accuracy:.3f}, val acc {report.val_accuracy:.3f}"
    )
    return ExpertModel(domain_id=domain_id, params=params, embed_params=embed_params), report


def expert_predict(model: ExpertModel, x: ArrayLike) -> NDArray[np.float64]:
    """Class distribution of one input.

    Raises:
        DimensionError: If ``x`` does not match the expert's input width.
    """
    vec = as_finite_vector(x, "x")
    if vec.size != model.params.input_dim:
        raise DimensionError(f"input has {vec.size} features, expert '{model.domain_id}' expects {model.params.input_dim}")
    logits, _ = mlp_forward(model.params, vec)
    return softmax(logits)


def expert_logits(model: ExpertModel, features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Raw logits for a batch of rows."""
    logits, _ = mlp_forward(model.params, features)
    return logits


def expert_predict_rows(model: ExpertModel, features: NDArray[np.float64]) -> NDArray[np.float64]:
    """Class distributions for a batch of rows."""
    return softmax_rows(expert_logits(model, features))
