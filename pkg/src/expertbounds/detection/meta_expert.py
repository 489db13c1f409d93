"""Meta-expert: a classifier over system state labeling queries in_coverage / boundary / gap."""

from collections.abc import Sequence

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray

from expertbounds.datatypes.benchmark_types import CaseTag
from expertbounds.datatypes.config_types import MetaExpertConfig
from expertbounds.datatypes.detection_types import MetaClass, MetaInputMode
from expertbounds.datatypes.model_types import MetaExpertModel
from expertbounds.errors import DimensionError, TrainingError
from expertbounds.numerics.core import as_finite_vector, softmax, softmax_cross_entropy
from expertbounds.numerics.mlp import OptimizerState, init_mlp, mlp_backward, mlp_forward, sgd_step
from expertbounds.numerics.rng import make_rng

Array = NDArray[np.float64]

CLASS_OF_TAG = {CaseTag.IN_DOMAIN: MetaClass.IN_COVERAGE, CaseTag.BOUNDARY: MetaClass.BOUNDARY, CaseTag.GAP: MetaClass.GAP}
CLASS_INDEX = {c: i for i, c in enumerate(MetaClass)}


def meta_input_rows(
    mode: MetaInputMode,
    embeddings: Array,
    outputs: Array,
    affinities: Array,
    mean_jsd: Array,
    margins: Array,
) -> Array:
    """Assemble meta-expert inputs for N queries.

    Args:
        mode: Which view of the system the meta-expert gets.
        embeddings: Shared embeddings, shape (N, D).
        outputs: Class distributions of all K experts, shape (N, K, C).
        affinities: Raw kernel affinities, shape (N, K).
        mean_jsd: Mean pairwise divergence across all K experts, shape (N,).
        margins: Routing margins, shape (N,).
    """
    if mode == MetaInputMode.EMBEDDING:
        return embeddings
    if mode == MetaInputMode.CONCAT_OUTPUTS:
        return outputs.reshape(outputs.shape[0], -1)
    signals = np.column_stack([np.sort(affinities, axis=1)[:, ::-1], mean_jsd, margins])
    return np.hstack([embeddings, signals])


def meta_labels(tags: Sequence[CaseTag]) -> NDArray[np.int64]:
    """Meta class index of every case tag."""
    return np.array([CLASS_INDEX[CLASS_OF_TAG[t]] for t in tags], dtype=np.int64)


def _balanced_indices(labels: NDArray[np.int64], rng: np.random.Generator) -> NDArray[np.int64]:
    counts = np.bincount(labels, minlength=len(MetaClass))
    for cls, count in zip(MetaClass, counts, strict=True):
        if count == 0:
            raise TrainingError(f"{cls.value} class absent")
    smallest = int(counts.min())
    chosen = [rng.choice(np.flatnonzero(labels == i), size=smallest, replace=False) for i in range(len(MetaClass))]
    return np.sort(np.concatenate(chosen))


def train_meta_expert(
    inputs: Array, tags: Sequence[CaseTag], mode: MetaInputMode, config: MetaExpertConfig, seed: int
) -> MetaExpertModel:
    """Train the 3-class meta-expert on class-balanced training rows.

    Every class is down-sampled to the size of the rarest one.

    Raises:
        TrainingError: If a class has no training rows ("gap class absent").
    """
    labels = meta_labels(tags)
    if inputs.shape[0] != labels.size:
        raise DimensionError(f"{inputs.shape[0]} input rows for {labels.size} tags")
    rng = make_rng(seed, "meta")
    keep = _balanced_indices(labels, rng)
    x, y = inputs[keep], labels[keep]

    params = init_mlp((x.shape[1], config.hidden, len(MetaClass)), make_rng(seed, "meta", "init"))
    state = OptimizerState(learning_rate=config.learning_rate)
    for epoch in range(config.epochs):
        order = rng.permutation(y.size)
        for start in range(0, y.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, cache = mlp_forward(params, x[idx])
            _, d_logits = softmax_cross_entropy(logits, y[idx])
            params, state = sgd_step(params, mlp_backward(params, cache, d_logits), state)
        if epoch == config.epochs - 1:
            loss, _ = softmax_cross_entropy(mlp_forward(params, x)[0], y)
            logger.debug(f"meta-expert final epoch loss {loss:.6f}")

    logger.info(f"Trained meta-expert ({mode.value}) on {y.size} balanced rows, {y.size // len(MetaClass)} per class")
    return MetaExpertModel(params=params, input_mode=mode)


def meta_predict(meta: MetaExpertModel, assembled: ArrayLike) -> tuple[Array, float]:
    """Class distribution over (in_coverage, boundary, gap) and reliability ``1 - p(in_coverage)``.

    Raises:
        DimensionError: If the input was assembled for a different mode or system.
    """
    vec = as_finite_vector(assembled, "meta input")
    if vec.size != meta.input_dim:
        raise DimensionError(f"meta input has {vec.size} entries, {meta.input_mode.value} mode expects {meta.input_dim}")
    probs = softmax(mlp_forward(meta.params, vec)[0])
    return probs, float(np.clip(1.0 - probs[CLASS_INDEX[MetaClass.IN_COVERAGE]], 0.0, 1.0))


def meta_accuracy(meta: MetaExpertModel, inputs: Array, tags: Sequence[CaseTag]) -> float:
    """Held-out 3-class accuracy against oracle case tags."""
    logits, _ = mlp_forward(meta.params, inputs)
    return float(np.mean(np.argmax(logits, axis=1) == meta_labels(tags)))
