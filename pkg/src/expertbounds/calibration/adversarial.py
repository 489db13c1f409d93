"""Active search for boundary inputs an expert answers confidently and wrongly."""

import numpy as np
from loguru import logger
from numpy.typing import NDArray

from expertbounds.datatypes.benchmark_types import DomainSpec, LabelFunction, Split
from expertbounds.datatypes.config_types import CalibrationConfig
from expertbounds.datatypes.model_types import ExpertModel
from expertbounds.experts.training import expert_predict_rows
from expertbounds.numerics.core import softmax_rows
from expertbounds.numerics.mlp import mlp_forward, mlp_input_grad
from expertbounds.synth.benchmark import oracle_labels

Array = NDArray[np.float64]


def confidently_wrong_search(
    expert: ExpertModel,
    seeds: Split,
    domains: dict[str, DomainSpec],
    gap_fn: LabelFunction,
    box: tuple[Array, Array],
    config: CalibrationConfig,
    rng: np.random.Generator,
) -> Array:
    """Climb from boundary seeds toward inputs the expert answers confidently and wrongly.

    Each seed ascends the log-probability of its most likely incorrect class (incorrect under
    the seed owner's label function) by signed-gradient steps, staying inside ``box`` and within
    ``adversarial_radius`` of the seed in every dimension. A point is kept when the expert's top-1
    class disagrees with the oracle label at the final point and its top-1 probability is at least
    ``adversarial_min_confidence``.

    Args:
        expert: Expert under attack.
        seeds: Labeled boundary rows to start from; at most ``adversarial_seeds`` are drawn.
        domains: Domain specs, for the label oracle.
        gap_fn: Label function of unowned clusters.
        box: Per-dimension (low, high) bounds of the feature space.
        config: Search parameters.
        rng: Generator for the seed subsample.

    Returns:
        Kept points, shape (n, feature_dim); empty when nothing is found.
    """
    width = seeds.features.shape[1]
    if len(seeds) == 0 or config.adversarial_seeds == 0:
        return np.empty((0, width))
    if len(seeds) > config.adversarial_seeds:
        chosen = np.zeros(len(seeds), dtype=bool)
        chosen[rng.choice(len(seeds), config.adversarial_seeds, replace=False)] = True
        seeds = seeds.subset(chosen)

    start = seeds.features
    rows = np.arange(len(seeds))
    probs = expert_predict_rows(expert, start)
    masked = probs.copy()
    masked[rows, oracle_labels(start, seeds.owners, domains, gap_fn)] = -np.inf
    target = masked.argmax(axis=1)

    low = np.maximum(box[0], start - config.adversarial_radius)
    high = np.minimum(box[1], start + config.adversarial_radius)
    x = np.clip(start, low, high)
    for _ in range(config.adversarial_steps):
        logits, cache = mlp_forward(expert.params, x)
        # d log p_target / d logits
        d_logits = -softmax_rows(logits)
        d_logits[rows, target] += 1.0
        x = np.clip(x + config.adversarial_step_size * np.sign(mlp_input_grad(expert.params, cache, d_logits)), low, high)

    probs = expert_predict_rows(expert, x)
    wrong = probs.argmax(axis=1) != oracle_labels(x, seeds.owners, domains, gap_fn)
    keep = wrong & (probs.max(axis=1) >= config.adversarial_min_confidence)
    logger.debug(f"Confident-wrong search on expert {expert.domain_id}: kept {int(keep.sum())} of {len(seeds)} seeds")
    return x[keep]
