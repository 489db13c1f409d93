"""Multi-expert activation and the disagreement signals computed over it."""

from collections.abc import Sequence
from itertools import combinations

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from expertbounds.calibration.temperature import Calibrator
from expertbounds.datatypes.detection_types import DisagreementReport
from expertbounds.datatypes.model_types import ExpertModel, RoutingDecision
from expertbounds.errors import ParameterError, UnknownExpertError
from expertbounds.experts.training import expert_logits
from expertbounds.numerics.core import as_finite_vector, jensen_shannon

Array = NDArray[np.float64]

DEFAULT_GAMMA = 0.5


def activate_experts(
    decision: RoutingDecision,
    experts: Sequence[ExpertModel],
    x: ArrayLike,
    calibrators: Sequence[Calibrator] | None = None,
) -> list[Array]:
    """Class distribution of every selected expert, in ``decision.selected`` order.

    Raises:
        UnknownExpertError: If a selected id has no expert.
    """
    vec = as_finite_vector(x, "x")
    outputs = []
    for expert_id in decision.selected:
        if not 0 <= expert_id < len(experts):
            raise UnknownExpertError(f"no expert with id {expert_id} (system has {len(experts)})")
        logits = expert_logits(experts[expert_id], vec[np.newaxis, :])
        calibrator = calibrators[expert_id] if calibrators is not None else Calibrator()
        outputs.append(calibrator.apply(logits)[0])
    return outputs


def disagreement_report(
    decision: RoutingDecision, outputs: Sequence[Array], gamma: float = DEFAULT_GAMMA
) -> DisagreementReport:
    """Mean pairwise Jensen-Shannon divergence, predictive variance and the comparability flag.

    With fewer than two outputs the report is marked not applicable.

    Raises:
        ParameterError: If ``gamma`` is outside ``(0, 1]``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ParameterError(f"gamma must lie in (0, 1], got {gamma}")
    activated = tuple(decision.selected)
    frozen = tuple(np.asarray(o, dtype=np.float64) for o in outputs)
    if len(frozen) < 2:
        return DisagreementReport(activated, frozen, None, None, None)

    divergences = [jensen_shannon(p, q) for p, q in combinations(frozen, 2)]
    stacked = np.stack(frozen)
    ranked = np.sort(np.asarray(decision.selected_weights))[::-1]
    return DisagreementReport(
        activated=activated,
        per_expert_outputs=frozen,
        mean_pairwise_jsd=float(np.mean(divergences)),
        predictive_variance=float(stacked.var(axis=0).sum()),
        comparable_confidence=bool(ranked[1] / ranked[0] >= gamma),
    )


def mean_pairwise_jsd_rows(outputs: Array) -> Array:
    """Mean pairwise JSD across the expert axis of ``outputs`` with shape (N, K, C)."""
    experts = outputs.shape[1]
    if experts < 2:
        raise ParameterError("pairwise divergence needs at least two experts")
    total = np.zeros(outputs.shape[0])
    pairs = list(combinations(range(experts), 2))
    for i, j in pairs:
        p, q = outputs[:, i, :], outputs[:, j, :]
        m = 0.5 * (p + q)
        value = 0.5 * special.rel_entr(p, m).sum(axis=1) + 0.5 * special.rel_entr(q, m).sum(axis=1)
        total += np.clip(value, 0.0, np.log(2.0))
    return total / len(pairs)
