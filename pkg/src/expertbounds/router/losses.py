"""Auxiliary routing losses: load balancing, boundary entropy and coverage.

Each loss has a single-decision (or decision-batch) form used for reporting and a
row-vectorized form with its gradient with respect to the gate logits used in training.
"""

import math
from collections.abc import Sequence

import numpy as np
from numpy.typing import NDArray

from expertbounds.datatypes.model_types import RoutingDecision
from expertbounds.errors import ParameterError
from expertbounds.numerics.core import entropy_deficit_grad, entropy_rows

Array = NDArray[np.float64]

LN2 = math.log(2.0)


def load_balance_rows(gate_weights: Array) -> tuple[float, Array]:
    """``K * sum_i f_i P_i`` for a batch of gate weights, plus dLoss/dg.

    ``f_i`` (top-1 fractions) is treated as a constant, so the gradient is ``K f_i / N`` for
    every row.
    """
    n, k = gate_weights.shape
    if n == 0:
        raise ParameterError("load balance needs a non-empty batch")
    top1 = np.argmax(gate_weights, axis=1)
    fractions = np.bincount(top1, minlength=k) / n
    mean_weights = gate_weights.mean(axis=0)
    loss = float(k * np.sum(fractions * mean_weights))
    return loss, np.broadcast_to(k * fractions / n, (n, k)).copy()


def load_balance_loss(decisions: Sequence[RoutingDecision], experts: int) -> float:
    """Switch-style load-balancing loss over a batch of decisions.

    Raises:
        ParameterError: If the batch is empty or a decision scores a different number of experts.
    """
    if not decisions:
        raise ParameterError("load balance needs a non-empty batch")
    weights = np.stack([d.gate_weights for d in decisions])
    if weights.shape[1] != experts:
        raise ParameterError(f"decisions score {weights.shape[1]} experts, expected {experts}")
    return load_balance_rows(weights)[0]


def boundary_rows(gate_weights: Array, margins: Array) -> tuple[Array, Array]:
    """Per-row ``max(0, (1 - m) ln2 - H(g))`` and its gradient w.r.t. the logits."""
    deficit = (1.0 - margins) * LN2 - entropy_rows(gate_weights)
    active = deficit > 0.0
    grad = np.where(active[:, np.newaxis], entropy_deficit_grad(gate_weights), 0.0)
    return np.where(active, deficit, 0.0), grad


def boundary_loss(decision: RoutingDecision) -> float:
    """Penalty for confident routing when the two nearest centroids are nearly equidistant."""
    return max(0.0, (1.0 - decision.margin) * LN2 - decision.routing_entropy)


def coverage_rows(gate_weights: Array, affinities: Array, tau: float) -> tuple[Array, Array]:
    """Per-row ``max(0, tau - max a) (ln K - H(g))`` and its gradient w.r.t. the logits."""
    experts = gate_weights.shape[1]
    shortfall = np.maximum(0.0, tau - affinities.max(axis=1))
    deficit = np.maximum(0.0, math.log(experts) - entropy_rows(gate_weights))
    return shortfall * deficit, shortfall[:, np.newaxis] * entropy_deficit_grad(gate_weights)


def coverage_loss(decision: RoutingDecision, tau: float, experts: int) -> float:
    """Penalty for confident routing when every raw affinity is below ``tau``."""
    shortfall = max(0.0, tau - float(np.max(decision.raw_affinities)))
    return shortfall * max(0.0, math.log(experts) - decision.routing_entropy)


def softmax_backward(gate_weights: Array, d_weights: Array) -> Array:
    """Chain dLoss/dg through the softmax: ``g * (dg - sum(g * dg))``."""
    return gate_weights * (d_weights - np.sum(gate_weights * d_weights, axis=1, keepdims=True))
