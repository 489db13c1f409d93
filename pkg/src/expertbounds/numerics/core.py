"""Probability transforms shared by gates, experts, calibration and detection."""

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from expertbounds.errors import DimensionError, NumericDomainError

SIMPLEX_TOLERANCE = 1e-9
# Smallest positive float; keeps softmax entries strictly positive after underflow.
_TINY = np.finfo(np.float64).tiny


def as_finite_vector(values: ArrayLike, name: str = "input") -> NDArray[np.float64]:
    """Convert to a 1-D float64 array, rejecting empty or non-finite input."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"{name} contains non-finite entries")
    return arr


def softmax(logits: ArrayLike) -> NDArray[np.float64]:
    """Numerically stable softmax of a logit vector.

    Args:
        logits: Finite logit vector of length >= 1.

    Returns:
        Strictly positive probability vector summing to 1.

    Raises:
        DimensionError: If the input is empty.
        NumericDomainError: If an entry is NaN or infinite.
    """
    z = as_finite_vector(logits, "logits")
    return softmax_rows(z[np.newaxis, :])[0]


def softmax_rows(logits: NDArray[np.float64]) -> NDArray[np.float64]:
    """Row-wise softmax for a batch of logits (no validation, used inside training loops)."""
    p = special.softmax(logits, axis=-1)
    p = np.maximum(p, _TINY)
    return p / p.sum(axis=-1, keepdims=True)


def check_simplex(p: NDArray[np.float64], name: str) -> None:
    """Raise ``NumericDomainError`` unless ``p`` is nonnegative and sums to 1."""
    if np.any(p < 0.0):
        raise NumericDomainError(f"{name} has negative entries")
    if abs(float(p.sum()) - 1.0) > SIMPLEX_TOLERANCE:
        raise NumericDomainError(f"{name} sums to {p.sum():.12f}, not 1")


def entropy(p: ArrayLike) -> float:
    """Shannon entropy in nats, with 0·ln0 = 0.

    Raises:
        NumericDomainError: If ``p`` is not on the probability simplex.
    """
    arr = as_finite_vector(p, "p")
    check_simplex(arr, "p")
    return float(special.entr(arr).sum())


def entropy_rows(p: NDArray[np.float64]) -> NDArray[np.float64]:
    """Row-wise entropy for a batch of distributions (no validation)."""
    return special.entr(p).sum(axis=-1)


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """KL(p || q) in nats.

    Returns ``math.inf`` when ``p`` puts mass where ``q`` has none.
    """
    p_arr = as_finite_vector(p, "p")
    q_arr = as_finite_vector(q, "q")
    if p_arr.shape != q_arr.shape:
        raise DimensionError(f"p and q differ in length: {p_arr.size} vs {q_arr.size}")
    check_simplex(p_arr, "p")
    check_simplex(q_arr, "q")
    value = float(special.rel_entr(p_arr, q_arr).sum())
    if math.isinf(value):
        return math.inf
    return max(value, 0.0)


def jensen_shannon(p: NDArray[np.float64], q: NDArray[np.float64]) -> float:
    """Jensen-Shannon divergence in nats; symmetric and bounded by ln 2."""
    m = 0.5 * (p + q)
    value = 0.5 * float(special.rel_entr(p, m).sum()) + 0.5 * float(special.rel_entr(q, m).sum())
    return min(max(value, 0.0), math.log(2.0))


def softmax_cross_entropy(
    logits: NDArray[np.float64], labels: NDArray[np.int64]
) -> tuple[float, NDArray[np.float64]]:
    """Mean cross-entropy of a batch and its gradient with respect to the logits.

    Args:
        logits: Batch of logits, shape (B, C).
        labels: Integer class labels, shape (B,).

    Returns:
        Tuple of (mean loss, dLoss/dLogits with shape (B, C)). The gradient is p - onehot(y),
        divided by the batch size.
    """
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} do not align")
    batch = logits.shape[0]
    log_p = logits - special.logsumexp(logits, axis=1, keepdims=True)
    loss = -float(log_p[np.arange(batch), labels].mean())
    grad = np.exp(log_p)
    grad[np.arange(batch), labels] -= 1.0
    return loss, grad / batch


def entropy_deficit_grad(p: NDArray[np.float64]) -> NDArray[np.float64]:
    """Gradient of (ln C - H(softmax(z))) with respect to the logits z, row-wise.

    dH/dz_j = -p_j (ln p_j + H), so the deficit's gradient is p_j (ln p_j + H).
    """
    h = entropy_rows(p)[:, np.newaxis]
    return p * (np.log(p) + h)
