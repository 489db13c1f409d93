"""Sinkhorn-Knopp projection onto the doubly stochastic manifold."""

import numpy as np
from loguru import logger
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from expertbounds.errors import ConvergenceError, DimensionError, NumericDomainError


class SinkhornConfig(BaseModel):
    """Stopping rule for the alternating normalization."""

    max_iters: int = Field(default=1000, ge=1)
    tolerance: float = Field(default=1e-9, gt=0.0, description="Max row/column sum deviation from 1")


def _as_square(matrix: ArrayLike) -> NDArray[np.float64]:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise DimensionError(f"expected a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericDomainError("matrix contains non-finite entries")
    return m


def _deviation(m: NDArray[np.float64]) -> float:
    return float(max(np.abs(m.sum(axis=1) - 1.0).max(), np.abs(m.sum(axis=0) - 1.0).max()))


def sinkhorn_project(matrix: ArrayLike, config: SinkhornConfig | None = None) -> NDArray[np.float64]:
    """Alternately normalize rows and columns until both sum to one.

    Args:
        matrix: Strictly positive square matrix.
        config: Iteration budget and tolerance.

    Returns:
        Doubly stochastic matrix (row and column sums within ``config.tolerance`` of 1).

    Raises:
        NumericDomainError: If any entry is zero or negative.
        ConvergenceError: If the tolerance is not reached within ``config.max_iters``.
    """
    cfg = config or SinkhornConfig()
    m = _as_square(matrix)
    if np.any(m <= 0.0):
        raise NumericDomainError("Sinkhorn projection requires strictly positive entries")

    result = m.copy()
    deviation = _deviation(result)
    if deviation <= cfg.tolerance:
        return result

    for iteration in range(1, cfg.max_iters + 1):
        result /= result.sum(axis=1, keepdims=True)
        result /= result.sum(axis=0, keepdims=True)
        deviation = _deviation(result)
        if deviation <= cfg.tolerance:
            logger.debug(f"Sinkhorn converged after {iteration} iterations (deviation {deviation:.2e})")
            return result

    raise ConvergenceError(f"Sinkhorn projection did not converge in {cfg.max_iters} iterations", deviation)


def is_doubly_stochastic(matrix: ArrayLike, tol: float) -> bool:
    """Check nonnegativity (within ``tol``) and unit row and column sums (within ``tol``)."""
    m = _as_square(matrix)
    if np.any(m < -tol):
        return False
    return _deviation(m) <= tol


def random_stream_mix(
    streams: int, rng: np.random.Generator, config: SinkhornConfig | None = None
) -> NDArray[np.float64]:
    """Project a seeded strictly positive matrix to get a stream-mixing matrix."""
    return sinkhorn_project(rng.uniform(0.5, 1.5, size=(streams, streams)), config)
