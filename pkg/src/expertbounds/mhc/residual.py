"""Convex-combination mixing of parallel feature streams."""

import numpy as np
from numpy.typing import ArrayLike, NDArray

from expertbounds.errors import DimensionError, PreconditionError
from expertbounds.mhc.sinkhorn import is_doubly_stochastic

MIX_PRECONDITION_TOL = 1e-6


def mixed_residual_step(features: ArrayLike, matrix: ArrayLike) -> NDArray[np.float64]:
    """Mix streams with a doubly stochastic matrix: ``output = M · features``.

    Column means are conserved and no column's max-norm grows, because every output row is a
    convex combination of input rows.

    Args:
        features: Matrix of shape (streams, width).
        matrix: Doubly stochastic matrix of shape (streams, streams).

    Raises:
        DimensionError: If the stream counts disagree.
        PreconditionError: If ``matrix`` is not doubly stochastic at 1e-6.
    """
    f = np.asarray(features, dtype=np.float64)
    m = np.asarray(matrix, dtype=np.float64)
    if f.ndim != 2 or m.ndim != 2 or m.shape != (f.shape[0], f.shape[0]):
        raise DimensionError(f"mixing matrix {m.shape} does not match {f.shape[0] if f.ndim else 0} streams")
    if not is_doubly_stochastic(m, MIX_PRECONDITION_TOL):
        raise PreconditionError("mixing matrix is not doubly stochastic")
    return m @ f


def conservation_drift(features: ArrayLike, mixed: ArrayLike) -> tuple[float, float]:
    """Return (max column-mean drift, max per-column max-norm growth) of a mixing step."""
    f = np.asarray(features, dtype=np.float64)
    g = np.asarray(mixed, dtype=np.float64)
    mean_drift = float(np.abs(g.mean(axis=0) - f.mean(axis=0)).max())
    norm_growth = float((np.abs(g).max(axis=0) - np.abs(f).max(axis=0)).max())
    return mean_drift, norm_growth


def mix_streams(hidden: NDArray[np.float64], matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Apply the stream mix to a batch of hidden vectors of shape (B, streams * width)."""
    streams = matrix.shape[0]
    batch, width = hidden.shape
    stacked = hidden.reshape(batch, streams, width // streams)
    return np.einsum("ij,bjw->biw", matrix, stacked).reshape(batch, width)


def unmix_streams_grad(grad: NDArray[np.float64], matrix: NDArray[np.float64]) -> NDArray[np.float64]:
    """Back-propagate through :func:`mix_streams` (multiplies every stream stack by M transposed)."""
    streams = matrix.shape[0]
    batch, width = grad.shape
    stacked = grad.reshape(batch, streams, width // streams)
    return np.einsum("ji,bjw->biw", matrix, stacked).reshape(batch, width)
