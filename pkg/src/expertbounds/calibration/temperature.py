"""Scalar and entropy-adaptive temperature scaling, plus the entropy confidence penalty."""

import math

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel
from scipy import optimize, special

from expertbounds.datatypes.config_types import CalibrationMode
from expertbounds.datatypes.model_types import AdaptiveTemperatureParams, TemperatureParams
from expertbounds.errors import CalibrationError, DimensionError, ParameterError
from expertbounds.numerics.core import as_finite_vector, check_simplex, entropy_rows, softmax, softmax_rows

Array = NDArray[np.float64]

LOG_T_MIN = math.log(0.05)
LOG_T_MAX = math.log(20.0)
SEARCH_TOLERANCE = 1e-6
GRID_POINTS = 61
SLOPE_RANGE = (-3.0, 3.0)


def _validated(logits: ArrayLike, labels: ArrayLike) -> tuple[Array, NDArray[np.int64]]:
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or y.shape != (z.shape[0],):
        raise DimensionError(f"logits {z.shape} and labels {y.shape} do not align")
    if z.shape[0] < 2:
        raise CalibrationError(f"temperature fitting needs at least 2 samples, got {z.shape[0]}")
    if np.unique(y).size < 2:
        raise CalibrationError("temperature fitting needs at least 2 classes present in the labels")
    if not np.all(np.isfinite(z)):
        raise CalibrationError("validation logits contain non-finite entries")
    return z, y


def scaled_nll(logits: Array, labels: NDArray[np.int64], temperatures: float | Array) -> float:
    """Mean negative log-likelihood of ``softmax(logits / T)``; ``T`` scalar or one per row."""
    t = np.asarray(temperatures, dtype=np.float64)
    scaled = logits / (t[:, np.newaxis] if t.ndim == 1 else t)
    log_p = scaled - special.logsumexp(scaled, axis=1, keepdims=True)
    return -float(log_p[np.arange(logits.shape[0]), labels].mean())


def fit_temperature(logits: ArrayLike, labels: ArrayLike) -> TemperatureParams:
    """Temperature minimizing validation NLL, searched on ``ln T`` over ``[ln 0.05, ln 20]``.

    Raises:
        CalibrationError: With fewer than 2 samples or a single class present.
    """
    z, y = _validated(logits, labels)
    result = optimize.minimize_scalar(
        lambda s: scaled_nll(z, y, math.exp(s)),
        bounds=(LOG_T_MIN, LOG_T_MAX),
        method="bounded",
        options={"xatol": SEARCH_TOLERANCE},
    )
    return TemperatureParams(temperature=math.exp(float(result.x)))


def apply_temperature(logits: ArrayLike, temperature: float) -> Array:
    """``softmax(logits / T)`` of one logit vector or a batch of rows.

    Raises:
        ParameterError: If ``T <= 0``.
    """
    if not temperature > 0.0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        return softmax(z / temperature)
    return softmax_rows(z / temperature)


def normalized_entropy_rows(logits: Array) -> Array:
    """Entropy of the uncalibrated prediction divided by ``ln C``."""
    return entropy_rows(softmax_rows(logits)) / math.log(logits.shape[1])


def _adaptive_nll(z: Array, y: NDArray[np.int64], h_norm: Array, a: float, b: float) -> float:
    return scaled_nll(z, y, np.exp(a * h_norm + b))


def fit_adaptive_temperature(logits: ArrayLike, labels: ArrayLike) -> AdaptiveTemperatureParams:
    """Fit ``T(x) = exp(a * H_norm(x) + b)`` by a 61x61 grid followed by Nelder-Mead refinement.

    The scalar optimum ``(0, ln T*)`` is always a candidate, so the adaptive fit never has a
    higher validation NLL than plain temperature scaling.

    Raises:
        CalibrationError: As :func:`fit_temperature`.
    """
    z, y = _validated(logits, labels)
    h_norm = normalized_entropy_rows(z)

    best = (0.0, 0.0)
    best_nll = math.inf
    for a in np.linspace(*SLOPE_RANGE, GRID_POINTS):
        for b in np.linspace(LOG_T_MIN, LOG_T_MAX, GRID_POINTS):
            nll = _adaptive_nll(z, y, h_norm, float(a), float(b))
            if nll < best_nll:
                best, best_nll = (float(a), float(b)), nll

    refined = optimize.minimize(
        lambda v: _adaptive_nll(z, y, h_norm, float(v[0]), float(v[1])),
        x0=np.array(best),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 2000},
    )
    candidates = [(best_nll, best)]
    if np.all(np.isfinite(refined.x)):
        candidates.append((float(refined.fun), (float(refined.x[0]), float(refined.x[1]))))
    scalar = (0.0, math.log(fit_temperature(z, y).temperature))
    candidates.append((_adaptive_nll(z, y, h_norm, *scalar), scalar))
    _, (a, b) = min(candidates, key=lambda c: c[0])
    return AdaptiveTemperatureParams(a=a, b=b)


def apply_adaptive_temperature(logits: Array, params: AdaptiveTemperatureParams) -> Array:
    """Per-row adaptive temperature scaling of a batch of logits."""
    temperatures = np.asarray(params.temperature(normalized_entropy_rows(logits)))
    return softmax_rows(logits / temperatures[:, np.newaxis])


def confidence_penalty(p: ArrayLike, beta: float) -> float:
    """``beta * (ln C - H(p))``: zero at uniform, largest at a one-hot.

    Raises:
        ParameterError: If ``beta < 0``.
        NumericDomainError: If ``p`` is not on the probability simplex.
    """
    vec = as_finite_vector(p, "p")
    check_simplex(vec, "p")
    return float(confidence_penalty_rows(vec[np.newaxis, :], beta)[0])


def confidence_penalty_rows(probs: Array, beta: float) -> Array:
    """Row-wise :func:`confidence_penalty` of a batch of class distributions."""
    if beta < 0.0:
        raise ParameterError(f"beta must be nonnegative, got {beta}")
    return beta * (math.log(probs.shape[1]) - entropy_rows(probs))


class Calibrator(BaseModel):
    """The calibration fitted for one expert."""

    mode: CalibrationMode = CalibrationMode.OFF
    temperature: TemperatureParams | None = None
    adaptive: AdaptiveTemperatureParams | None = None

    def apply(self, logits: Array) -> Array:
        """Calibrated class distributions for a batch of logits."""
        if self.adaptive is not None:
            return apply_adaptive_temperature(logits, self.adaptive)
        if self.temperature is not None:
            return softmax_rows(logits / self.temperature.temperature)
        return softmax_rows(logits)
