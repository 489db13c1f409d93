"""Expected calibration error with equal-width confidence bins."""

import numpy as np
from numpy.typing import ArrayLike

from expertbounds.datatypes.model_types import CalibrationReport, ReliabilityBin
from expertbounds.errors import DimensionError, ParameterError

DEFAULT_BINS = 15


def ece_from_confidences(confidences: ArrayLike, correct: ArrayLike, bin_count: int = DEFAULT_BINS) -> CalibrationReport:
    """ECE of top-class confidences against per-sample correctness.

    Bin ``i`` covers ``((i)/B, (i+1)/B]``; confidence 0 falls in the first bin.

    Raises:
        ParameterError: On empty input or ``bin_count < 1``.
    """
    conf = np.asarray(confidences, dtype=np.float64)
    hits = np.asarray(correct, dtype=np.float64)
    if conf.size == 0:
        raise ParameterError("ECE needs at least one prediction")
    if bin_count < 1:
        raise ParameterError(f"bin_count must be at least 1, got {bin_count}")
    if conf.shape != hits.shape or conf.ndim != 1:
        raise DimensionError(f"confidences {conf.shape} and correctness {hits.shape} do not align")

    index = np.clip(np.ceil(conf * bin_count).astype(np.int64) - 1, 0, bin_count - 1)
    n = conf.size
    bins: list[ReliabilityBin] = []
    ece = 0.0
    for i in range(bin_count):
        members = index == i
        count = int(members.sum())
        if count:
            mean_conf = float(conf[members].mean())
            accuracy = float(hits[members].mean())
            ece += count / n * abs(accuracy - mean_conf)
        else:
            mean_conf = accuracy = None
        bins.append(
            ReliabilityBin(
                lower=i / bin_count, upper=(i + 1) / bin_count, count=count, mean_confidence=mean_conf, accuracy=accuracy
            )
        )
    return CalibrationReport(ece=min(max(ece, 0.0), 1.0), bin_count=bin_count, bins=bins)


def expected_calibration_error(
    probabilities: ArrayLike, labels: ArrayLike, bin_count: int = DEFAULT_BINS
) -> CalibrationReport:
    """ECE of class distributions (rows) against integer labels."""
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or y.shape != (probs.shape[0],):
        raise DimensionError(f"predictions {probs.shape} and labels {y.shape} do not align")
    if probs.shape[0] == 0:
        raise ParameterError("ECE needs at least one prediction")
    return ece_from_confidences(probs.max(axis=1), np.argmax(probs, axis=1) == y, bin_count)
