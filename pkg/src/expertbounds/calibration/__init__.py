from expertbounds.calibration.adversarial import confidently_wrong_search
from expertbounds.calibration.ece import expected_calibration_error
from expertbounds.calibration.finetune import boundary_aware_finetune
from expertbounds.calibration.temperature import (
    Calibrator,
    apply_temperature,
    confidence_penalty,
    fit_adaptive_temperature,
    fit_temperature,
)

__all__ = [
    "Calibrator",
    "apply_temperature",
    "boundary_aware_finetune",
    "confidence_penalty",
    "confidently_wrong_search",
    "expected_calibration_error",
    "fit_adaptive_temperature",
    "fit_temperature",
]
