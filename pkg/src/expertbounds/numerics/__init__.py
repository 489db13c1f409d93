from expertbounds.numerics.core import entropy, kl_divergence, softmax
from expertbounds.numerics.mlp import (
    GradCheckReport,
    MlpCache,
    MlpParams,
    OptimizerState,
    grad_check,
    init_mlp,
    mlp_backward,
    mlp_forward,
    sgd_step,
)
from expertbounds.numerics.rng import make_rng

__all__ = [
    "GradCheckReport",
    "MlpCache",
    "MlpParams",
    "OptimizerState",
    "entropy",
    "grad_check",
    "init_mlp",
    "kl_divergence",
    "make_rng",
    "mlp_backward",
    "mlp_forward",
    "sgd_step",
    "softmax",
]
