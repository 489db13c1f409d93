from expertbounds.mhc.residual import conservation_drift, mix_streams, mixed_residual_step, unmix_streams_grad
from expertbounds.mhc.sinkhorn import SinkhornConfig, is_doubly_stochastic, random_stream_mix, sinkhorn_project

__all__ = [
    "SinkhornConfig",
    "conservation_drift",
    "is_doubly_stochastic",
    "mix_streams",
    "mixed_residual_step",
    "random_stream_mix",
    "sinkhorn_project",
    "unmix_streams_grad",
]
