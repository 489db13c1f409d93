from expertbounds.router.gating import gate, init_router, select_top_k
from expertbounds.router.losses import boundary_loss, coverage_loss, load_balance_loss
from expertbounds.router.training import train_router

__all__ = [
    "boundary_loss",
    "coverage_loss",
    "gate",
    "init_router",
    "load_balance_loss",
    "select_top_k",
    "train_router",
]
