from expertbounds.experts.checkpoint import read_checkpoint, write_checkpoint
from expertbounds.experts.embedding import contrastive_embed_train, contrastive_pair_loss, embed, init_embedding
from expertbounds.experts.stats import fit_expert_stats, ood_score
from expertbounds.experts.training import domain_dataset, expert_predict, train_expert

__all__ = [
    "contrastive_embed_train",
    "contrastive_pair_loss",
    "domain_dataset",
    "embed",
    "expert_predict",
    "fit_expert_stats",
    "init_embedding",
    "ood_score",
    "read_checkpoint",
    "train_expert",
    "write_checkpoint",
]
