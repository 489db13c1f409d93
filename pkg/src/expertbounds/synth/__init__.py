from expertbounds.synth.benchmark import build_benchmark, label_oracle
from expertbounds.synth.contrastive import make_contrastive_pairs
from expertbounds.synth.storage import benchmark_hash, dataset_round_trip, read_benchmark, write_benchmark

__all__ = [
    "benchmark_hash",
    "build_benchmark",
    "dataset_round_trip",
    "label_oracle",
    "make_contrastive_pairs",
    "read_benchmark",
    "write_benchmark",
]
