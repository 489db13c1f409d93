"""Tests for expert training, embedding statistics, contrastive embedding and checkpoints."""

import math

import numpy as np
import pytest

from expertbounds.datatypes.benchmark_types import CaseTag, PairRelation, SplitName
from expertbounds.datatypes.config_types import EmbeddingConfig, ExpertTrainingConfig, RouterConfig
from expertbounds.datatypes.model_types import ExpertStats
from expertbounds.errors import DimensionError, ParameterError, ParseError, StatsError, TrainingError
from expertbounds.experts.checkpoint import (
    expert_from_arrays,
    expert_to_arrays,
    parse_arrays,
    read_checkpoint,
    router_from_arrays,
    router_to_arrays,
    serialize_arrays,
    write_checkpoint,
)
from expertbounds.experts.embedding import (
    contrastive_embed_train,
    contrastive_loss,
    contrastive_pair_loss,
    embed,
    init_embedding,
    mean_pair_distance,
)
from expertbounds.experts.stats import VARIANCE_FLOOR, distance_matrix, fit_expert_stats, ood_score, stats_from_embeddings
from expertbounds.experts.training import domain_dataset, expert_predict, train_expert
from expertbounds.numerics.mlp import init_mlp
from expertbounds.numerics.rng import make_rng
from expertbounds.router.gating import init_router

EXPERT_CONFIG = ExpertTrainingConfig(hidden=8, epochs=10, batch_size=16)
EMBED_CONFIG = EmbeddingConfig(hidden=8, dim=4, epochs=5, batch_size=8)


@pytest.fixture(scope="module")
def train_split(tiny_benchmark):
    return tiny_benchmark.splits[SplitName.TRAIN]


@pytest.fixture(scope="module")
def embed_params(tiny_benchmark):
    return init_embedding(tiny_benchmark.config.feature_dim, EMBED_CONFIG, seed=1)


@pytest.fixture(scope="module")
def expert_a(train_split, embed_params, tiny_benchmark):
    return train_expert(
        "A", domain_dataset(train_split, "A"), None, tiny_benchmark.config.classes, embed_params, EXPERT_CONFIG, seed=1
    )


class TestTrainExpert:
    """Test per-domain expert training."""

    def test_domain_dataset_keeps_only_owner(self, train_split) -> None:
        """Test that a domain dataset holds only that domain's samples, private and shared."""
        dataset = domain_dataset(train_split, "A")
        assert set(dataset.owners) == {"A"}
        assert set(dataset.case_tags) == {CaseTag.IN_DOMAIN, CaseTag.BOUNDARY}

    def test_loss_decreases(self, expert_a) -> None:
        """Test that training lowers the cross-entropy."""
        _, report = expert_a
        assert report.final_loss < report.initial_loss
        assert report.epochs_run == 10

    def test_deterministic(self, train_split, embed_params, tiny_benchmark, expert_a) -> None:
        """Test that the same seed reproduces the same weights."""
        again, _ = train_expert(
            "A", domain_dataset(train_split, "A"), None, tiny_benchmark.config.classes, embed_params, EXPERT_CONFIG, 1
        )
        assert again.params.equals(expert_a[0].params)

    def test_zero_epochs_keeps_initialization(self, train_split, embed_params, tiny_benchmark) -> None:
        """Test that zero epochs return the seeded initialization with accuracies still computed."""
        config = EXPERT_CONFIG.model_copy(update={"epochs": 0})
        model, report = train_expert("A", domain_dataset(train_split, "A"), None, 3, embed_params, config, seed=1)
        initial = init_mlp((tiny_benchmark.config.feature_dim, 8, 3), make_rng(1, "experts", "A"))
        assert model.params.equals(initial)
        assert report.initial_loss == report.final_loss
        assert 0.0 <= report.train_accuracy <= 1.0

    def test_empty_dataset(self, train_split, embed_params) -> None:
        """Test that an empty training set is a training error."""
        empty = train_split.subset(np.zeros(len(train_split), dtype=bool))
        with pytest.raises(TrainingError):
            train_expert("A", empty, None, 3, embed_params, EXPERT_CONFIG, seed=1)

    def test_foreign_samples(self, train_split, embed_params) -> None:
        """Test that samples of another domain are refused."""
        with pytest.raises(TrainingError):
            train_expert("A", domain_dataset(train_split, "B"), None, 3, embed_params, EXPERT_CONFIG, seed=1)

    def test_predict_is_a_distribution(self, expert_a, train_split) -> None:
        """Test that predictions lie on the simplex."""
        p = expert_predict(expert_a[0], train_split.features[0])
        assert p.shape == (3,)
        assert p.sum() == pytest.approx(1.0)

    def test_predict_wrong_width(self, expert_a) -> None:
        """Test that a wrong input width is a dimension error."""
        with pytest.raises(DimensionError):
            expert_predict(expert_a[0], np.zeros(2))


class TestExpertStats:
    """Test embedding statistics and OOD scores."""

    def test_centroid_scores_zero(self, expert_a, train_split) -> None:
        """Test that the centroid itself has zero OOD score and others are positive."""
        stats = fit_expert_stats(expert_a[0], domain_dataset(train_split, "A"))
        assert ood_score(stats, stats.centroid) == 0.0
        assert ood_score(stats, stats.centroid + 1.0) > 0.0

    def test_variance_floor(self) -> None:
        """Test that identical embeddings get the variance floor instead of zero."""
        stats = stats_from_embeddings(np.ones((5, 3)))
        np.testing.assert_array_equal(stats.variance, np.full(3, VARIANCE_FLOOR))

    def test_hand_computed_distance(self) -> None:
        """Test the diagonal Mahalanobis distance on a hand example."""
        stats = ExpertStats(centroid=np.zeros(2), variance=np.array([1.0, 4.0]), sample_count=10)
        assert ood_score(stats, [3.0, 4.0]) == pytest.approx(math.sqrt(9.0 + 4.0))

    def test_empty_dataset(self, expert_a, train_split) -> None:
        """Test that statistics cannot be fitted on nothing."""
        with pytest.raises(StatsError):
            fit_expert_stats(expert_a[0], train_split.subset(np.zeros(len(train_split), dtype=bool)))

    def test_dimension_mismatch(self) -> None:
        """Test that an embedding of the wrong width is refused."""
        stats = ExpertStats(centroid=np.zeros(2), variance=np.ones(2), sample_count=1)
        with pytest.raises(DimensionError):
            ood_score(stats, [1.0, 2.0, 3.0])

    def test_distance_matrix_shape(self) -> None:
        """Test one column per expert."""
        stats = [ExpertStats(centroid=np.full(2, float(i)), variance=np.ones(2), sample_count=1) for i in range(3)]
        distances = distance_matrix(stats, np.zeros((4, 2)))
        assert distances.shape == (4, 3)
        assert np.all(distances[:, 0] == 0.0)


class TestContrastiveEmbedding:
    """Test the shared embedding and its contrastive training."""

    def test_pair_loss_values(self) -> None:
        """Test the pull and push losses on hand examples."""
        assert contrastive_pair_loss(0.5, PairRelation.SAME_DOMAIN, 1.0) == 0.25
        assert contrastive_pair_loss(0.25, PairRelation.FALSE_FRIEND, 1.0) == 0.5625
        assert contrastive_pair_loss(2.0, PairRelation.FALSE_FRIEND, 1.0) == 0.0

    def test_pair_loss_rejects_bad_margin(self) -> None:
        """Test that a nonpositive margin is a parameter error."""
        with pytest.raises(ParameterError):
            contrastive_pair_loss(1.0, PairRelation.SAME_DOMAIN, 0.0)

    def test_training_separates_false_friends(self, tiny_benchmark, embed_params) -> None:
        """Test that training lowers the loss and pushes false-friend pairs apart."""
        pairs = list(tiny_benchmark.contrastive_pairs)
        config = EMBED_CONFIG.model_copy(update={"epochs": 20})
        trained, trace = contrastive_embed_train(embed_params, pairs, config, seed=1)
        assert trace[-1] < contrastive_loss(embed_params, pairs, config.margin)
        assert mean_pair_distance(trained, pairs, PairRelation.FALSE_FRIEND) > mean_pair_distance(
            embed_params, pairs, PairRelation.FALSE_FRIEND
        )

    def test_training_needs_both_relations(self, tiny_benchmark, embed_params) -> None:
        """Test that pairs of a single relation are refused."""
        same_only = [p for p in tiny_benchmark.contrastive_pairs if p.relation == PairRelation.SAME_DOMAIN]
        with pytest.raises(TrainingError):
            contrastive_embed_train(embed_params, same_only, EMBED_CONFIG, seed=1)

    def test_embed_shape(self, embed_params, train_split) -> None:
        """Test the embedding width."""
        assert embed(embed_params, train_split.features[:5]).shape == (5, 4)


class TestCheckpoint:
    """Test named-array checkpoint files."""

    def test_expert_round_trip(self, expert_a, tmp_path) -> None:
        """Test that an expert survives a checkpoint file exactly."""
        path = tmp_path / "expert_A.ckpt"
        write_checkpoint(expert_to_arrays(expert_a[0]), path)
        loaded = expert_from_arrays("A", read_checkpoint(path))
        assert loaded.params.equals(expert_a[0].params)
        assert loaded.embed_params.equals(expert_a[0].embed_params)

    def test_router_round_trip(self) -> None:
        """Test that a router keeps its gate and hyperparameters."""
        router = init_router(4, 3, RouterConfig(hidden=5, k=2, tau=0.4), seed=0)
        loaded = router_from_arrays(parse_arrays(serialize_arrays(router_to_arrays(router))))
        assert loaded.gate_net.equals(router.gate_net)
        assert (loaded.k, loaded.tau) == (2, 0.4)

    def test_wrong_value_count(self) -> None:
        """Test that a value line of the wrong length names its line."""
        text = "expertbounds-checkpoint 1\narray w 2,2\n1 2 3\nend\n"
        with pytest.raises(ParseError) as excinfo:
            parse_arrays(text)
        assert excinfo.value.line_number == 3

    def test_missing_end(self) -> None:
        """Test that a truncated checkpoint is rejected."""
        with pytest.raises(ParseError):
            parse_arrays("expertbounds-checkpoint 1\narray w 1\n1\n")
