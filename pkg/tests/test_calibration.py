"""Tests for temperature scaling, calibration error and boundary-aware fine-tuning."""

import math

import numpy as np
import pytest

from expertbounds.calibration.adversarial import confidently_wrong_search
from expertbounds.calibration.ece import ece_from_confidences, expected_calibration_error
from expertbounds.calibration.finetune import (
    boundary_aware_finetune,
    counterpart_boundary,
    feature_box_noise,
    finetune_objective,
)
from expertbounds.calibration.temperature import (
    Calibrator,
    apply_temperature,
    confidence_penalty,
    fit_adaptive_temperature,
    fit_temperature,
    normalized_entropy_rows,
    scaled_nll,
)
from expertbounds.datatypes.benchmark_types import CaseTag, SplitName
from expertbounds.datatypes.config_types import CalibrationConfig, CalibrationMode, EmbeddingConfig, ExpertTrainingConfig
from expertbounds.datatypes.model_types import TemperatureParams
from expertbounds.errors import CalibrationError, NumericDomainError, ParameterError, TrainingError
from expertbounds.experts.embedding import init_embedding
from expertbounds.experts.training import domain_dataset, expert_logits, expert_predict_rows, train_expert
from expertbounds.numerics.core import entropy_rows, softmax_cross_entropy, softmax_rows
from expertbounds.numerics.mlp import mlp_forward
from expertbounds.numerics.rng import make_rng

# Every row predicts class 0 by a logit gap of 10 but only 70% are class 0.
OVERCONFIDENT_LOGITS = np.tile([10.0, 0.0], (10, 1))
OVERCONFIDENT_LABELS = np.array([0] * 7 + [1] * 3)


@pytest.fixture(scope="module")
def trained_a(tiny_benchmark):
    train = tiny_benchmark.splits[SplitName.TRAIN]
    embed_params = init_embedding(tiny_benchmark.config.feature_dim, EmbeddingConfig(hidden=8, dim=4), seed=1)
    expert, _ = train_expert(
        "A",
        domain_dataset(train, "A"),
        None,
        tiny_benchmark.config.classes,
        embed_params,
        ExpertTrainingConfig(hidden=8, epochs=10, batch_size=16),
        seed=1,
    )
    return expert


class TestTemperature:
    """Test scalar and adaptive temperature scaling."""

    def test_fit_recovers_closed_form(self) -> None:
        """Test that the fitted temperature matches the NLL optimum sigmoid(10 / T) = 0.7."""
        params = fit_temperature(OVERCONFIDENT_LOGITS, OVERCONFIDENT_LABELS)
        assert params.temperature == pytest.approx(10.0 / math.log(0.7 / 0.3), rel=1e-3)

    def test_fit_lowers_nll(self) -> None:
        """Test that the fitted temperature never does worse than T = 1."""
        params = fit_temperature(OVERCONFIDENT_LOGITS, OVERCONFIDENT_LABELS)
        assert scaled_nll(OVERCONFIDENT_LOGITS, OVERCONFIDENT_LABELS, params.temperature) <= scaled_nll(
            OVERCONFIDENT_LOGITS, OVERCONFIDENT_LABELS, 1.0
        )

    def test_single_class_is_refused(self) -> None:
        """Test that labels of one class cannot calibrate."""
        with pytest.raises(CalibrationError):
            fit_temperature(OVERCONFIDENT_LOGITS, np.zeros(10, dtype=np.int64))

    def test_single_sample_is_refused(self) -> None:
        """Test that one sample cannot calibrate."""
        with pytest.raises(CalibrationError):
            fit_temperature(OVERCONFIDENT_LOGITS[:1], OVERCONFIDENT_LABELS[:1])

    def test_apply_temperature(self) -> None:
        """Test that T = 1 is the plain softmax and T = 2 halves the logits."""
        z = np.array([2.0, 0.0, -1.0])
        np.testing.assert_allclose(apply_temperature(z, 1.0), softmax_rows(z[np.newaxis, :])[0])
        np.testing.assert_allclose(apply_temperature(z, 2.0), apply_temperature(z / 2.0, 1.0))

    def test_apply_temperature_nonpositive(self) -> None:
        """Test that a nonpositive temperature is a parameter error."""
        with pytest.raises(ParameterError):
            apply_temperature([1.0, 0.0], 0.0)

    def test_adaptive_not_worse_than_scalar(self) -> None:
        """Test that the adaptive fit has validation NLL at most the scalar fit's."""
        rng = make_rng(0, "calibration-test")
        logits = rng.normal(0.0, 3.0, size=(60, 3))
        labels = rng.integers(0, 3, size=60)
        scalar = fit_temperature(logits, labels).temperature
        adaptive = fit_adaptive_temperature(logits, labels)
        temperatures = adaptive.temperature(normalized_entropy_rows(logits))
        assert scaled_nll(logits, labels, temperatures) <= scaled_nll(logits, labels, scalar) + 1e-9

    def test_confidence_penalty(self) -> None:
        """Test the penalty at the uniform and one-hot extremes."""
        assert confidence_penalty([0.25] * 4, beta=2.0) == pytest.approx(0.0)
        assert confidence_penalty([1.0, 0.0, 0.0, 0.0], beta=2.0) == pytest.approx(2.0 * math.log(4.0))

    def test_confidence_penalty_negative_beta(self) -> None:
        """Test that a negative weight is a parameter error."""
        with pytest.raises(ParameterError):
            confidence_penalty([0.5, 0.5], beta=-1.0)

    def test_confidence_penalty_off_simplex(self) -> None:
        """Test that a vector that is not a distribution is refused."""
        with pytest.raises(NumericDomainError):
            confidence_penalty([0.7, 0.7], beta=1.0)

    def test_calibrator_modes(self) -> None:
        """Test that an uncalibrated calibrator is the softmax and a scalar one divides the logits."""
        logits = np.array([[3.0, 1.0], [0.0, 2.0]])
        np.testing.assert_allclose(Calibrator().apply(logits), softmax_rows(logits))
        scaled = Calibrator(mode=CalibrationMode.TEMPERATURE, temperature=TemperatureParams(temperature=2.0))
        np.testing.assert_allclose(scaled.apply(logits), softmax_rows(logits / 2.0))


class TestExpectedCalibrationError:
    """Test equal-width binned calibration error."""

    def test_hand_value(self) -> None:
        """Test two predictions falling in the upper of two bins."""
        report = ece_from_confidences([0.9, 0.6], [1, 0], bin_count=2)
        assert report.ece == pytest.approx(0.25)
        assert report.bins[0].count == 0
        assert report.bins[0].accuracy is None
        assert report.bins[1].mean_confidence == pytest.approx(0.75)

    def test_calibrated_predictions(self) -> None:
        """Test that confidence equal to accuracy gives zero error."""
        report = ece_from_confidences([0.8] * 5, [1, 1, 1, 1, 0])
        assert report.ece == pytest.approx(0.0, abs=1e-12)
        assert len(report.bins) == 15

    def test_confidently_wrong(self) -> None:
        """Test that certain wrong predictions give the maximal error."""
        report = expected_calibration_error(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1, 0]))
        assert report.ece == pytest.approx(1.0)

    def test_zero_confidence_goes_to_first_bin(self) -> None:
        """Test the closed lower edge of the first bin."""
        report = ece_from_confidences([0.0], [0], bin_count=4)
        assert report.bins[0].count == 1

    def test_empty_input(self) -> None:
        """Test that calibration error of nothing is a parameter error."""
        with pytest.raises(ParameterError):
            ece_from_confidences([], [])

    def test_zero_bins(self) -> None:
        """Test that at least one bin is required."""
        with pytest.raises(ParameterError):
            ece_from_confidences([0.5], [1], bin_count=0)


class TestBoundaryAwareFinetune:
    """Test fine-tuning experts toward flat predictions on boundary inputs."""

    def test_counterpart_boundary(self, tiny_benchmark) -> None:
        """Test that counterpart boundary rows are the other pair member's shared-cluster samples."""
        train = tiny_benchmark.splits[SplitName.TRAIN]
        boundary = counterpart_boundary(train, tiny_benchmark.clusters, "A")
        assert len(boundary) > 0
        assert set(boundary.owners) == {"B"}
        assert set(boundary.case_tags) == {CaseTag.BOUNDARY}

    def test_unpaired_domain_has_no_boundary(self, tiny_benchmark) -> None:
        """Test that a domain outside every false-friend pair gets no boundary rows."""
        train = tiny_benchmark.splits[SplitName.TRAIN]
        assert len(counterpart_boundary(train, tiny_benchmark.clusters, "C")) == 0

    def test_feature_box_noise(self) -> None:
        """Test that noise stays inside the per-dimension bounding box."""
        features = np.array([[0.0, -1.0], [2.0, 1.0]])
        noise = feature_box_noise(features, 50, make_rng(0, "noise"))
        assert noise.shape == (50, 2)
        assert np.all(noise >= features.min(axis=0))
        assert np.all(noise <= features.max(axis=0))

    def test_objective_without_flattening_is_cross_entropy(self, trained_a, tiny_benchmark) -> None:
        """Test that lambda_flat = 0 leaves the plain classification loss."""
        own = domain_dataset(tiny_benchmark.splits[SplitName.TRAIN], "A")
        value, _ = finetune_objective(trained_a.params, own.features, own.class_labels, own.features, 0.0)
        logits, _ = mlp_forward(trained_a.params, own.features)
        assert value == pytest.approx(softmax_cross_entropy(logits, own.class_labels)[0])

    def test_flattening_term_is_the_confidence_penalty(self, trained_a, tiny_benchmark) -> None:
        """Test that the flattening term is lambda_flat times the mean unit-weight confidence penalty."""
        train = tiny_benchmark.splits[SplitName.TRAIN]
        own = domain_dataset(train, "A")
        boundary = counterpart_boundary(train, tiny_benchmark.clusters, "A")
        value, _ = finetune_objective(trained_a.params, own.features, own.class_labels, boundary.features, 0.5)
        ce, _ = finetune_objective(trained_a.params, own.features, own.class_labels, boundary.features, 0.0)
        probs = expert_predict_rows(trained_a, boundary.features)
        penalty = np.mean([confidence_penalty(p, beta=1.0) for p in probs])
        assert value == pytest.approx(ce + 0.5 * penalty)

    def test_finetune_raises_boundary_entropy(self, trained_a, tiny_benchmark) -> None:
        """Test that fine-tuning makes predictions on boundary inputs less confident."""
        train = tiny_benchmark.splits[SplitName.TRAIN]
        boundary = counterpart_boundary(train, tiny_benchmark.clusters, "A")
        config = CalibrationConfig(lambda_flat=2.0, finetune_epochs=10, batch_size=16)
        tuned, trace = boundary_aware_finetune(trained_a, domain_dataset(train, "A"), boundary, config, seed=1)
        before = entropy_rows(softmax_rows(expert_logits(trained_a, boundary.features))).mean()
        after = entropy_rows(softmax_rows(expert_logits(tuned, boundary.features))).mean()
        assert len(trace) == 10
        assert tuned.domain_id == "A"
        assert after > before

    def test_finetune_needs_boundary(self, trained_a, tiny_benchmark) -> None:
        """Test that an empty boundary set is a training error."""
        train = tiny_benchmark.splits[SplitName.TRAIN]
        own = domain_dataset(train, "A")
        empty = own.subset(np.zeros(len(own), dtype=bool))
        with pytest.raises(TrainingError):
            boundary_aware_finetune(trained_a, own, empty, CalibrationConfig(), seed=1)


class TestConfidentlyWrongSearch:
    """Test the active search for inputs an expert answers confidently and wrongly."""

    SEARCH = CalibrationConfig(
        adversarial_steps=20,
        adversarial_radius=0.5,
        adversarial_min_confidence=0.5,
        lambda_flat=2.0,
        finetune_epochs=10,
        batch_size=16,
    )

    @staticmethod
    def _search(expert, benchmark, config: CalibrationConfig) -> tuple[np.ndarray, np.ndarray]:
        train = benchmark.splits[SplitName.TRAIN]
        boundary = counterpart_boundary(train, benchmark.clusters, "A")
        box = (train.features.min(axis=0), train.features.max(axis=0))
        found = confidently_wrong_search(
            expert, boundary, benchmark.domains, benchmark.gap_fn, box, config, make_rng(0, "search")
        )
        return found, boundary.features

    def test_found_points_are_confidently_wrong(self, trained_a, tiny_benchmark) -> None:
        """Test that every kept point gets a wrong answer under its owner with the required confidence."""
        found, _ = self._search(trained_a, tiny_benchmark, self.SEARCH)
        assert found.shape[0] > 0
        probs = expert_predict_rows(trained_a, found)
        # Every seed is a boundary row owned by B.
        truth = tiny_benchmark.domains["B"].label_fn.apply(found)
        assert np.all(probs.argmax(axis=1) != truth)
        assert np.all(probs.max(axis=1) >= 0.5)

    def test_found_points_stay_in_the_box(self, trained_a, tiny_benchmark) -> None:
        """Test that the search never leaves the feature bounding box."""
        found, _ = self._search(trained_a, tiny_benchmark, self.SEARCH)
        train = tiny_benchmark.splits[SplitName.TRAIN]
        assert np.all(found >= train.features.min(axis=0))
        assert np.all(found <= train.features.max(axis=0))

    def test_no_seeds_finds_nothing(self, trained_a, tiny_benchmark) -> None:
        """Test that a zero seed budget returns an empty batch of the feature width."""
        found, seeds = self._search(trained_a, tiny_benchmark, CalibrationConfig(adversarial_seeds=0))
        assert found.shape == (0, seeds.shape[1])

    def test_finetune_flattens_found_points(self, trained_a, tiny_benchmark) -> None:
        """Test that fine-tuning with the found points makes the expert less confident on them."""
        found, _ = self._search(trained_a, tiny_benchmark, self.SEARCH)
        train = tiny_benchmark.splits[SplitName.TRAIN]
        boundary = counterpart_boundary(train, tiny_benchmark.clusters, "A")
        tuned, _ = boundary_aware_finetune(
            trained_a, domain_dataset(train, "A"), boundary, self.SEARCH, seed=1, adversarial=found
        )
        before = entropy_rows(expert_predict_rows(trained_a, found)).mean()
        after = entropy_rows(expert_predict_rows(tuned, found)).mean()
        assert after > before
