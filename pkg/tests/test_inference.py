"""Tests for the assembled expert system."""

from dataclasses import replace

import numpy as np
import pytest

from expertbounds.datatypes.benchmark_types import SplitName
from expertbounds.datatypes.detection_types import MetaInputMode
from expertbounds.errors import ConfigError, DimensionError


@pytest.fixture(scope="module")
def system(tiny_run):
    return tiny_run.system


@pytest.fixture(scope="module")
def query(tiny_run):
    return tiny_run.benchmark.splits[SplitName.TEST].features[0]


class TestExpertSystem:
    """Test single-query processing and batch signals."""

    def test_process(self, system, query) -> None:
        """Test the outcome of one query under two-expert activation."""
        outcome = system.process(query)
        assert len(outcome.decision.selected) == system.router.k == 2
        assert outcome.report.applicable
        assert outcome.vote_disagreement in (0.0, 1.0)
        assert 0.0 <= outcome.confidence <= 1.0
        assert outcome.all_outputs.shape == (3, 3)
        assert outcome.meta_reliability is not None
        assert outcome.reference_entropy is not None
        assert outcome.verdict.evidence.meta_score == outcome.meta_reliability

    def test_single_expert_activation(self, system, query) -> None:
        """Test that switching multi-expert activation off routes to one expert."""
        single = replace(system, switches=system.switches.model_copy(update={"multi_expert_on": False}))
        outcome = single.process(query)
        assert len(outcome.decision.selected) == 1
        assert not outcome.report.applicable
        assert outcome.vote_disagreement is None

    def test_meta_switch(self, system, query) -> None:
        """Test that the meta-expert only reports when switched on."""
        off = replace(system, switches=system.switches.model_copy(update={"meta_expert_on": False}))
        assert off.process(query).meta_reliability is None

    def test_signals_rows(self, system, tiny_run) -> None:
        """Test batch signal shapes and that they agree with single-query processing."""
        features = tiny_run.benchmark.splits[SplitName.TEST].features[:5]
        signals = system.signals_rows(features)
        assert signals.outputs.shape == (5, 3, 3)
        assert signals.meta_inputs(MetaInputMode.CONCAT_OUTPUTS).shape == (5, 9)
        np.testing.assert_allclose(signals.distances[0], system.process(features[0]).ood)

    def test_wrong_width(self, system) -> None:
        """Test that a query of the wrong width is refused."""
        with pytest.raises(DimensionError):
            system.process(np.zeros(system.input_dim + 1))

    def test_inconsistent_parts(self, system) -> None:
        """Test that a system missing a calibrator cannot be assembled."""
        with pytest.raises(ConfigError):
            replace(system, calibrators=system.calibrators[:2])
