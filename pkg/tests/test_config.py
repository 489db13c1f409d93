"""Tests for experiment config files, overrides and hashing."""

import pytest
from pydantic import ValidationError

from expertbounds.datatypes.config_types import CalibrationMode, ExperimentConfig
from expertbounds.errors import ConfigError
from expertbounds.harness.config import (
    CONFIG_KEYS,
    apply_overrides,
    config_hash,
    dump_experiment_config,
    load_experiment_config,
    parse_experiment_config,
    write_experiment_config,
)
from expertbounds.paths import DEFAULT_CONFIG_PATH, INTERVENTIONS_OFF_CONFIG_PATH, KAPPA_ZERO_CONFIG_PATH


class TestShippedConfigs:
    """Test the config files that ship with the project."""

    def test_default_matches_model_defaults(self) -> None:
        """Test that the default file spells out the model defaults canonically."""
        config = load_experiment_config(DEFAULT_CONFIG_PATH)
        assert config == ExperimentConfig()
        assert dump_experiment_config(config) == DEFAULT_CONFIG_PATH.read_text(encoding="utf-8")

    def test_interventions_off(self) -> None:
        """Test that every intervention is switched off."""
        switches = load_experiment_config(INTERVENTIONS_OFF_CONFIG_PATH).switches
        assert not switches.multi_expert_on
        assert not switches.boundary_losses_on
        assert switches.calibration_mode == CalibrationMode.OFF
        assert not switches.meta_expert_on
        assert not switches.contrastive_on
        assert not switches.adversarial_boundary_on

    def test_confident_wrong_search_override(self) -> None:
        """Test that the confident-wrong search is switched on from the command-line override form."""
        config = apply_overrides(ExperimentConfig(), {"switches.adversarial_boundary_on": "true"})
        assert config.switches.adversarial_boundary_on
        assert config.calibration.adversarial_steps == 10

    def test_kappa_zero(self) -> None:
        """Test that the uninformative-context config differs from the default only in kappa."""
        kappa_zero = load_experiment_config(KAPPA_ZERO_CONFIG_PATH)
        assert kappa_zero.benchmark.context_informativeness == 0.0
        restored = apply_overrides(kappa_zero, {"benchmark.context_informativeness": "0.3"})
        assert restored == ExperimentConfig()
        assert config_hash(kappa_zero) != config_hash(restored)


class TestParsing:
    """Test strict key handling and value validation."""

    def test_unknown_key(self) -> None:
        """Test that a key outside the schema is refused."""
        with pytest.raises(ConfigError):
            parse_experiment_config({"router.temperature": "1.0"}, strict=False)

    def test_missing_key_in_strict_mode(self) -> None:
        """Test that strict parsing requires every key."""
        with pytest.raises(ConfigError):
            parse_experiment_config({"seed": "1"})

    def test_lenient_mode_uses_defaults(self) -> None:
        """Test that lenient parsing fills missing keys from defaults."""
        config = parse_experiment_config({"seed": "7", "router.k": "3"}, strict=False)
        assert config.seed == 7
        assert config.router.k == 3
        assert config.experts == ExperimentConfig().experts

    def test_empty_optional_is_none(self) -> None:
        """Test that an empty theta_ood means automatic selection."""
        config = parse_experiment_config({"detection.theta_ood": ""}, strict=False)
        assert config.detection.theta_ood is None

    def test_invalid_value(self) -> None:
        """Test that an out-of-range value fails validation."""
        with pytest.raises(ValidationError):
            parse_experiment_config({"router.tau": "1.5"}, strict=False)

    def test_missing_file(self, tmp_path) -> None:
        """Test that a missing config file is a config error."""
        with pytest.raises(ConfigError):
            load_experiment_config(tmp_path / "absent.cfg")

    def test_keys_are_dotted_leaves(self) -> None:
        """Test that nested sections flatten to dotted keys."""
        assert "router.lambda_boundary" in CONFIG_KEYS
        assert "benchmark.false_friend_pairs" in CONFIG_KEYS
        assert "seed" in CONFIG_KEYS
        assert "router" not in CONFIG_KEYS


class TestSnapshots:
    """Test canonical snapshots, hashes and overrides."""

    def test_snapshot_round_trip(self, tiny_config, tmp_path) -> None:
        """Test that a written snapshot loads back to the same config and hash."""
        path = tmp_path / "config.cfg"
        write_experiment_config(tiny_config, path)
        loaded = load_experiment_config(path)
        assert loaded == tiny_config
        assert config_hash(loaded) == config_hash(tiny_config)

    def test_hash_tracks_every_key(self) -> None:
        """Test that changing one parameter changes the hash."""
        base = ExperimentConfig()
        assert config_hash(base) == config_hash(ExperimentConfig())
        assert config_hash(apply_overrides(base, {"router.lambda_lb": "0.02"})) != config_hash(base)

    def test_override(self) -> None:
        """Test overriding nested and top-level keys."""
        config = apply_overrides(ExperimentConfig(), {"switches.mhc_on": "true", "seed": "5"})
        assert config.switches.mhc_on
        assert config.seed == 5

    def test_unknown_override(self) -> None:
        """Test that overriding an unknown key is a config error."""
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), {"router.depth": "2"})
