"""Experiment config files: ``section.key=value`` lines parsed with python-dotenv.

Strict loading requires every leaf key of :class:`ExperimentConfig` and rejects unknown
ones, so a run's snapshot always spells out every parameter it used.
"""

import hashlib
from collections.abc import Mapping
from enum import Enum
from pathlib import Path
from typing import Any, get_args, get_origin

from dotenv import dotenv_values
from loguru import logger
from pydantic import BaseModel

from expertbounds.datatypes.benchmark_types import FalseFriendPair
from expertbounds.datatypes.config_types import ExperimentConfig
from expertbounds.errors import ConfigError, StorageError

CONFIG_HEADER = "# expertbounds experiment config"


def _leaf_fields(model: type[BaseModel], prefix: str = "") -> dict[str, bool]:
    """Dotted leaf keys mapped to whether the field accepts None."""
    leaves: dict[str, bool] = {}
    for name, field in model.model_fields.items():
        annotation = field.annotation
        if get_origin(annotation) is None and isinstance(annotation, type) and issubclass(annotation, BaseModel):
            leaves.update(_leaf_fields(annotation, f"{prefix}{name}."))
        else:
            leaves[f"{prefix}{name}"] = type(None) in get_args(annotation)
    return leaves


_LEAVES = _leaf_fields(ExperimentConfig)
CONFIG_KEYS: tuple[str, ...] = tuple(_LEAVES)


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, tuple) and all(isinstance(v, FalseFriendPair) for v in value):
        return ",".join(f"{p.first}:{p.second}:{p.shared_clusters}" for p in value)
    return repr(value) if isinstance(value, float) else str(value)


def _flatten(config: ExperimentConfig) -> dict[str, str]:
    flat = {}
    for key in CONFIG_KEYS:
        value: Any = config
        for part in key.split("."):
            value = getattr(value, part)
        flat[key] = _format_value(value)
    return flat


def _nest(values: Mapping[str, str | None]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, raw in values.items():
        node = nested
        *sections, leaf = key.split(".")
        for section in sections:
            node = node.setdefault(section, {})
        node[leaf] = None if raw is None or (raw == "" and _LEAVES.get(key, False)) else raw
    return nested


def parse_experiment_config(values: Mapping[str, str | None], strict: bool = True) -> ExperimentConfig:
    """Build a config from dotted key/value pairs.

    Args:
        values: Raw values keyed by dotted path (``router.tau``).
        strict: Require every leaf key; otherwise missing keys take their defaults.

    Raises:
        ConfigError: On an unknown key, or a missing key in strict mode.
        pydantic.ValidationError: If a value does not fit its field.
    """
    known = set(CONFIG_KEYS)
    for key in values:
        if key not in known:
            raise ConfigError(f"unknown config key '{key}'")
    if strict:
        for key in CONFIG_KEYS:
            if key not in values:
                raise ConfigError(f"missing config key '{key}'")
    return ExperimentConfig.model_validate(_nest(values))


def load_experiment_config(path: Path, strict: bool = True) -> ExperimentConfig:
    """Read and validate a config file.

    Raises:
        ConfigError: If the file is missing or a key is missing/unknown.
    """
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    config = parse_experiment_config(dotenv_values(path, interpolate=False), strict=strict)
    logger.info(f"Loaded experiment config {path} (hash {config_hash(config)[:12]})")
    return config


def dump_experiment_config(config: ExperimentConfig) -> str:
    """Canonical snapshot with every leaf key in field order."""
    lines = [CONFIG_HEADER, *(f"{key}={value}" for key, value in _flatten(config).items())]
    return "\n".join(lines) + "\n"


def write_experiment_config(config: ExperimentConfig, path: Path) -> None:
    """Write the canonical snapshot."""
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_experiment_config(config), encoding="utf-8")
    except OSError as e:
        raise StorageError(f"cannot write config snapshot {path}: {e}") from e


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical snapshot."""
    return hashlib.sha256(dump_experiment_config(config).encode("utf-8")).hexdigest()


def apply_overrides(config: ExperimentConfig, overrides: Mapping[str, str]) -> ExperimentConfig:
    """Replace some dotted keys of ``config`` with new raw values.

    Raises:
        ConfigError: If an override names an unknown key.
    """
    flat: dict[str, str | None] = dict(_flatten(config))
    for key, value in overrides.items():
        if key not in flat:
            raise ConfigError(f"unknown config key '{key}'")
        flat[key] = value
    return parse_experiment_config(flat)
