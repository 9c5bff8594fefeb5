"""Helpers for loading the bundled default run configuration."""

from pathlib import Path
from typing import Any, Union

import yaml

from nlslab.errors import ConfigError

DEFAULT_CONFIG_FILE = Path(__file__).parent / "defaults.yaml"


def load_defaults(config_file: Union[str, Path] = DEFAULT_CONFIG_FILE) -> dict[str, Any]:
    path = Path(config_file)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}

    if isinstance(data, dict):
        return data

    raise ConfigError(f"Default configuration in {path} is not a mapping")


def default_config_path() -> Path:
    return DEFAULT_CONFIG_FILE


__all__ = ["DEFAULT_CONFIG_FILE", "default_config_path", "load_defaults"]
