"""
Experiment config loading - YAML files merged over the defaults in config/.

Files are parsed with a SafeLoader that refuses duplicate keys, merged over
config/solver_defaults.yaml and config/extraction.yaml, then validated by
the pydantic models. The first validation problem is reported with its
dotted key path.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import ValidationError

from src.errors import ConfigError
from src.models import ExperimentConfig

logger = logging.getLogger(__name__)

DEFAULTS_DIR = Path(__file__).parent.parent.parent / "config"


class UniqueKeyLoader(yaml.SafeLoader):
    """SafeLoader that rejects a key appearing twice in one mapping."""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise ConfigError(
                    f"duplicate key '{key}' (line {key_node.start_mark.line + 1})", key=str(key)
                )
            seen.add(key)
        return super().construct_mapping(node, deep=deep)


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = yaml.load(f, Loader=UniqueKeyLoader)
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_defaults(config_dir: Optional[Path] = None) -> Dict[str, Any]:
    """
    Defaults for the sim and extraction sections.

    Missing default files contribute nothing; the model defaults still apply.
    """
    config_dir = Path(config_dir) if config_dir else DEFAULTS_DIR
    defaults: Dict[str, Any] = {}
    for section, filename in (("sim", "solver_defaults.yaml"), ("extraction", "extraction.yaml")):
        path = config_dir / filename
        if path.exists():
            defaults[section] = _read_yaml(path)
    return defaults


def merge(defaults: Dict[str, Any], config: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive {**defaults, **config}; nested mappings merge key by key."""
    out = dict(defaults)
    for key, value in config.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = value
    return out


def _describe(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    key = ".".join(str(part) for part in first["loc"]) or "<root>"
    return ConfigError(f"{key}: {first['msg']}", key=key)


def config_from_dict(data: Dict[str, Any], config_dir: Optional[Path] = None) -> ExperimentConfig:
    """
    Validate a raw mapping merged over the defaults.

    Raises:
        ConfigError: Naming the first invalid key and its constraint
    """
    merged = merge(load_defaults(config_dir), data)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise _describe(e) from e


def parse_config(path: str, config_dir: Optional[Path] = None) -> ExperimentConfig:
    """
    Load and validate an experiment file.

    Args:
        path: YAML experiment file
        config_dir: Directory holding the default files (defaults to config/)

    Returns:
        Validated ExperimentConfig

    Raises:
        FileNotFoundError: If the file does not exist
        ConfigError: On duplicate keys, bad YAML or a failed constraint
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Experiment configuration not found at: {path}")
    cfg = config_from_dict(_read_yaml(path), config_dir)
    logger.info("config_loaded path=%s kind=%s", path, cfg.kind.value)
    return cfg
