import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigError
from app.schemas import ExperimentConfig


class Settings(BaseSettings):
    # Output
    output_dir: Path = Path("runs")
    default_config: Path = Path("configs/default.toml")

    # Logging
    log_level: str = "INFO"

    # Concurrency (learner training / episode batches)
    max_workers: int = 3

    model_config = SettingsConfigDict(
        env_prefix="BAYESDRIVE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",  # Ignore extra fields in .env
    )


@lru_cache
def get_settings() -> Settings:
    return Settings()


def parse_override(raw: str) -> tuple[list[str], Any]:
    """Split a ``dotted.key=value`` override into its key path and parsed value.

    Values are read as TOML literals (numbers, booleans, arrays, quoted strings);
    anything that does not parse is kept as a bare string.
    """
    if "=" not in raw:
        raise ConfigError(f"override '{raw}' is not of the form key=value")
    key, value = raw.split("=", 1)
    path = [part for part in key.strip().split(".") if part]
    if not path:
        raise ConfigError(f"override '{raw}' has an empty key")
    try:
        parsed = tomllib.loads(f"v = {value.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        parsed = value.strip()
    return path, parsed


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``--set`` overrides to a raw config mapping (in place) and return it."""
    for raw in overrides:
        path, value = parse_override(raw)
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override '{raw}': '{part}' is not a section")
            node = child
        node[path[-1]] = value
    return data


def load_experiment_config(
    path: Path | None = None, overrides: list[str] | None = None
) -> ExperimentConfig:
    """Read a TOML experiment config, apply overrides and validate it.

    A missing ``path`` means "all defaults". Raises ConfigError on any problem.
    """
    data: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"config file {path} is not valid TOML: {e}") from e

    apply_overrides(data, overrides or [])

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment config: {e}") from e


def config_hash(config: ExperimentConfig) -> str:
    """Git-style blob hash of the canonical JSON form of a config."""
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True).encode()
    header = f"blob {len(payload)}\0".encode()
    return hashlib.sha1(header + payload).hexdigest()
