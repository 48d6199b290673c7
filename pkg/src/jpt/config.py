"""Flat key/value configuration with environment overrides.

Grammar (one assignment per line):

    # full-line comments start with '#'
    train.learning_rate = 5e-3
    model.token_mlp_hidden = 64, 32
    service.demo = true

Keys are lowercase words joined by dots; values are raw strings, coerced
where they are used. Environment variables override file values: the
variable JPT_TRAIN__LEARNING_RATE sets train.learning_rate (prefix JPT_,
double underscore for the dot, case-insensitive).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

ENV_PREFIX = "JPT_"

_KEY = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_][a-z0-9_]*)*$")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(Exception):
    pass


@dataclass
class Config:
    """Parsed key/value pairs with typed accessors."""

    values: dict[str, str] = field(default_factory=dict)

    def get_str(self, key: str, default: str | None = None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing required config key {key!r}")
        return default

    def get_int(self, key: str, default: int | None = None) -> int:
        return self._typed(key, default, int, "an integer")

    def get_float(self, key: str, default: float | None = None) -> float:
        return self._typed(key, default, float, "a number")

    def get_bool(self, key: str, default: bool | None = None) -> bool:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        raw = self.values[key].lower()
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ConfigError(f"{key}: {self.values[key]!r} is not a boolean")

    def get_int_tuple(self, key: str, default: tuple[int, ...] = ()) -> tuple[int, ...]:
        """Comma-separated integers; empty string means the empty tuple."""
        if key not in self.values:
            return default
        raw = self.values[key].strip()
        if not raw:
            return ()
        try:
            return tuple(int(part.strip()) for part in raw.split(","))
        except ValueError:
            raise ConfigError(f"{key}: {raw!r} is not a comma-separated integer list")

    def _typed(self, key, default, cast, what):
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required config key {key!r}")
            return default
        try:
            return cast(self.values[key])
        except ValueError:
            raise ConfigError(f"{key}: {self.values[key]!r} is not {what}")


def parse_config(text: str, source: str = "<string>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not _KEY.match(key):
            raise ConfigError(f"{source}:{lineno}: invalid key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def env_overrides(env: Mapping[str, str]) -> dict[str, str]:
    """JPT_A__B=v becomes a.b=v; malformed names are rejected, not skipped,
    so typos fail loudly."""
    values: dict[str, str] = {}
    for name, value in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX) :].lower().replace("__", ".")
        if not _KEY.match(key):
            raise ConfigError(f"environment variable {name} maps to invalid key {key!r}")
        values[key] = value
    return values


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> Config:
    """File values first, then JPT_ environment overrides on top."""
    values: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        values.update(parse_config(path.read_text(encoding="utf-8"), source=str(path)))
    values.update(env_overrides(os.environ if env is None else env))
    return Config(values)
