"""Strict mapping validation shared by the bank and experiment file loaders."""
from __future__ import annotations

from typing import Any, Iterable, Mapping


class ConfigError(ValueError):
    """A configuration or bank file does not match its schema."""


def fields(mapping: Any, where: str, required: Iterable[str], optional: Iterable[str] = ()) -> dict:
    """Return ``mapping`` as a dict after checking keys; unknown keys are rejected."""
    if not isinstance(mapping, Mapping):
        raise ConfigError(f"{where}: expected a mapping, got {type(mapping).__name__}")
    required = list(required)
    allowed = set(required) | set(optional)
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    missing = [k for k in required if k not in mapping]
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(missing)}")
    return dict(mapping)


def number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        # PyYAML reads "1e-6" (no dot) as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def integer(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    return value
