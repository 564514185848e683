"""``key = value`` text configs mapped onto dataclass fields.

Keys are dotted, ``section.field``; ``#`` starts a comment. Values are
coerced to the type of the field's current value (tuples are comma lists).
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from ..exceptions import ConfigurationError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path) -> dict:
    return parse_config(Path(path).read_text())


def _coerce(value: str, current, key: str):
    try:
        if isinstance(current, bool):
            low = value.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(value)
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, (tuple, list)):
            items = [v.strip() for v in value.split(",") if v.strip()]
            kind = type(current[0]) if current else int
            return tuple(kind(v) for v in items)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {value!r} as {type(current).__name__}") from None
    return value


def section(config: dict, name: str) -> dict:
    prefix = name + "."
    return {k[len(prefix):]: v for k, v in config.items() if k.startswith(prefix)}


def apply(obj, values: dict, where: str = ""):
    """Return a copy of dataclass ``obj`` with ``values`` (strings) applied."""
    names = {f.name for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in values.items():
        if key not in names:
            raise ConfigurationError(f"unknown key '{where + '.' if where else ''}{key}'")
        changes[key] = _coerce(value, getattr(obj, key), key)
    return dataclasses.replace(obj, **changes)


def check_sections(config: dict, known) -> None:
    for key in config:
        head = key.split(".", 1)[0]
        if "." not in key or head not in known:
            raise ConfigurationError(f"unknown config key {key!r}; sections are {sorted(known)}")
