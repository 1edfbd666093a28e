from __future__ import annotations

import dataclasses
import hashlib
from pathlib import Path
from typing import Any, Mapping, TypeVar

T = TypeVar("T")


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value or missing required field."""


def strict_from_dict(cls: type[T], data: Mapping[str, Any], where: str = "") -> T:
    """Build dataclass ``cls`` from ``data``, rejecting keys it does not declare.

    Keys may use the field name or, for fields with ``metadata={"key": ...}``,
    that alias (used for ``lambda``, a Python keyword).
    """
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where or cls.__name__}: expected an object, got {type(data).__name__}")
    by_key = {}
    for f in dataclasses.fields(cls):
        by_key[f.metadata.get("key", f.name)] = f.name
    kwargs = {}
    for key, value in data.items():
        if key not in by_key:
            prefix = f"{where}." if where else ""
            raise ConfigError(f"unknown config key {prefix}{key!r}")
        kwargs[by_key[key]] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or cls.__name__}: {exc}") from exc


def to_dict(obj: Any) -> dict[str, Any]:
    """Inverse of :func:`strict_from_dict` with JSON-friendly values."""
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
            value = value.value
        elif isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        out[f.metadata.get("key", f.name)] = value
    return out


def directory_digest(root: str | Path) -> str:
    """SHA-256 over relative paths and contents of every file under ``root``."""
    root = Path(root)
    h = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(path.read_bytes())
    return h.hexdigest()
