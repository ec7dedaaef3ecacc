"""Plain-text ``key = value`` configuration files."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent configuration input."""


def read_key_values(path: str | Path) -> dict[str, str]:
    """Parse a ``key = value`` file into a string map.

    Blank lines and lines starting with ``#`` or ``;`` are skipped.
    Later assignments of the same key override earlier ones.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value.strip()
    return out


def parse_int_list(value: str) -> tuple[int, ...]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    try:
        return tuple(int(v) for v in items)
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated integers, got {value!r}") from exc


def parse_float_list(value: str) -> tuple[float, ...]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    try:
        return tuple(float(v) for v in items)
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {value!r}") from exc


def parse_str_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())
