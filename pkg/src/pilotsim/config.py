"""Plain-text key-value configuration files.

Format: one `key = value` per line, `#` starts a comment, blank lines ignored.
Keys are dotted names (`plant.static_friction`), values are parsed as float,
int, bool (`true`/`false`), or kept as strings. All physical values are SI.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(Exception):
    """Malformed config file or unknown/invalid key."""


def _parse_value(raw: str):
    s = raw.strip()
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def load_config(path: str | Path) -> dict:
    """Parse a key-value file into a flat {dotted.key: value} dict."""
    out: dict = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = _parse_value(raw)
    return out


def dump_config(values: dict) -> str:
    """Render a flat dict back to the key-value text form (sorted keys)."""
    lines = []
    for key in sorted(values):
        v = values[key]
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"


def apply_overrides(defaults: dict, overrides: dict, allowed_prefixes: tuple[str, ...] = ()) -> dict:
    """Merge overrides into a copy of defaults, rejecting unknown keys.

    A key is known if it exists in defaults or starts with an allowed prefix.
    """
    merged = dict(defaults)
    for key, val in overrides.items():
        if key not in defaults and not any(key.startswith(p) for p in allowed_prefixes):
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = val
    return merged
