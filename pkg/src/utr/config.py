"""Plain-text ``key = value`` run configs.

A config file may hold bare keys or ``[section]`` groups; section names
are ignored so one file can drive several commands. Keys use the long
flag name with dashes or underscores. Flags given on the command line win.
"""
from __future__ import annotations

import configparser
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

RESOLVED_NAME = "resolved_config.ini"


def read_config(path) -> dict[str, str]:
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out: dict[str, str] = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def merge(explicit: Mapping[str, object], from_file: Mapping[str, str], defaults: Mapping[str, object],
          converters: Mapping[str, object]) -> dict[str, object]:
    """Resolve each key as flag, then file, then default.

    ``explicit`` holds only flags the user actually typed. Unknown file
    keys raise :class:`ConfigError`.
    """
    unknown = sorted(set(from_file) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}; allowed: {', '.join(sorted(defaults))}")
    out = dict(defaults)
    for key, raw in from_file.items():
        conv = converters.get(key, str)
        try:
            out[key] = conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key {key}={raw!r}: {exc}") from None
    out.update(explicit)
    return out


def parse_bool(raw) -> bool:
    if isinstance(raw, bool):
        return raw
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def write_resolved(directory, command: str, values: Mapping[str, object]) -> Path:
    path = Path(directory) / RESOLVED_NAME
    lines = [f"[{command}]"] + [f"{k} = {'' if v is None else v}" for k, v in sorted(values.items())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
