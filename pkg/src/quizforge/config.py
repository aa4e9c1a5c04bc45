"""Flat INI-style config files with per-module sections.

Every CLI flag has a config-file equivalent; flags override file values and
the QUIZFORGE_SEED environment variable overrides any configured seed. A
validation failure always names the offending [section] key.
"""

from __future__ import annotations

import configparser
import os


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def parse_int_tuple(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(part) for part in raw.split(","))


def parse_float_list(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(part) for part in raw.split(","))


def parse_str_list(raw: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in raw.split(",") if p.strip())


_CASTS = {
    int: int,
    float: float,
    str: str,
    bool: _parse_bool,
    "int_tuple": parse_int_tuple,
    "float_list": parse_float_list,
    "str_list": parse_str_list,
}


class ConfigFile:
    """A parsed INI file with typed, error-located getters."""

    def __init__(self, path: str | None = None):
        self.path = path
        self.parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        if path is not None:
            read = self.parser.read(path)
            if not read:
                raise ConfigError(f"config file not found: {path}")

    def get(self, section: str, key: str, cast=str, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key)
        try:
            return _CASTS[cast](raw)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from exc

    def section(self, name: str) -> dict:
        if not self.parser.has_section(name):
            return {}
        return dict(self.parser.items(name))

    def has_section(self, name: str) -> bool:
        return self.parser.has_section(name)


def resolve(flag_value, cfg: ConfigFile, section: str, key: str, cast, default):
    """Effective value: flag beats config file beats default."""
    if flag_value is not None:
        return flag_value
    return cfg.get(section, key, cast, default)


def env_seed_override(seed: int) -> int:
    """QUIZFORGE_SEED beats every configured or flagged seed."""
    raw = os.environ.get("QUIZFORGE_SEED")
    if raw is None:
        return seed
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"QUIZFORGE_SEED: cannot parse {raw!r}") from exc
