"""Plain-text run configuration.

Grammar, one setting per line::

    # comment
    key = value

Keys are long option names (``top-k`` and ``top_k`` are the same key).
Blank lines and ``#`` comments are ignored; values are parsed by the option
they configure. A later line overrides an earlier one.
"""

from __future__ import annotations

import os
from typing import Mapping

SEED_ENV = "DUPLEX_FORGE_SEED"


class ConfigError(ValueError):
    pass


def normalize_key(key: str) -> str:
    return key.strip().replace("-", "_")


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if not key:
            raise ConfigError(f"{source}:{n}: empty key")
        out[key] = value.strip()
    return out


def read_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def dump_config(values: Mapping[str, object]) -> str:
    """Sorted ``key = value`` lines; None values are skipped."""
    lines = []
    for k in sorted(values):
        v = values[k]
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{k.replace('_', '-')} = {v}")
    return "\n".join(lines) + "\n"


def parse_bool(value: str) -> bool:
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def resolve_seed(explicit: int | None, configured: str | None = None, env: Mapping[str, str] | None = None) -> int:
    """Flag, then config file, then the environment variable, then 0."""
    env = os.environ if env is None else env
    for v in (explicit, configured, env.get(SEED_ENV)):
        if v is None or v == "":
            continue
        try:
            return int(v)
        except (TypeError, ValueError):
            raise ConfigError(f"seed must be an integer, got {v!r}") from None
    return 0
