"""Versioned calibrated constants, read from a plain-text ``key = value`` file."""

from __future__ import annotations

import os
from functools import lru_cache
from importlib import resources
from pathlib import Path

ENV_VAR = "CSEU_CONSTANTS"
SUPPORTED_VERSION = 1


def default_path() -> Path:
    override = os.environ.get(ENV_VAR)
    if override:
        return Path(override)
    return Path(str(resources.files("cseu") / "data" / "constants.txt"))


def parse(text: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"constants line {lineno}: expected 'key = value'")
        key, val = (x.strip() for x in line.split("=", 1))
        out[key] = float(val)
    if int(out.get("version", -1)) != SUPPORTED_VERSION:
        raise ValueError(f"unsupported constants version {out.get('version')}")
    return out


@lru_cache(maxsize=4)
def _load(path: str) -> dict[str, float]:
    return parse(Path(path).read_text())


def load(path: str | Path | None = None) -> dict[str, float]:
    return dict(_load(str(path or default_path())))


def get(key: str, path: str | Path | None = None) -> float:
    table = load(path)
    if key not in table:
        raise KeyError(f"constant {key!r} not found in {path or default_path()}")
    return table[key]


def write(values: dict[str, float], path: str | Path | None = None, comment: str = "") -> Path:
    path = Path(path or default_path())
    lines = ["# Calibrated constants for the variance and query-count bounds."]
    if comment:
        lines += [f"# {c}" for c in comment.splitlines()]
    lines.append(f"version = {SUPPORTED_VERSION}")
    for k, v in values.items():
        if k != "version":
            lines.append(f"{k} = {v!r}")
    path.write_text("\n".join(lines) + "\n")
    _load.cache_clear()
    return path
