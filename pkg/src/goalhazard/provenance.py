"""Header lines stamped on every file the tools write."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Iterable

from . import __version__


def digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def describe(inputs: Iterable[str | Path] = (), extra: str = "") -> str:
    """``goalhazard <version> inputs: a.csv=sha256:... [extra]`` (no comment marker)."""
    parts = [f"goalhazard {__version__}"]
    inputs = list(inputs)
    if inputs:
        parts.append("inputs: " + " ".join(f"{Path(p).name}=sha256:{digest(p)}"
                                           for p in inputs))
    if extra:
        parts.append(extra)
    return " ".join(parts)


def strip_comments(lines: Iterable[str]) -> Iterable[str]:
    for line in lines:
        if not line.startswith("#"):
            yield line
