"""Run manifests written next to every primary output."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

from . import __version__

MANIFEST_SUFFIX = ".manifest.json"


def file_digest(path) -> str:
    """64-bit BLAKE2b content hash, hex encoded."""
    h = hashlib.blake2b(digest_size=8)
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: Dict[str, object]
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: int | None = None
    tool_version: str = __version__
    duration_seconds: float = 0.0

    def add_inputs(self, paths: List) -> None:
        for p in paths:
            if p is not None:
                self.inputs[str(p)] = file_digest(p)

    def add_outputs(self, paths: List) -> None:
        for p in paths:
            if p is not None and Path(p).exists():
                self.outputs[str(p)] = file_digest(p)

    def write(self, primary_output) -> Path:
        path = Path(str(primary_output) + MANIFEST_SUFFIX)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return path


def manifest_path(primary_output) -> Path:
    return Path(str(primary_output) + MANIFEST_SUFFIX)
