"""Run manifests: reproducibility metadata written next to every artifact."""

from __future__ import annotations

import datetime
import hashlib
import json
import os


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(
    artifact_path: str,
    subcommand: str,
    config: dict,
    input_paths: list[str],
    seed: int | None,
    wall_clock_s: float,
) -> str:
    """Write `<artifact>.manifest.json` atomically; returns its path."""
    from . import __version__

    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {os.path.basename(p): _sha256(p) for p in input_paths},
        "seed": seed,
        "tool_version": __version__,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "wall_clock_s": round(wall_clock_s, 3),
    }
    path = artifact_path + ".manifest.json"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)
    return path
