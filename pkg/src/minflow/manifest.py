"""Run manifests: every CLI command records what it did, atomically."""

from __future__ import annotations

import hashlib
import json
import os
import time


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(payload: dict, path) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_manifest(
    path,
    command: str,
    config: dict,
    inputs: list,
    outputs: list,
    timings_s: dict,
    seeds: dict | None = None,
) -> dict:
    from . import __version__

    payload = {
        "format_version": 1,
        "tool": f"minflow {__version__}",
        "command": command,
        "config": config,
        "seeds": seeds or {},
        "inputs": {str(p): file_digest(p) for p in inputs},
        "outputs": {str(p): file_digest(p) for p in outputs},
        "timings_s": timings_s,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    write_json_atomic(payload, path)
    return payload
