"""Deterministic artifact plumbing: atomic writes, content hashing, and
run manifests.

Every artifact writer in the package funnels through these helpers so two
runs with the same inputs and seeds produce byte-identical files.  That
rules out wall-clock timestamps, filesystem ordering, and partial writes;
manifests identify artifacts by sha256 instead of mtime.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Mapping


def write_bytes_atomic(path: str | Path, payload: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never observe
    a half-written artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def write_text_atomic(path: str | Path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))


def canonical_json(payload) -> str:
    """Stable JSON: sorted keys, no trailing spaces, exact float repr."""
    return json.dumps(payload, sort_keys=True, separators=(",", ": "), indent=2)


def write_json_atomic(path: str | Path, payload) -> None:
    write_text_atomic(path, canonical_json(payload) + "\n")


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def bytes_sha256(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


def write_manifest(
    path: str | Path,
    kind: str,
    inputs: Mapping[str, str | Path],
    outputs: Mapping[str, str | Path],
    settings: Mapping | None = None,
) -> dict:
    """Record what a command produced from what.

    Inputs and outputs map logical names to file paths; each entry stores
    the path as given plus the file's content hash.  No timestamps, so
    reruns with identical content produce identical manifests.
    """
    manifest = {
        "kind": kind,
        "inputs": {
            name: {"path": str(p), "sha256": file_sha256(p)}
            for name, p in sorted(inputs.items())
        },
        "outputs": {
            name: {"path": str(p), "sha256": file_sha256(p)}
            for name, p in sorted(outputs.items())
        },
        "settings": dict(settings or {}),
    }
    write_json_atomic(path, manifest)
    return manifest
