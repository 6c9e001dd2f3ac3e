"""Versioned binary checkpoint container for trained rankers.

Layout (all integers little-endian, documented in docs/checkpoint_format.md):

    bytes 0-7    magic ``ACRANKPT``
    bytes 8-11   format version, uint32 (currently 1)
    bytes 12-19  header length in bytes, uint64
    next         header: canonical JSON (utf-8, sorted keys)
    next         tensor payload: float64 arrays, C order, little-endian,
                 concatenated in the order the header lists them

The header carries the network config, feature layout, feature scaler,
training metadata, a tensor directory (name, dtype, shape, offset, byte
count), and the sha256 of the tensor payload.  Serialization is fully
deterministic: saving the same model twice yields byte-identical files,
and load(save(m)) scores bit-identically.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import TextIO

import numpy as np

from .features import FeatureLayout
from .manifest import bytes_sha256, write_bytes_atomic
from .model import PARAM_KEYS, FeatureScaler, NetworkConfig, RankerModel, check_params

MAGIC = b"ACRANKPT"
FORMAT_VERSION = 1
_DTYPE = "<f8"


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or unsupported."""


def _header_dict(model: RankerModel, payload_sha256: str) -> dict:
    tensors = []
    offset = 0
    for name in PARAM_KEYS:
        array = model.params[name]
        nbytes = array.size * 8
        tensors.append({
            "name": name,
            "dtype": _DTYPE,
            "shape": list(array.shape),
            "offset": offset,
            "nbytes": nbytes,
        })
        offset += nbytes
    return {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "layout": model.layout.to_dict(),
        "scaler": model.scaler.to_dict(),
        "metadata": model.metadata,
        "ranker_id": model.ranker_id,
        "tensors": tensors,
        "payload_sha256": payload_sha256,
    }


def serialize_checkpoint(model: RankerModel) -> bytes:
    check_params(model.params, model.config)
    payload = b"".join(
        np.ascontiguousarray(model.params[name], dtype=np.float64)
        .astype(_DTYPE).tobytes(order="C")
        for name in PARAM_KEYS
    )
    header = json.dumps(
        _header_dict(model, bytes_sha256(payload)),
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    return b"".join([
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<Q", len(header)),
        header,
        payload,
    ])


def save_checkpoint(model: RankerModel, path: str | Path) -> None:
    write_bytes_atomic(path, serialize_checkpoint(model))


def deserialize_checkpoint(blob: bytes) -> RankerModel:
    if len(blob) < 20 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (header_len,) = struct.unpack("<Q", blob[12:20])
    header_end = 20 + header_len
    if len(blob) < header_end:
        raise CheckpointError("truncated header")
    try:
        header = json.loads(blob[20:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable header: {exc}") from exc

    payload = blob[header_end:]
    expected_hash = header.get("payload_sha256")
    if expected_hash is not None and bytes_sha256(payload) != expected_hash:
        raise CheckpointError("tensor payload hash mismatch")

    params: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(payload):
            raise CheckpointError(f"tensor {entry['name']} overruns the payload")
        array = np.frombuffer(
            payload[start:start + nbytes], dtype=entry["dtype"]
        ).reshape(entry["shape"]).astype(np.float64)
        params[entry["name"]] = array
    config = NetworkConfig.from_dict(header["config"])
    check_params(params, config)
    return RankerModel(
        config=config,
        params=params,
        layout=FeatureLayout.from_dict(header["layout"]),
        scaler=FeatureScaler.from_dict(header["scaler"]),
        metadata=header.get("metadata", {}),
        ranker_id=header.get("ranker_id", "deeppltr"),
    )


def load_checkpoint(path: str | Path) -> RankerModel:
    return deserialize_checkpoint(Path(path).read_bytes())


def export_text(model: RankerModel, stream: TextIO) -> None:
    """Human-readable debug dump: header fields plus every tensor value."""
    payload = b"".join(
        np.ascontiguousarray(model.params[name], dtype=np.float64).tobytes(order="C")
        for name in PARAM_KEYS
    )
    header = _header_dict(model, bytes_sha256(payload))
    stream.write(json.dumps({k: v for k, v in header.items() if k != "tensors"},
                            sort_keys=True, indent=2))
    stream.write("\n")
    for name in PARAM_KEYS:
        array = model.params[name]
        stream.write(f"tensor {name} shape={list(array.shape)}\n")
        for row in np.atleast_2d(array):
            stream.write(" ".join(repr(float(v)) for v in row) + "\n")
