"""Versioned binary checkpoint container.

Layout: magic ``MCKP`` | uint32 version | uint32 header length | header JSON
| concatenated tensor payloads. The header carries the model kind, a config
echo and the name/shape of every tensor, in payload order. Payloads are
little-endian float32, C order; round-trips are bit-exact for float32
models.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"MCKP"
FORMAT_VERSION = 1


def save(path, model_kind: str, config: dict, tensors) -> None:
    """`tensors` is an iterable of (name, ndarray) pairs."""
    tensors = list(tensors)
    names = [n for n, _ in tensors]
    if len(set(names)) != len(names):
        raise CheckpointError("duplicate tensor names")
    header = {
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "config": config,
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for _, a in tensors:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load(path):
    """Returns (header dict, {name: float32 ndarray})."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        try:
            header = json.loads(fh.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt header") from exc
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise CheckpointError(f"{path}: truncated tensor {entry['name']!r}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return header, tensors
