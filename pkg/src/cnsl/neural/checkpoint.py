"""Single-file checkpoints.

Layout::

    b"CNSLCKPT"                 8-byte magic
    uint32 LE                   format version
    uint64 LE                   JSON header length in bytes
    JSON header (UTF-8)         {"arch": {...}, "params": [{"name", "shape", "offset"}, ...]}
    raw little-endian float64   parameter blocks back to back, in header order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CNSLCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_params(path, arch: dict, named: list[tuple[str, np.ndarray]]) -> None:
    blocks, offset = [], 0
    for name, arr in named:
        arr = np.asarray(arr, dtype="<f8")
        blocks.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = json.dumps({"arch": arch, "params": blocks}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for _, arr in named:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def _read_header(fh, path) -> dict:
    if fh.read(8) != MAGIC:
        raise CheckpointError(f"{path}: not a CNSL checkpoint")
    version, n = struct.unpack("<IQ", fh.read(12))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    return json.loads(fh.read(n).decode("utf-8"))


def load_params(path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    params = {}
    for block in header["params"]:
        size = int(np.prod(block["shape"], dtype=np.int64))
        start = block["offset"]
        if start + size > raw.size:
            raise CheckpointError(f"{path}: truncated data for {block['name']}")
        params[block["name"]] = raw[start:start + size].reshape(block["shape"]).astype(np.float64)
    return header["arch"], params
