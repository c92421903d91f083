"""Self-describing parameter checkpoints.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON
header, then the raw float64 little-endian array payloads. The header
maps array names to shapes and byte offsets and carries an arbitrary
JSON metadata dict. Writing is byte-stable: names are sorted and the
header is serialized with sorted keys.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TTXCKPT1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None
) -> None:
    entries = {}
    payload = bytearray()
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        entries[name] = {"shape": list(arr.shape), "offset": len(payload)}
        payload += arr.tobytes()
    header = {"meta": meta or {}, "arrays": entries}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    body = raw[16 + hlen :]
    arrays = {}
    for name, entry in header["arrays"].items():
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=start)
        arrays[name] = arr.reshape(shape).astype(np.float64)
    return arrays, header.get("meta", {})
