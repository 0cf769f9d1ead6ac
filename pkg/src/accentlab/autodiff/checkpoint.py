"""Checkpoint container.

Layout: 8-byte magic ``ACLBCKPT``, u32 version, u32 header length, a UTF-8
JSON header ``{"config": ..., "params": [{"name", "shape", "offset"}]}``,
then every parameter as little-endian float32, row-major, back to back.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ACLBCKPT"
VERSION = 1


def save_checkpoint(path, params, config: dict, extra: dict | None = None) -> None:
    """``params`` is an ordered mapping name -> array-like (or Parameter)."""
    entries, blobs, offset = [], [], 0
    for name, p in params.items():
        arr = np.asarray(getattr(p, "data", p), dtype="<f4")
        blob = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"config": config, "params": entries, "extra": extra or {}},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Return ``(config, {name: float64 array}, extra)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"not a checkpoint: {path}")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    body = raw[16 + hlen:]
    arrays = {}
    for e in header["params"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        a = np.frombuffer(body, dtype="<f4", count=count, offset=e["offset"])
        arrays[e["name"]] = a.reshape(e["shape"]).astype(np.float64)
    return header["config"], arrays, header.get("extra", {})
