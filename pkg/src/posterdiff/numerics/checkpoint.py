"""Versioned binary checkpoint container.

Layout (all integers little-endian):
  magic "IPST" | version u32 | config-JSON length u64 + UTF-8 bytes |
  tensor count u32 | per tensor: name length u32 + UTF-8 name,
  rank u32, dims u64 each, raw float32 data.
"""

from __future__ import annotations

import hashlib
import json
import struct
from typing import Any

import numpy as np

MAGIC = b"IPST"
VERSION = 1


def save_checkpoint(path, tensors: dict[str, np.ndarray], config: dict[str, Any]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        cfg = json.dumps(config).encode("utf-8")
        f.write(struct.pack("<Q", len(cfg)))
        f.write(cfg)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise ValueError(f"not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", f.read(4))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (cfg_len,) = struct.unpack("<Q", f.read(8))
        config = json.loads(f.read(cfg_len).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", f.read(4))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}Q", f.read(8 * rank)) if rank else ()
            size = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(f.read(4 * size), dtype="<f4").reshape(dims)
            tensors[name] = data.copy()
    return tensors, config


def checkpoint_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
