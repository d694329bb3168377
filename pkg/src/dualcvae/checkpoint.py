"""Versioned binary checkpoint container.

Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON header
(sorted keys), then the named float64 blocks back to back in header order.
Writing the same content twice always yields the same bytes.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"DCVAECK1"
VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)  # epoch, step, config snapshot, rng states, ...

    def to_bytes(self) -> bytes:
        blocks, entries, offset = [], [], 0
        for group, arrays in (("params", self.params), ("optimizer", self.optimizer)):
            for name in sorted(arrays):
                arr = np.ascontiguousarray(arrays[name], dtype="<f8")
                entries.append({"group": group, "name": name, "shape": list(arr.shape), "offset": offset})
                blocks.append(arr.tobytes())
                offset += arr.nbytes
        header = json.dumps({"version": VERSION, "meta": self.meta, "blocks": entries},
                            sort_keys=True, separators=(",", ":")).encode()
        return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blocks)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Checkpoint:
        if raw[:8] != MAGIC:
            raise ValueError("not a checkpoint file (bad magic)")
        (n,) = struct.unpack("<Q", raw[8:16])
        header = json.loads(raw[16:16 + n])
        if header["version"] != VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        body = memoryview(raw)[16 + n:]
        groups: dict[str, dict[str, np.ndarray]] = {"params": {}, "optimizer": {}}
        for e in header["blocks"]:
            count = int(np.prod(e["shape"], dtype=np.int64))
            arr = np.frombuffer(body, dtype="<f8", count=count, offset=e["offset"])
            groups[e["group"]][e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
        return cls(groups["params"], groups["optimizer"], header["meta"])

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        return cls.from_bytes(Path(path).read_bytes())
