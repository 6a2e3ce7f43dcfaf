"""Checkpoint container and its binary wire format.

Format (little-endian throughout)::

    magic   8 bytes  b"ONFIRE01"
    u32     architecture name length, then that many UTF-8 bytes
    u32     tensor count
    per tensor, sorted by name:
        u32     name length, then UTF-8 bytes
        u32     rank
        u32[rank] extents
        f32[prod(extents)] raw data

Training metadata rides along as two reserved tensors, ``_meta/epoch`` and
``_meta/config_hash`` (the 32-bit hash split into two exactly-representable
16-bit halves); they are skipped when matching tensors to graph layers.
Sorting tensors by name makes save -> load -> save byte-identical.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError

MAGIC = b"ONFIRE01"
META_PREFIX = "_meta/"


def _write_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


@dataclass
class Checkpoint:
    """Named float32 tensors plus the architecture they belong to."""

    arch_name: str
    tensors: dict = field(default_factory=dict)
    epoch: int = 0
    config_hash: int = 0

    def layer_tensors(self) -> dict:
        """The tensor map without metadata entries."""
        return {k: v for k, v in self.tensors.items() if not k.startswith(META_PREFIX)}

    @classmethod
    def from_executor(cls, executor, epoch: int = 0, config_hash: int = 0) -> "Checkpoint":
        tensors = {name: arr.copy() for name, arr in executor.named_tensors().items()}
        return cls(executor.graph.name, tensors, epoch, config_hash)

    def apply_to(self, executor) -> None:
        executor.load_named_tensors(self.layer_tensors())

    def save(self, path) -> None:
        tensors = dict(self.layer_tensors())
        tensors[META_PREFIX + "epoch"] = np.asarray([self.epoch], dtype=np.float32)
        tensors[META_PREFIX + "config_hash"] = np.asarray(
            [self.config_hash >> 16, self.config_hash & 0xFFFF], dtype=np.float32)
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            _write_str(fh, self.arch_name)
            fh.write(struct.pack("<I", len(tensors)))
            for name in sorted(tensors):
                arr = np.ascontiguousarray(tensors[name], dtype=np.float32)
                _write_str(fh, name)
                fh.write(struct.pack("<I", arr.ndim))
                fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
                fh.write(arr.tobytes())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:8] != MAGIC:
            raise CheckpointError(
                f"bad checkpoint magic {data[:8]!r}, expected {MAGIC!r}")
        rd = _Reader(data)
        rd.pos = 8
        arch_name = rd.string()
        count = rd.u32()
        tensors = {}
        for _ in range(count):
            name = rd.string()
            rank = rd.u32()
            if rank > 32:
                raise CheckpointError(f"implausible tensor rank {rank}")
            shape = struct.unpack(f"<{rank}I", rd.take(4 * rank))
            numel = int(np.prod(shape, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(rd.take(4 * numel), dtype="<f4").reshape(shape)
            tensors[name] = arr.copy()
        if rd.pos != len(data):
            raise CheckpointError(f"{len(data) - rd.pos} trailing bytes after tensors")
        epoch_arr = tensors.pop(META_PREFIX + "epoch", None)
        hash_arr = tensors.pop(META_PREFIX + "config_hash", None)
        epoch = int(epoch_arr[0]) if epoch_arr is not None else 0
        config_hash = (int(hash_arr[0]) << 16 | int(hash_arr[1])) if hash_arr is not None else 0
        return cls(arch_name, tensors, epoch, config_hash)
