"""Versioned binary checkpoints.

Layout (all integers little-endian):

    magic "PHFM"
    u32 format version (currently 1)
    u32 config length, then that many UTF-8 bytes of key=value lines
    parameter section: u32 record count, records sorted by name
    Adam first-moment section: same framing
    Adam second-moment section: same framing
    4 float32 loss-weight logits
    u64 epoch, u64 step
    u32 RNG-state length, then that many bytes

Every record is: u32 name length, name bytes, u32 rank, u32 dims x rank,
then float32 values. Round trips are bit-exact; loaders reject unknown
versions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import config_from_lines, config_to_lines
from .errors import IngestionError

MAGIC = b"PHFM"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model_config: object
    train_config: object
    params: dict
    adam_m: dict
    adam_v: dict
    logits: np.ndarray
    epoch: int
    step: int
    rng_state: bytes

    def scalar_count(self):
        """Number of trainable scalars in the parameter section."""
        return sum(int(a.size) for a in self.params.values())


def _pack_records(arrays):
    out = bytearray()
    out += struct.pack("<I", len(arrays))
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded))
        out += encoded
        out += struct.pack("<I", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, count):
        if self.pos + count > len(self.data):
            raise IngestionError("truncated checkpoint", self.path, self.pos)
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def records(self):
        out = {}
        for _ in range(self.u32()):
            name = self.take(self.u32()).decode("utf-8")
            rank = self.u32()
            dims = struct.unpack(f"<{rank}I", self.take(4 * rank)) if rank else ()
            count = int(np.prod(dims)) if dims else 1
            values = np.frombuffer(self.take(4 * count), dtype="<f4").reshape(dims)
            out[name] = values.astype(np.float32)
        return out


def checkpoint_to_bytes(ckpt):
    config_block = "\n".join(
        config_to_lines(ckpt.model_config, ckpt.train_config)
    ).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(config_block))
    out += config_block
    out += _pack_records(ckpt.params)
    out += _pack_records(ckpt.adam_m)
    out += _pack_records(ckpt.adam_v)
    logits = np.ascontiguousarray(ckpt.logits, dtype="<f4")
    assert logits.size == 4
    out += logits.tobytes()
    out += struct.pack("<QQ", ckpt.epoch, ckpt.step)
    out += struct.pack("<I", len(ckpt.rng_state))
    out += ckpt.rng_state
    return bytes(out)


def checkpoint_from_bytes(data, path="<bytes>"):
    reader = _Reader(data, path)
    if reader.take(4) != MAGIC:
        raise IngestionError("not a checkpoint (bad magic)", path, 0)
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise IngestionError(
            f"unsupported checkpoint format version {version} "
            f"(this build reads {FORMAT_VERSION})",
            path,
            4,
        )
    config_block = reader.take(reader.u32()).decode("utf-8")
    model_cfg, train_cfg = config_from_lines(config_block.splitlines())
    params = reader.records()
    adam_m = reader.records()
    adam_v = reader.records()
    logits = np.frombuffer(reader.take(16), dtype="<f4").astype(np.float32)
    epoch = reader.u64()
    step = reader.u64()
    rng_state = reader.take(reader.u32())
    return Checkpoint(model_cfg, train_cfg, params, adam_m, adam_v, logits,
                      epoch, step, rng_state)


def save_checkpoint(path, ckpt):
    Path(path).write_bytes(checkpoint_to_bytes(ckpt))


def load_checkpoint(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"cannot read checkpoint: {exc}", str(path))
    return checkpoint_from_bytes(data, str(path))
