"""Versioned binary checkpoints.

Layout (little-endian)::

    b"SNNCKPT1"
    u32 version
    u32 epoch
    str config        (u32 byte length + UTF-8 text, the full experiment config)
    str rng_state     (JSON of the numpy bit-generator state)
    3 x tensor group  (params, velocity, extras), each:
        u32 count, then per tensor: str name, u32 ndim, u32 dims..., float64 data
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"SNNCKPT1"
VERSION = 1


@dataclass
class Checkpoint:
    config_text: str
    params: dict
    velocity: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    epoch: int = 0
    rng_state: dict = None
    version: int = VERSION


def _str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _group(tensors: dict) -> bytes:
    out = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        out.append(_str(name))
        out.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


def to_bytes(ckpt: Checkpoint) -> bytes:
    rng = json.dumps(ckpt.rng_state, sort_keys=True) if ckpt.rng_state is not None else ""
    return b"".join([
        MAGIC,
        struct.pack("<II", ckpt.version, ckpt.epoch),
        _str(ckpt.config_text),
        _str(rng),
        _group(ckpt.params),
        _group(ckpt.velocity),
        _group(ckpt.extras),
    ])


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.raw):
            raise ValueError("checkpoint truncated")
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, n=1):
        vals = struct.unpack(f"<{n}I", self.take(4 * n))
        return vals if n > 1 else vals[0]

    def str(self):
        return self.take(self.u32()).decode("utf-8")

    def group(self):
        out = {}
        for _ in range(self.u32()):
            name = self.str()
            ndim = self.u32()
            shape = tuple(struct.unpack(f"<{ndim}I", self.take(4 * ndim)))
            count = int(np.prod(shape)) if ndim else 1
            out[name] = np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
        return out


def from_bytes(raw: bytes) -> Checkpoint:
    r = _Reader(raw)
    if r.take(len(MAGIC)) != MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    version, epoch = r.u32(2)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    config_text = r.str()
    rng = r.str()
    params, velocity, extras = r.group(), r.group(), r.group()
    if r.pos != len(raw):
        raise ValueError("trailing bytes after checkpoint")
    return Checkpoint(config_text, params, velocity, extras, epoch, json.loads(rng) if rng else None, version)


def save(path, ckpt: Checkpoint):
    with open(path, "wb") as f:
        f.write(to_bytes(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as f:
        return from_bytes(f.read())
