"""``SSCKPT1`` checkpoint files.

Layout (little-endian)::

    b"SSCKPT1"  u8 version  u32 arch_json_len  arch_json (utf-8)
    u64 adam_step
    four sections in order: theta, theta_ema, adam_m, adam_v
      u32 count, then per tensor:
      u16 name_len  name (utf-8)  u8 rank  u32 dims[rank]  float32 data
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .model import ArchConfig, ParamSet
from .optim import AdamState

MAGIC = b"SSCKPT1"
VERSION = 1
SECTIONS = ("theta", "theta_ema", "adam_m", "adam_v")


def _pack_tensors(tensors):
    out = [struct.pack("<I", len(tensors))]
    for name in tensors:
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def encode_checkpoint(paramset, adam=None):
    arch = json.dumps(paramset.arch.to_dict(), sort_keys=True).encode("utf-8")
    adam = adam or AdamState.for_params(paramset.params)
    parts = [MAGIC, struct.pack("<BI", VERSION, len(arch)), arch, struct.pack("<Q", adam.step)]
    parts.append(_pack_tensors(paramset.live()))
    parts.append(_pack_tensors({k: paramset.ema[k] for k in paramset.names()}))
    parts.append(_pack_tensors(adam.m))
    parts.append(_pack_tensors(adam.v))
    return b"".join(parts)


class _Reader:
    def __init__(self, blob):
        self.blob, self.pos = blob, 0

    def take(self, n, what):
        if self.pos + n > len(self.blob):
            raise FormatError(f"truncated while reading {what}", self.pos)
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))


def decode_checkpoint(blob):
    """Return ``(paramset, adam_state)``; tensors come back as float32."""
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError("bad magic, expected b'SSCKPT1'", 0)
    r = _Reader(blob)
    r.pos = len(MAGIC)
    version, arch_len = r.unpack("<BI", "header")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", len(MAGIC))
    arch_at = r.pos
    try:
        arch = ArchConfig(**json.loads(r.take(arch_len, "arch config").decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise FormatError(f"unreadable arch config: {exc}", arch_at) from None
    (step,) = r.unpack("<Q", "optimizer step")

    sections = {}
    for sec in SECTIONS:
        (count,) = r.unpack("<I", f"{sec} count")
        tensors = {}
        for _ in range(count):
            (nlen,) = r.unpack("<H", "name length")
            name = r.take(nlen, "name").decode("utf-8")
            (rank,) = r.unpack("<B", f"{name} rank")
            dims = r.unpack(f"<{rank}I", f"{name} dims")
            size = int(np.prod(dims, dtype=np.int64))
            data = r.take(4 * size, f"{name} data")
            tensors[name] = np.frombuffer(data, dtype="<f4").astype(np.float32).reshape(dims)
        sections[sec] = tensors
    if r.pos != len(blob):
        raise FormatError(f"{len(blob) - r.pos} trailing bytes", r.pos)

    from .model import build_model

    template = build_model(arch, np.random.default_rng(0))
    theta = sections["theta"]
    expected = set(template.names())
    if set(theta) != expected or set(sections["theta_ema"]) != expected:
        raise FormatError("parameter names do not match the arch config", arch_at)
    for k in expected:
        ref = template.params.get(k, template.state.get(k))
        if theta[k].shape != ref.shape:
            raise FormatError(f"{k}: shape {theta[k].shape} does not match arch ({ref.shape})", arch_at)
    ps = ParamSet(
        arch,
        {k: theta[k] for k in template.params},
        {k: theta[k] for k in template.state},
        dict(sections["theta_ema"]),
    )
    adam = AdamState(m=sections["adam_m"], v=sections["adam_v"], step=int(step))
    return ps, adam


def save_checkpoint(path, paramset, adam=None):
    Path(path).write_bytes(encode_checkpoint(paramset, adam))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
