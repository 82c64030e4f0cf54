"""Self-describing checkpoint files.

Layout (little-endian)::

    b"BVCK" | version u16
    | u32 length + UTF-8 JSON model config
    | u32 length + UTF-8 stage tag
    | u32 length + UTF-8 JSON metric history
    | u32 block count
    | per block: u16 name length, name, u16 rank, u64 dims[rank], float32 data

Blocks hold every trainable tensor followed by every buffer, in the fixed
order of :data:`PARAM_ORDER` and :data:`BUFFER_ORDER`.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset.formats import atomic_write, read_bytes
from ..errors import FormatError
from .model import BUFFER_ORDER, PARAM_ORDER, ModelConfig, ModelParams, init_params

CHECKPOINT_MAGIC = b"BVCK"
CHECKPOINT_VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: ModelParams
    stage: str = ""
    history: list = field(default_factory=list)
    version: int = CHECKPOINT_VERSION

    @property
    def config(self) -> ModelConfig:
        return self.params.config


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _blob(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def encode_checkpoint(ck: Checkpoint) -> bytes:
    p = ck.params
    parts = [CHECKPOINT_MAGIC, struct.pack("<H", ck.version), _blob(_json(p.config.to_dict())),
             _blob(ck.stage.encode("utf-8")), _blob(_json(ck.history))]
    blocks = [(k, p.params[k]) for k in PARAM_ORDER] + [(k, p.buffers[k]) for k in BUFFER_ORDER]
    parts.append(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack(f"<H{arr.ndim}Q", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.off = data, 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise FormatError("checkpoint truncated")
        out = self.data[self.off: self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))

    def blob(self) -> bytes:
        (n,) = self.unpack("<I")
        return self.take(n)


def decode_checkpoint(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("bad checkpoint magic")
    (version,) = r.unpack("<H")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        cfg_d = json.loads(r.blob())
        stage = r.blob().decode("utf-8")
        history = json.loads(r.blob())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint metadata: {exc}") from exc
    cfg = ModelConfig.from_dict(cfg_d)
    (n_blocks,) = r.unpack("<I")
    tensors = {}
    for _ in range(n_blocks):
        (nlen,) = r.unpack("<H")
        name = r.take(nlen).decode("utf-8")
        (rank,) = r.unpack("<H")
        dims = r.unpack(f"<{rank}Q")
        count = int(np.prod(dims, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * count), dtype=_F32).reshape(dims).astype(np.float32)
    if r.off != len(data):
        raise FormatError("trailing bytes after checkpoint blocks")
    missing = set(PARAM_ORDER + BUFFER_ORDER) - set(tensors)
    if missing:
        raise FormatError(f"checkpoint lacks blocks {sorted(missing)}")
    params = ModelParams({k: tensors[k] for k in PARAM_ORDER}, {k: tensors[k] for k in BUFFER_ORDER}, cfg)
    ref = _expected_shapes(cfg)
    for k, shape in ref.items():
        if tensors[k].shape != shape:
            raise FormatError(f"block {k} has shape {tensors[k].shape}, config implies {shape}")
    return Checkpoint(params, stage, history, version)


def _expected_shapes(cfg: ModelConfig) -> dict:
    p = init_params(cfg)
    return {k: v.shape for k, v in {**p.params, **p.buffers}.items()}


def save_checkpoint(path, ck: Checkpoint) -> Path:
    atomic_write(path, encode_checkpoint(ck))
    return Path(path)


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(read_bytes(path))
