"""Binary and text file formats: audio, tensors, pose CSV, session manifests.

All binary formats are little-endian and store 32-bit floats. Writers are
deterministic, so write -> read -> write reproduces the file byte for byte.

Audio (``.bvau``)::

    b"BVAU" | version u16 | channels u16 | sample_rate u32 | n_samples u64
    | float32[n_samples * channels] interleaved (sample-major)

Tensor (``.bvtn``)::

    b"BVTN" | version u16 | rank u16 | dims u64[rank] | float32 row-major

Pose CSV: header ``timestamp_us,j00_x,...,j20_z``; one row per frame,
millimetres written with ``repr`` so every float64 round-trips.
"""
from __future__ import annotations

import csv
import io
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..acoustic_sim import STAGES
from ..chirp import ChirpSpec, SampleBuffer
from ..errors import FormatError
from ..skeleton import JOINT_ORDER_VERSION, N_JOINTS, csv_columns

AUDIO_MAGIC = b"BVAU"
TENSOR_MAGIC = b"BVTN"
FORMAT_VERSION = 1

_AUDIO_HEADER = struct.Struct("<4sHHIQ")
_TENSOR_HEADER = struct.Struct("<4sHH")
_F32 = np.dtype("<f4")


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# audio
# ---------------------------------------------------------------------------


def encode_audio(buf: SampleBuffer) -> bytes:
    x = np.atleast_2d(buf.samples)
    header = _AUDIO_HEADER.pack(AUDIO_MAGIC, FORMAT_VERSION, x.shape[0], int(buf.sample_rate_hz), x.shape[1])
    return header + np.ascontiguousarray(x.T, dtype=_F32).tobytes()


def decode_audio(data: bytes) -> SampleBuffer:
    if len(data) < _AUDIO_HEADER.size:
        raise FormatError("audio file truncated before header end")
    magic, version, ch, rate, n = _AUDIO_HEADER.unpack_from(data)
    if magic != AUDIO_MAGIC:
        raise FormatError(f"bad audio magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported audio version {version}")
    payload = memoryview(data)[_AUDIO_HEADER.size:]
    if len(payload) != 4 * ch * n:
        raise FormatError(f"audio payload holds {len(payload)} bytes, header implies {4 * ch * n}")
    x = np.frombuffer(payload, dtype=_F32).reshape(n, ch).T.astype(np.float64)
    return SampleBuffer(x if ch > 1 else x[0], rate)


def write_audio(path, buf: SampleBuffer) -> None:
    atomic_write(path, encode_audio(buf))


def read_audio(path) -> SampleBuffer:
    return decode_audio(read_bytes(path))


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------


def encode_tensor(arr: np.ndarray) -> bytes:
    a = np.asarray(arr)
    dims = struct.pack(f"<{a.ndim}Q", *a.shape)
    return _TENSOR_HEADER.pack(TENSOR_MAGIC, FORMAT_VERSION, a.ndim) + dims + np.ascontiguousarray(a, dtype=_F32).tobytes()


def decode_tensor(data: bytes) -> np.ndarray:
    if len(data) < _TENSOR_HEADER.size:
        raise FormatError("tensor file truncated before header end")
    magic, version, rank = _TENSOR_HEADER.unpack_from(data)
    if magic != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported tensor version {version}")
    off = _TENSOR_HEADER.size
    if len(data) < off + 8 * rank:
        raise FormatError("tensor file truncated inside dims")
    dims = struct.unpack_from(f"<{rank}Q", data, off)
    off += 8 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(data) - off != 4 * count:
        raise FormatError(f"tensor payload holds {len(data) - off} bytes, dims imply {4 * count}")
    return np.frombuffer(data, dtype=_F32, offset=off).reshape(dims).astype(np.float32)


def write_tensor(path, arr: np.ndarray) -> None:
    atomic_write(path, encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(read_bytes(path))


# ---------------------------------------------------------------------------
# pose CSV
# ---------------------------------------------------------------------------


def encode_pose_csv(timestamps_us, joints_mm) -> bytes:
    ts = np.asarray(timestamps_us, dtype=np.int64)
    j = np.asarray(joints_mm, dtype=np.float64).reshape(len(ts), 3 * N_JOINTS)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(csv_columns())
    for t, row in zip(ts, j):
        w.writerow([int(t)] + [repr(float(v)) for v in row])
    return out.getvalue().encode("utf-8")


def decode_pose_csv(data: bytes):
    """Returns ``(timestamps_us (T,), joints_mm (T, 21, 3))``."""
    rows = list(csv.reader(io.StringIO(data.decode("utf-8"))))
    if not rows or rows[0] != csv_columns():
        raise FormatError("pose CSV header does not match the 21-joint column layout")
    body = rows[1:]
    if any(len(r) != 1 + 3 * N_JOINTS for r in body):
        raise FormatError("pose CSV row with wrong column count")
    try:
        ts = np.array([int(r[0]) for r in body], dtype=np.int64)
        j = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64).reshape(-1, N_JOINTS, 3)
    except ValueError as exc:
        raise FormatError(f"pose CSV holds a non-numeric value: {exc}") from exc
    if not np.all(np.isfinite(j)):
        raise FormatError("pose CSV holds non-finite coordinates")
    if np.any(np.diff(ts) < 0):
        raise FormatError("pose CSV timestamps are not sorted")
    return ts, j


def write_pose_csv(path, timestamps_us, joints_mm) -> None:
    atomic_write(path, encode_pose_csv(timestamps_us, joints_mm))


def read_pose_csv(path):
    return decode_pose_csv(read_bytes(path))


# ---------------------------------------------------------------------------
# session manifest (YAML)
# ---------------------------------------------------------------------------

MANIFEST_KEYS = ("session_id", "subject_id", "room_id", "stage", "seed", "chirp", "files",
                 "joint_order_version", "start_offset_samples", "extra")


@dataclass
class SessionManifest:
    """One recorded (or simulated) session.

    ``files`` maps roles (``audio``, ``poses``, ``features``, ``labels``) to
    paths relative to the manifest's directory.
    """

    session_id: str
    subject_id: str
    stage: str
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    files: dict = field(default_factory=dict)
    seed: int = 0
    room_id: str = "room0"
    joint_order_version: int = JOINT_ORDER_VERSION
    start_offset_samples: Optional[int] = None
    extra: dict = field(default_factory=dict)
    path: Optional[Path] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise FormatError(f"stage {self.stage!r} is not one of {STAGES}")
        if self.joint_order_version != JOINT_ORDER_VERSION:
            raise FormatError(f"joint order version {self.joint_order_version} unsupported")

    def file(self, role: str) -> Path:
        if role not in self.files:
            raise FormatError(f"session {self.session_id} lists no {role!r} file")
        base = self.path.parent if self.path is not None else Path(".")
        return base / self.files[role]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "subject_id": self.subject_id,
            "room_id": self.room_id,
            "stage": self.stage,
            "seed": int(self.seed),
            "chirp": self.chirp.to_dict(),
            "files": dict(sorted(self.files.items())),
            "joint_order_version": self.joint_order_version,
            "start_offset_samples": self.start_offset_samples,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict, path=None) -> "SessionManifest":
        unknown = set(d) - set(MANIFEST_KEYS)
        if unknown:
            raise FormatError(f"unknown manifest keys: {sorted(unknown)}")
        missing = {"session_id", "subject_id", "stage"} - set(d)
        if missing:
            raise FormatError(f"manifest lacks {sorted(missing)}")
        kw = dict(d)
        kw["chirp"] = ChirpSpec.from_dict(kw.get("chirp") or {})
        kw["files"] = dict(kw.get("files") or {})
        kw["extra"] = dict(kw.get("extra") or {})
        kw["session_id"], kw["subject_id"] = str(kw["session_id"]), str(kw["subject_id"])
        kw.setdefault("room_id", "room0")
        kw["room_id"] = str(kw["room_id"])
        return cls(**kw, path=Path(path) if path is not None else None)

    def validate_files(self) -> None:
        """Every referenced file exists and parses."""
        readers = {"audio": read_audio, "poses": read_pose_csv, "features": read_tensor,
                   "labels": read_pose_csv, "template": read_pose_csv}
        for role in self.files:
            p = self.file(role)
            if not p.exists():
                raise FormatError(f"session {self.session_id}: {role} file {p} does not exist")
            if role in readers:
                readers[role](p)


def encode_manifest(m: SessionManifest) -> bytes:
    return yaml.safe_dump(m.to_dict(), sort_keys=False).encode("utf-8")


def write_manifest(path, m: SessionManifest) -> None:
    atomic_write(path, encode_manifest(m))


def read_manifest(path) -> SessionManifest:
    try:
        d = yaml.safe_load(read_bytes(path).decode("utf-8"))
    except yaml.YAMLError as exc:
        raise FormatError(f"manifest {path} is not valid YAML: {exc}") from exc
    if not isinstance(d, dict):
        raise FormatError(f"manifest {path} must hold a mapping")
    return SessionManifest.from_dict(d, path)
