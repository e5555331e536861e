"""HYW1 weight container and the HYO1 optimizer section that may follow it.

Both sections share one tensor record layout (little-endian)::

    u16 path length | path (utf-8) | u8 dtype code | u8 ndim | u32 dims... | payload

A section is ``magic | u16 version | u32 json length | json | u32 tensor count
| tensor records | 16-byte BLAKE2b digest of every preceding section byte``.
The HYW1 json is the model config; the HYO1 json carries the step counter,
RNG state and history. A weights-only file is a valid checkpoint.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    DimensionOverflowError,
    HashMismatchError,
    MalformedMagicError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .model import HycassConfig, ModelParams

WEIGHTS_MAGIC = b"HYW1"
OPTIMIZER_MAGIC = b"HYO1"
VERSION = 1
DIGEST_SIZE = 16

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def _digest(buf: bytes) -> bytes:
    return hashlib.blake2b(buf, digest_size=DIGEST_SIZE).digest()


def _pack_section(magic: bytes, meta: dict, tensors: dict[str, np.ndarray]) -> bytes:
    out = bytearray(magic)
    blob = json.dumps(meta, sort_keys=True).encode()
    out += struct.pack("<HI", VERSION, len(blob)) + blob
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise TypeError(f"{name}: only float32/float64 tensors can be stored, got {arr.dtype}")
        path = name.encode()
        out += struct.pack("<HBB", len(path), code, arr.ndim) + path
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
    out += _digest(bytes(out))
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf, self.pos = buf, pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedPayloadError(f"need {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def _unpack_section(buf: bytes, pos: int, magic: bytes) -> tuple[dict, dict[str, np.ndarray], int]:
    r = _Reader(buf, pos)
    got = r.take(4)
    if got != magic:
        raise MalformedMagicError(f"expected magic {magic!r}, found {got!r}")
    version, n_meta = r.unpack("<HI")
    if version != VERSION:
        raise VersionMismatchError(f"{magic.decode()} version {version} is not supported (expected {VERSION})")
    meta = json.loads(r.take(n_meta))
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        n_path, code, ndim = r.unpack("<HBB")
        name = r.take(n_path).decode()
        if code not in _DTYPES:
            raise DimensionOverflowError(f"{name}: unknown dtype code {code}")
        dims = r.unpack(f"<{ndim}I")
        dt = _DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if nbytes > len(buf):
            raise DimensionOverflowError(f"{name}: declared {dims} exceeds the file size")
        tensors[name] = np.frombuffer(r.take(nbytes), dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    body_end = r.pos
    stored = r.take(DIGEST_SIZE)
    if _digest(buf[pos:body_end]) != stored:
        raise HashMismatchError(f"{magic.decode()} section digest does not match its contents")
    return meta, tensors, r.pos


# ---------------------------------------------------------------------------
# Model weights


def params_to_bytes(params: ModelParams) -> bytes:
    return _pack_section(WEIGHTS_MAGIC, params.config.to_dict(), params.tensors)


def params_from_bytes(buf: bytes) -> ModelParams:
    return _parse_weights(buf)[0]


def _parse_weights(buf: bytes) -> tuple[ModelParams, int]:
    meta, tensors, end = _unpack_section(buf, 0, WEIGHTS_MAGIC)
    return ModelParams(HycassConfig.from_dict(meta), tensors), end


def save_params(params: ModelParams, path: str | Path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path: str | Path) -> ModelParams:
    """Weights from a checkpoint file; any optimizer section is ignored."""
    return params_from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Full training checkpoints


@dataclass
class Checkpoint:
    """Weights plus everything needed to resume training bit-exactly."""

    params: ModelParams
    moments: dict[str, np.ndarray] = field(default_factory=dict)  # "m.<path>", "v.<path>"
    best: ModelParams | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def has_optimizer(self) -> bool:
        return bool(self.meta) or bool(self.moments)


def checkpoint_to_bytes(ckpt: Checkpoint) -> bytes:
    out = params_to_bytes(ckpt.params)
    if ckpt.has_optimizer or ckpt.best is not None:
        tensors = dict(ckpt.moments)
        if ckpt.best is not None:
            tensors.update({f"best.{k}": v for k, v in ckpt.best.tensors.items()})
        out += _pack_section(OPTIMIZER_MAGIC, ckpt.meta, tensors)
    return out


def checkpoint_from_bytes(buf: bytes) -> Checkpoint:
    params, end = _parse_weights(buf)
    if end == len(buf):
        return Checkpoint(params)
    meta, tensors, end = _unpack_section(buf, end, OPTIMIZER_MAGIC)
    if end != len(buf):
        raise DimensionOverflowError(f"{len(buf) - end} unexpected trailing bytes after optimizer section")
    best = {k[5:]: v for k, v in tensors.items() if k.startswith("best.")}
    moments = {k: v for k, v in tensors.items() if not k.startswith("best.")}
    return Checkpoint(params, moments, ModelParams(params.config, best) if best else None, meta)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    # write-then-rename so an interrupted save never leaves a torn file
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_to_bytes(ckpt))
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> Checkpoint:
    return checkpoint_from_bytes(Path(path).read_bytes())
