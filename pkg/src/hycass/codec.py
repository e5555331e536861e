"""HYL1 latent bitstreams: end-to-end compression of cubes.

Layout (little-endian, 62-byte header then payload)::

    magic "HYL1" | u16 version | u32 Sigma, Omega, Gamma | u8 S | u32 N
    | u8 window | u32 H, W, C | u8 N_b | u8 payload dtype | f32 v_min, v_max
    | 16-byte model hash | payload [sigma][omega][gamma]

``N_b`` is stored as the bit count itself. Payload dtype 0 stores latents
as f32; dtype 1 stores them as u16 words over the sigmoid range [0, 1].
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import RAW, UNIT, HsiCube, NormalizationParams
from .errors import (
    ConfigMismatchError,
    CorruptHeaderError,
    DimensionOverflowError,
    HashMismatchError,
    MalformedMagicError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .model import ModelParams, check_spatial_dims, decode, encode

MAGIC = b"HYL1"
VERSION = 1
PAYLOAD_F32 = 0
PAYLOAD_U16 = 1
_PAYLOAD = {PAYLOAD_F32: (np.dtype("<f4"), 32), PAYLOAD_U16: (np.dtype("<u2"), 16)}
_PAYLOAD_NAMES = {"f32": PAYLOAD_F32, "u16": PAYLOAD_U16}

_HEADER = struct.Struct("<4sHIIIBIBIIIBBff16s")
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True)
class LatentBitstream:
    sigma: int
    omega: int
    gamma: int
    stages: int
    features: int
    window: int
    height: int
    width: int
    bands: int
    bit_depth: int
    payload_dtype: int
    v_min: float
    v_max: float
    model_hash: bytes
    payload: bytes
    version: int = VERSION

    @property
    def latent_bit_depth(self) -> int:
        return _PAYLOAD[self.payload_dtype][1]

    @property
    def header_bytes(self) -> int:
        """Container overhead, excluded from the CR accounting."""
        return HEADER_SIZE

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return self.sigma, self.omega, self.gamma

    def latent(self) -> np.ndarray:
        """The latent tensor as float32 ``(Sigma, Omega, Gamma)``."""
        dt, _ = _PAYLOAD[self.payload_dtype]
        words = np.frombuffer(self.payload, dtype=dt).reshape(self.latent_shape)
        if self.payload_dtype == PAYLOAD_U16:
            return (words.astype(np.float32) / np.float32(65535.0)).astype(np.float32)
        return words.astype(np.float32)

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.version, self.sigma, self.omega, self.gamma, self.stages,
                            self.features, self.window, self.height, self.width, self.bands,
                            self.bit_depth, self.payload_dtype, self.v_min, self.v_max, self.model_hash)
        return head + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes) -> "LatentBitstream":
        if len(buf) < 4 or buf[:4] != MAGIC:
            raise MalformedMagicError("not an HYL1 latent stream")
        if len(buf) < HEADER_SIZE:
            raise TruncatedPayloadError(f"HYL1 header needs {HEADER_SIZE} bytes, stream has {len(buf)}")
        (_, version, sigma, omega, gamma, stages, features, window, h, w, c,
         nb, dtype, v_min, v_max, digest) = _HEADER.unpack_from(buf)
        if version != VERSION:
            raise VersionMismatchError(f"HYL1 version {version} is not supported (expected {VERSION})")
        if dtype not in _PAYLOAD:
            raise CorruptHeaderError(f"unknown payload dtype code {dtype}")
        if min(sigma, omega, gamma, features, h, w, c, nb) < 1:
            raise CorruptHeaderError("header holds a zero dimension or bit depth")
        if stages > 30 or (sigma << stages, omega << stages) != (h, w):
            raise CorruptHeaderError(f"latent {sigma}x{omega} with S={stages} does not map to {h}x{w}")
        if not v_max > v_min:
            raise CorruptHeaderError(f"normalization range ({v_min}, {v_max}) is empty")
        nbytes = sigma * omega * gamma * _PAYLOAD[dtype][0].itemsize
        got = len(buf) - HEADER_SIZE
        if got < nbytes:
            raise TruncatedPayloadError(f"payload has {got} bytes, header declares {nbytes}")
        if got > nbytes:
            raise DimensionOverflowError(f"payload has {got} bytes, more than the {nbytes} declared")
        return cls(sigma, omega, gamma, stages, features, window, h, w, c, nb, dtype,
                   float(v_min), float(v_max), bytes(digest), bytes(buf[HEADER_SIZE:]), version)


def _f32_outward(lo: float, hi: float) -> tuple[float, float]:
    # f32 bounds that still enclose [lo, hi], so normalized values stay in [0, 1]
    lo32, hi32 = np.float32(lo), np.float32(hi)
    if float(lo32) > lo:
        lo32 = np.nextafter(lo32, np.float32(-np.inf))
    if float(hi32) < hi:
        hi32 = np.nextafter(hi32, np.float32(np.inf))
    return float(lo32), float(hi32)


def _normalize_for_stream(cube: HsiCube) -> tuple[np.ndarray, NormalizationParams]:
    if cube.norm_state == UNIT:
        norm = cube.norm or NormalizationParams(0.0, 1.0)
        if norm.per_band:
            raise ConfigMismatchError("HYL1 headers hold only global normalization params")
        return cube.values, NormalizationParams(*_f32_outward(float(norm.v_min), float(norm.v_max)))
    v = cube.values.astype(np.float64)
    lo, hi = _f32_outward(float(v.min()), float(v.max()))
    norm = NormalizationParams(lo, hi)  # rejects constant cubes
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0), norm


def compress(cube: HsiCube, params: ModelParams, payload: str = "f32") -> LatentBitstream:
    """Normalize (if raw), encode and serialize one cube."""
    cfg = params.config
    if payload not in _PAYLOAD_NAMES:
        raise ValueError(f"payload must be one of {sorted(_PAYLOAD_NAMES)}")
    if cube.bands != cfg.bands:
        raise ConfigMismatchError(f"cube has {cube.bands} bands, model expects {cfg.bands}")
    if cube.bit_depth > 255:
        raise ConfigMismatchError("bit depth must fit in one byte")
    check_spatial_dims(cfg, cube.height, cube.width)
    unit, norm = _normalize_for_stream(cube)
    y = encode(unit, params).values
    code = _PAYLOAD_NAMES[payload]
    if code == PAYLOAD_U16:
        body = np.round(np.clip(y, 0.0, 1.0) * 65535.0).astype("<u2")
    else:
        body = y.astype("<f4")
    s, o, g = y.shape
    return LatentBitstream(s, o, g, cfg.stages, cfg.features, cfg.window, cube.height, cube.width,
                           cube.bands, cube.bit_depth, code, norm.v_min, norm.v_max,
                           params.content_hash, body.tobytes())


def decompress(stream: LatentBitstream | bytes, params: ModelParams, unit: bool = False) -> HsiCube:
    """Decode a stream back to a cube with the header's dims and bit depth.

    The result is in sensor units (``norm_state="raw"``), or unit range
    when ``unit`` is true. Streams from a different model are rejected.
    """
    if isinstance(stream, (bytes, bytearray, memoryview)):
        stream = LatentBitstream.from_bytes(bytes(stream))
    if stream.model_hash != params.content_hash:
        raise HashMismatchError("stream was produced by a different model (content hash mismatch)")
    cfg = params.config
    expected = (cfg.latent_channels, cfg.stages, cfg.bands, cfg.features, cfg.window)
    if (stream.gamma, stream.stages, stream.bands, stream.features, stream.window) != expected:
        raise CorruptHeaderError("stream header disagrees with the model configuration")
    rec = decode(stream.latent(), params, bit_depth=stream.bit_depth)
    norm = NormalizationParams(stream.v_min, stream.v_max)
    if unit:
        return HsiCube(rec.values, bit_depth=stream.bit_depth, norm_state=UNIT, norm=norm)
    raw = rec.values.astype(np.float64) * norm.span + norm.v_min
    return HsiCube(raw, bit_depth=stream.bit_depth, norm_state=RAW)


def to_sensor_words(cube: HsiCube) -> HsiCube:
    """Round a raw 16-bit reconstruction onto the u16 grid for storage."""
    if cube.bit_depth != 16 or cube.norm_state != RAW:
        return cube
    words = np.clip(np.round(cube.values), 0, 0xFFFF).astype(np.uint16)
    return HsiCube(words, bit_depth=16, norm_state=RAW)


def measured_cr(stream: LatentBitstream, original: HsiCube | None = None) -> float:
    """``N_b H W C / (N_b_latent Sigma Omega Gamma)`` from the actual stream.

    ``original`` (if given) supplies ``N_b`` and the dims instead of the
    header; the header's own fields are used otherwise.
    """
    if original is not None:
        nb, (h, w, c) = original.bit_depth, original.shape
    else:
        nb, h, w, c = stream.bit_depth, stream.height, stream.width, stream.bands
    return (nb * h * w * c) / (stream.latent_bit_depth * stream.sigma * stream.omega * stream.gamma)


def element_cr(stream: LatentBitstream) -> float:
    """Element-count ratio, i.e. the CR when both bit depths are equal."""
    return (stream.height * stream.width * stream.bands) / (stream.sigma * stream.omega * stream.gamma)


def write_stream(stream: LatentBitstream, path: str | Path) -> None:
    Path(path).write_bytes(stream.to_bytes())


def read_stream(path: str | Path) -> LatentBitstream:
    return LatentBitstream.from_bytes(Path(path).read_bytes())
