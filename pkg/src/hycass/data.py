"""Hyperspectral cubes: container type, HSC1 file I/O, normalization,
cropping, random patches, synthetic data and dataset splits.

Cubes are stored pixel-major (``values[h, w, c]``), so each pixel's full
spectrum is contiguous in memory and on disk.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateRangeError,
    DimensionOverflowError,
    EmptyDatasetError,
    MalformedMagicError,
    ShapeError,
    TruncatedPayloadError,
)

RAW = "raw"
UNIT = "unit"

HSC_MAGIC = b"HSC1"
# magic | u32 H | u32 W | u32 C | u8 dtype | f32 v_min | f32 v_max
_HSC_HEADER = struct.Struct("<4sIIIBff")
HSC_HEADER_SIZE = _HSC_HEADER.size

DTYPE_U16_RAW = 0
DTYPE_F32_RAW = 1
DTYPE_F32_UNIT = 2
_DTYPE_ITEMSIZE = {DTYPE_U16_RAW: 2, DTYPE_F32_RAW: 4, DTYPE_F32_UNIT: 4}

# Refuse headers whose payload could not plausibly be addressed in memory.
MAX_PAYLOAD_BYTES = 1 << 40


@dataclass(frozen=True)
class NormalizationParams:
    """Affine range used to map raw samples onto [0, 1].

    ``v_min``/``v_max`` are scalars for global normalization or length-C
    arrays when normalizing per band.
    """

    v_min: float | np.ndarray
    v_max: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.v_max) <= np.asarray(self.v_min)):
            raise DegenerateRangeError(
                f"v_max must exceed v_min, got ({self.v_min}, {self.v_max})"
            )

    @property
    def per_band(self) -> bool:
        return np.ndim(self.v_min) > 0

    @property
    def span(self):
        return np.asarray(self.v_max, dtype=np.float64) - np.asarray(self.v_min, dtype=np.float64)


@dataclass(eq=False)
class HsiCube:
    """An H x W x C hyperspectral cube.

    Attributes:
        values: array of shape ``(H, W, C)``.
        bit_depth: bits per sample of the original sensor words (16 for
            u16 radiance, 32 for float products).
        norm_state: ``"raw"`` or ``"unit"``; unit cubes lie in [0, 1].
        norm: the normalization that produced a unit cube, if known.
    """

    values: np.ndarray
    bit_depth: int = 16
    norm_state: str = RAW
    norm: NormalizationParams | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ShapeError(f"cube values must be a non-empty H x W x C array, got {self.values.shape}")
        if self.bit_depth < 1:
            raise ValueError("bit_depth must be positive")
        if self.norm_state not in (RAW, UNIT):
            raise ValueError(f"unknown norm_state {self.norm_state!r}")
        if self.norm_state == UNIT:
            v = self.values
            if v.size and (np.nanmin(v) < 0 or np.nanmax(v) > 1):
                raise ValueError("unit-normalized cube has values outside [0, 1]")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    def equals(self, other: "HsiCube") -> bool:
        """Bit-exact comparison of payload and metadata."""
        return (
            self.values.dtype == other.values.dtype
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
            and self.bit_depth == other.bit_depth
            and self.norm_state == other.norm_state
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.7
    val_fraction: float = 0.2
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(not 0 < f < 1 for f in fr):
            raise ValueError(f"split fractions must lie in (0, 1), got {fr}")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(fr)}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the low-rank linear mixing generator.

    ``smoothness`` is the Gaussian correlation length (pixels) of the
    abundance maps; ``math.inf`` gives spatially constant abundances.
    """

    count: int = 1
    height: int = 32
    width: int = 32
    bands: int = 16
    smoothness: float = 4.0
    endmembers: int = 3
    seed: int = 0
    noise: float = 5e-4
    peak: float = 12000.0

    def __post_init__(self):
        if min(self.count, self.height, self.width, self.bands, self.endmembers) < 1:
            raise ValueError("count, dims and endmembers must be positive")
        if self.endmembers > self.bands:
            raise ValueError(f"endmembers ({self.endmembers}) must not exceed bands ({self.bands})")
        if self.smoothness < 0 or self.noise < 0:
            raise ValueError("smoothness and noise must be nonnegative")


# ---------------------------------------------------------------------------
# HSC1 files


def _dtype_code(cube: HsiCube) -> int:
    if cube.norm_state == UNIT:
        return DTYPE_F32_UNIT
    if np.issubdtype(cube.values.dtype, np.integer):
        return DTYPE_U16_RAW
    return DTYPE_F32_RAW


def encode_cube(cube: HsiCube) -> bytes:
    """Serialize a cube into HSC1 bytes."""
    code = _dtype_code(cube)
    if code == DTYPE_U16_RAW:
        v = cube.values
        if v.min() < 0 or v.max() > 0xFFFF:
            raise ValueError("integer cube values must fit in u16")
        payload = v.astype("<u2", copy=False)
    else:
        payload = cube.values.astype("<f4", copy=False)

    if code == DTYPE_F32_UNIT and cube.norm is not None:
        if cube.norm.per_band:
            raise ValueError("HSC1 headers hold only global normalization params")
        v_min, v_max = float(cube.norm.v_min), float(cube.norm.v_max)
    elif code == DTYPE_F32_UNIT:
        v_min, v_max = 0.0, 1.0
    else:
        v_min, v_max = float(cube.values.min()), float(cube.values.max())
    h, w, c = cube.shape
    return _HSC_HEADER.pack(HSC_MAGIC, h, w, c, code, v_min, v_max) + payload.tobytes()


def decode_cube(buf: bytes) -> HsiCube:
    if len(buf) < 4 or buf[:4] != HSC_MAGIC:
        raise MalformedMagicError("not an HSC1 cube file")
    if len(buf) < HSC_HEADER_SIZE:
        raise TruncatedPayloadError("HSC1 header is truncated")
    _, h, w, c, code, v_min, v_max = _HSC_HEADER.unpack_from(buf)
    if code not in _DTYPE_ITEMSIZE:
        raise MalformedMagicError(f"unknown HSC1 dtype code {code}")
    if min(h, w, c) < 1:
        raise DimensionOverflowError(f"HSC1 dims must be positive, got {h}x{w}x{c}")
    nbytes = h * w * c * _DTYPE_ITEMSIZE[code]
    if nbytes > MAX_PAYLOAD_BYTES:
        raise DimensionOverflowError(f"declared payload of {nbytes} bytes exceeds the supported maximum")
    available = len(buf) - HSC_HEADER_SIZE
    if available < nbytes:
        raise TruncatedPayloadError(f"payload has {available} bytes, header declares {nbytes}")
    if available > nbytes:
        raise DimensionOverflowError(
            f"payload has {available} bytes, more than the {nbytes} declared by the header"
        )
    dt = "<u2" if code == DTYPE_U16_RAW else "<f4"
    values = np.frombuffer(buf, dtype=dt, offset=HSC_HEADER_SIZE, count=h * w * c)
    values = values.astype(dt[1:], copy=True).reshape(h, w, c)
    if code == DTYPE_F32_UNIT:
        norm = NormalizationParams(v_min, v_max) if v_max > v_min else None
        return HsiCube(values, bit_depth=32, norm_state=UNIT, norm=norm)
    return HsiCube(values, bit_depth=16 if code == DTYPE_U16_RAW else 32, norm_state=RAW)


def write_cube(cube: HsiCube, path: str | Path) -> None:
    """Write ``cube`` as an HSC1 file.

    Integer cubes are stored as u16 words, everything else as f32; callers
    wanting a bit-exact round trip should hold float values as float32.
    """
    data = encode_cube(cube)
    with open(path, "wb") as fh:
        fh.write(data)


def read_cube(path: str | Path) -> HsiCube:
    with open(path, "rb") as fh:
        return decode_cube(fh.read())


# ---------------------------------------------------------------------------
# Normalization


def min_max_normalize(cube: HsiCube, per_band: bool = False) -> tuple[HsiCube, NormalizationParams]:
    """Map a raw cube onto [0, 1] with its own global (or per-band) range."""
    if cube.norm_state != RAW:
        raise ValueError("cube is already normalized")
    v = cube.values.astype(np.float64)
    if per_band:
        lo, hi = v.min(axis=(0, 1)), v.max(axis=(0, 1))
        if np.any(hi <= lo):
            raise DegenerateRangeError("at least one band is constant")
    else:
        lo, hi = float(v.min()), float(v.max())
        if not hi > lo:
            raise DegenerateRangeError("cannot normalize a constant cube")
    params = NormalizationParams(lo, hi)
    unit = np.clip((v - lo) / (np.asarray(hi) - lo), 0.0, 1.0)
    return HsiCube(unit, bit_depth=cube.bit_depth, norm_state=UNIT, norm=params), params


def denormalize(cube: HsiCube, params: NormalizationParams) -> HsiCube:
    if cube.norm_state != UNIT:
        raise ValueError("denormalize expects a unit-normalized cube")
    v = np.asarray(cube.values, dtype=np.float64)
    raw = v * params.span + np.asarray(params.v_min, dtype=np.float64)
    return HsiCube(raw, bit_depth=cube.bit_depth, norm_state=RAW)


# ---------------------------------------------------------------------------
# Cropping and sampling


def center_crop(cube: HsiCube, h: int, w: int) -> HsiCube:
    H, W, _ = cube.shape
    if h > H or w > W or h < 1 or w < 1:
        raise ShapeError(f"crop {h}x{w} does not fit inside {H}x{W}")
    top, left = (H - h) // 2, (W - w) // 2
    return replace(cube, values=cube.values[top : top + h, left : left + w].copy())


def sample_patch(cube: HsiCube, size: int, rng: np.random.Generator) -> HsiCube:
    """Crop a ``size`` x ``size`` patch at a uniformly random top-left corner."""
    H, W, _ = cube.shape
    if size > min(H, W) or size < 1:
        raise ShapeError(f"patch size {size} larger than source {H}x{W}")
    top = int(rng.integers(0, H - size + 1))
    left = int(rng.integers(0, W - size + 1))
    return replace(cube, values=cube.values[top : top + size, left : left + size].copy())


# ---------------------------------------------------------------------------
# Synthetic data


def _smooth_spectra(rng: np.random.Generator, k: int, bands: int) -> np.ndarray:
    # Sums of broad Gaussian absorption/reflection features over a slope.
    grid = np.linspace(0.0, 1.0, bands)
    spectra = np.empty((k, bands))
    for i in range(k):
        s = 0.3 + 0.4 * rng.random() + (rng.random() - 0.5) * 0.4 * grid
        for _ in range(4):
            centre, width = rng.random(), 0.05 + 0.2 * rng.random()
            s = s + (rng.random() - 0.3) * 0.5 * np.exp(-0.5 * ((grid - centre) / width) ** 2)
        spectra[i] = np.clip(s, 0.02, None)
    return spectra


def _abundances(rng: np.random.Generator, k: int, h: int, w: int, smoothness: float) -> np.ndarray:
    if math.isinf(smoothness):
        return np.broadcast_to(rng.random(k) + 0.1, (h, w, k)).copy()
    field_ = rng.standard_normal((h, w, k))
    if smoothness > 0:
        field_ = ndimage.gaussian_filter(field_, sigma=(smoothness, smoothness, 0), mode="wrap")
        field_ /= field_.std(axis=(0, 1), keepdims=True) + 1e-12
    return np.exp(0.75 * field_)


def synth_dataset(spec: SyntheticSpec) -> list[HsiCube]:
    """Generate ``spec.count`` raw u16 cubes from a nonnegative mixing model."""
    rng = np.random.default_rng(spec.seed)
    cubes = []
    for _ in range(spec.count):
        spectra = _smooth_spectra(rng, spec.endmembers, spec.bands)
        ab = _abundances(rng, spec.endmembers, spec.height, spec.width, spec.smoothness)
        mix = ab @ spectra
        mix = mix / mix.max()
        mix = mix + spec.noise * rng.standard_normal(mix.shape)
        dn = np.clip(np.rint(mix * spec.peak), 0, 0xFFFF).astype(np.uint16)
        cubes.append(HsiCube(dn, bit_depth=16, norm_state=RAW))
    return cubes


# ---------------------------------------------------------------------------
# Splits


class Split(NamedTuple):
    train: list
    val: list
    test: list

    @property
    def degenerate(self) -> bool:
        """True when the validation or test partition came out empty."""
        return not self.val or not self.test


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(cubes: Sequence, spec: SplitSpec = SplitSpec()) -> Split:
    """Shuffle deterministically and partition into train/val/test.

    Validation and test sizes are the rounded fractions; the remainder goes
    to training.
    """
    n = len(cubes)
    if n == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    n_val = _round_half_up(n * spec.val_fraction)
    n_test = _round_half_up(n * spec.test_fraction)
    while n_val + n_test >= n and (n_val or n_test):
        # training keeps at least one item
        if n_val >= n_test:
            n_val -= 1
        else:
            n_test -= 1
    order = np.random.default_rng(spec.seed).permutation(n)
    items = [cubes[i] for i in order]
    split = Split(items[n_val + n_test :], items[:n_val], items[n_val : n_val + n_test])
    if split.degenerate:
        warnings.warn(f"split of {n} items leaves an empty validation or test set", stacklevel=2)
    return split
