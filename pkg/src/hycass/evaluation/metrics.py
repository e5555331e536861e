"""Reconstruction fidelity: MSE, PSNR and the spectral angle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ShapeError


def _pair(x, x_hat):
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    x_hat = np.asarray(getattr(x_hat, "values", x_hat), dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"operands differ in shape: {x.shape} vs {x_hat.shape}")
    return x, x_hat


def mse(x, x_hat) -> float:
    x, x_hat = _pair(x, x_hat)
    return float(np.mean(np.square(x - x_hat)))


def psnr(x, x_hat, max_val: float = 1.0) -> float:
    """``10 log10(max_val**2 / MSE)`` in dB; ``inf`` when the inputs are equal."""
    err = mse(x, x_hat)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_val * max_val / err)


@dataclass(frozen=True)
class SpectralAngle:
    """Mean spectral angle in degrees over the pixels where it is defined.

    ``zero_pixels`` counts pixels excluded because either spectrum is all
    zero; ``mean_deg`` is ``nan`` if every pixel was excluded.
    """

    mean_deg: float
    zero_pixels: int
    pixels: int

    def __float__(self) -> float:
        return self.mean_deg


def sa_error_map(x, x_hat) -> np.ndarray:
    """Per-pixel spectral angle in degrees, shape ``(H, W)``.

    Pixels where either spectrum has zero norm are ``nan``.
    """
    x, x_hat = _pair(x, x_hat)
    if x.ndim < 2:
        raise ShapeError("spectral angle needs at least (pixels, bands) arrays")
    dot = np.sum(x * x_hat, axis=-1)
    norms = np.linalg.norm(x, axis=-1) * np.linalg.norm(x_hat, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.clip(dot / norms, -1.0, 1.0)
    ang = np.degrees(np.arccos(cos))
    ang[norms == 0] = np.nan
    return ang


def spectral_angle(x, x_hat) -> SpectralAngle:
    m = sa_error_map(x, x_hat)
    valid = ~np.isnan(m)
    n_valid = int(valid.sum())
    mean = float(m[valid].mean()) if n_valid else math.nan
    return SpectralAngle(mean, m.size - n_valid, m.size)


SA_MAP_MAX_DEG = 10.0


def write_sa_map(sa_map: np.ndarray, path: str | Path, max_deg: float = SA_MAP_MAX_DEG) -> Path:
    """Write a per-pixel SA map as a 16-bit PGM scaled linearly over [0, max_deg].

    Undefined pixels are written as 0. A ``.txt`` sidecar next to the image
    records the scale and the map's actual min/max.
    """
    path = Path(path)
    m = np.asarray(sa_map, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"SA map must be 2-D, got {m.shape}")
    scaled = np.nan_to_num(np.clip(m / max_deg, 0.0, 1.0), nan=0.0)
    words = np.round(scaled * 65535).astype(">u2")
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(words.tobytes())
    finite = m[~np.isnan(m)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (math.nan, math.nan)
    sidecar = path.with_suffix(path.suffix + ".txt")
    sidecar.write_text(
        f"scale_min_deg 0\nscale_max_deg {max_deg:g}\nmin_deg {lo:.4f}\nmax_deg {hi:.4f}\n"
        f"undefined_pixels {int(np.isnan(m).sum())}\n"
    )
    return sidecar


def read_pgm16(path: str | Path) -> np.ndarray:
    """Read a binary 16-bit PGM as written by :func:`write_sa_map`."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or len(parts) < 5:
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 65535:
        raise ValueError("expected a 16-bit PGM")
    payload = data[len(data) - 2 * w * h :]
    return np.frombuffer(payload, dtype=">u2").reshape(h, w).astype(np.uint16)
