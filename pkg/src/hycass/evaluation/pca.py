"""Per-pixel PCA spectral codec, the classical baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import HsiCube
from ..errors import InsufficientRankError, ShapeError

MAX_FIT_PIXELS = 1_000_000


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray        # (C,)
    axes: np.ndarray        # (C, Gamma), orthonormal columns
    explained_variance: np.ndarray  # (Gamma,), sample variance along each axis

    @property
    def bands(self) -> int:
        return self.mean.shape[0]

    @property
    def gamma(self) -> int:
        return self.axes.shape[1]

    @property
    def cr_spec(self) -> float:
        return self.bands / self.gamma

    def project(self, pixels: np.ndarray) -> np.ndarray:
        return (pixels - self.mean) @ self.axes

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        return coeffs @ self.axes.T + self.mean


def _as_pixels(data) -> np.ndarray:
    if isinstance(data, HsiCube):
        data = data.values
    if isinstance(data, (list, tuple)) and data and isinstance(data[0], HsiCube):
        data = np.concatenate([c.values.reshape(-1, c.bands) for c in data])
    arr = np.asarray(data, dtype=np.float64)
    return arr.reshape(-1, arr.shape[-1])


def pca_fit(pixels, gamma: int, *, max_pixels: int = MAX_FIT_PIXELS, seed: int = 0,
            rank_tol: float | None = None) -> PcaModel:
    """Fit the top-``gamma`` principal axes of a set of spectra.

    ``pixels`` is an ``(n, C)`` array, a cube, or a list of cubes. Beyond
    ``max_pixels`` spectra, a uniform random subsample (without replacement,
    seeded) is used. Each axis is sign-fixed so that its largest-magnitude
    entry is positive.
    """
    X = _as_pixels(pixels)
    n, C = X.shape
    if not 1 <= gamma <= C:
        raise ValueError(f"gamma must lie in [1, {C}], got {gamma}")
    if n > max_pixels:
        idx = np.sort(np.random.default_rng(seed).choice(n, size=max_pixels, replace=False))
        X = X[idx]
        n = max_pixels
    mean = X.mean(axis=0)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    tol = rank_tol if rank_tol is not None else max(n, C) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > tol))
    if rank < gamma:
        raise InsufficientRankError(f"centered data has rank {rank}, fewer than gamma = {gamma}")
    axes = vt[:gamma].T.copy()
    pivot = np.argmax(np.abs(axes), axis=0)
    axes *= np.sign(axes[pivot, np.arange(gamma)])
    var = s[:gamma] ** 2 / max(n - 1, 1)
    return PcaModel(mean, axes, var)


def pca_codec(cube, model: PcaModel) -> tuple[np.ndarray, float]:
    """Project every pixel onto the model's axes and back.

    Returns the reconstruction (same shape as the input) and ``CR_spec = C/Gamma``.
    """
    values = cube.values if isinstance(cube, HsiCube) else np.asarray(cube)
    if values.shape[-1] != model.bands:
        raise ShapeError(f"cube has {values.shape[-1]} bands, PCA model expects {model.bands}")
    flat = values.reshape(-1, model.bands).astype(np.float64)
    rec = model.reconstruct(model.project(flat)).reshape(values.shape)
    return rec, model.cr_spec
