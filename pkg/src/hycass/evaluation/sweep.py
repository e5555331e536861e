"""Rate-distortion sweep over (S, Gamma) grids.

Grid files are line oriented; each non-blank, non-comment line is either
``S,gamma`` or ``S,target_cr=X``::

    # S, gamma
    0,51
    2,target_cr=16

Results go to a CSV with the columns in :data:`CSV_COLUMNS`. CR columns are
written at full float precision so ``cr == cr_spec * cr_spat`` survives the
round trip; PSNR and SA use 3 and 4 decimals. A point that fails is written
with ``ERROR`` in its metric columns and is retried on resume.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data import HsiCube, SplitSpec, center_crop, denormalize, min_max_normalize, split_dataset
from ..errors import EmptyDatasetError, HycassError
from ..model import HycassConfig, achieved_cr, forward, gamma_for_target_cr, valid_spatial_size
from .metrics import psnr, spectral_angle

log = logging.getLogger(__name__)

CSV_COLUMNS = ("dataset", "S", "gamma", "cr", "cr_spec", "cr_spat", "psnr_db", "sa_deg", "seconds")
ERROR_MARK = "ERROR"


class GridError(HycassError, ValueError):
    pass


@dataclass(frozen=True)
class GridPoint:
    stages: int
    gamma: int | None = None
    target_cr: float | None = None

    def __post_init__(self):
        if (self.gamma is None) == (self.target_cr is None):
            raise GridError("a grid point needs exactly one of gamma or target_cr")
        if self.stages < 0:
            raise GridError("S must be >= 0")
        if self.gamma is not None and self.gamma < 1:
            raise GridError("gamma must be >= 1")
        if self.target_cr is not None and not self.target_cr > 0:
            raise GridError("target_cr must be positive")

    def resolve(self, bands: int) -> int:
        if self.gamma is not None:
            return self.gamma
        return gamma_for_target_cr(bands, self.stages, self.target_cr)


def parse_grid(text: str) -> list[GridPoint]:
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) != 2:
                raise ValueError("expected two comma-separated fields")
            s = int(parts[0])
            if parts[1].startswith("target_cr="):
                points.append(GridPoint(s, target_cr=float(parts[1][len("target_cr="):])))
            else:
                points.append(GridPoint(s, gamma=int(parts[1])))
        except ValueError as exc:
            raise GridError(f"grid line {lineno} ({raw.strip()!r}): {exc}") from None
    if not points:
        raise GridError("grid is empty")
    return points


def load_grid(path: str | Path) -> list[GridPoint]:
    return parse_grid(Path(path).read_text())


@dataclass(frozen=True)
class RdRecord:
    dataset: str
    stages: int
    gamma: int
    cr: float
    cr_spec: float
    cr_spat: float
    psnr_db: float
    sa_deg: float
    seconds: float
    error: str | None = None
    # per-epoch training loss of this run; not part of the CSV
    train_losses: tuple = field(default=(), compare=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def csv_row(self) -> list[str]:
        if self.error is not None:
            metrics = [ERROR_MARK, ERROR_MARK]
        else:
            metrics = [f"{self.psnr_db:.3f}", f"{self.sa_deg:.4f}"]
        return [self.dataset, str(self.stages), str(self.gamma), repr(self.cr), repr(self.cr_spec),
                repr(self.cr_spat), *metrics, f"{self.seconds:.3f}"]

    @classmethod
    def from_csv_row(cls, row: dict) -> "RdRecord":
        err = ERROR_MARK if row["psnr_db"] == ERROR_MARK else None
        metric = (lambda v: math.nan) if err else float
        return cls(row["dataset"], int(row["S"]), int(row["gamma"]), float(row["cr"]), float(row["cr_spec"]),
                   float(row["cr_spat"]), metric(row["psnr_db"]), metric(row["sa_deg"]),
                   float(row["seconds"]), err)


def read_csv(path: str | Path) -> list[RdRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise GridError(f"{path} does not have the sweep CSV columns")
        return [RdRecord.from_csv_row(r) for r in reader]


# ---------------------------------------------------------------------------
# Evaluation of one trained model


def eval_view(cfg: HycassConfig, cube: HsiCube) -> tuple[HsiCube, object]:
    """Unit-normalized, center-cropped view of ``cube`` that ``cfg`` accepts, plus its normalization."""
    unit, norm = (cube, cube.norm) if cube.norm_state == "unit" else min_max_normalize(cube)
    h, w = valid_spatial_size(cfg, unit.height), valid_spatial_size(cfg, unit.width)
    return center_crop(unit, h, w), norm


def evaluate_model(params, cubes: Sequence[HsiCube], domain: str = "unit") -> tuple[float, float]:
    """Mean PSNR (dB) and mean SA (degrees) over ``cubes``.

    Each cube is unit-normalized (if raw) and center-cropped to the largest
    size the model accepts. ``domain="raw"`` computes both metrics after
    mapping reconstructions back to sensor units, with PSNR peak set to the
    cube's dynamic range.
    """
    if domain not in ("unit", "raw"):
        raise ValueError("domain must be 'unit' or 'raw'")
    cfg = params.config
    psnrs, sas = [], []
    for cube in cubes:
        unit, norm = eval_view(cfg, cube)
        rec = forward(params, unit.values[None]).reconstruction[0].astype(np.float64)
        x, xh, peak = unit.values, rec, 1.0
        if domain == "raw":
            if norm is None:
                raise ValueError("raw-domain metrics need the cube's normalization parameters")
            x = denormalize(unit, norm).values
            xh = denormalize(HsiCube(np.clip(rec, 0, 1), norm_state="unit"), norm).values
            peak = float(np.max(norm.span))
        psnrs.append(psnr(x, xh, peak))
        sas.append(spectral_angle(x, xh).mean_deg)
    return float(np.mean(psnrs)), float(np.nanmean(sas))


# ---------------------------------------------------------------------------
# Sweep


@dataclass(frozen=True)
class SweepSettings:
    dataset_id: str = "synthetic"
    model: dict | None = None  # extra HycassConfig fields (features, window, ...)
    split: SplitSpec = SplitSpec()
    cr_only: bool = False
    domain: str = "unit"


def _run_point(point: GridPoint, split, bands: int, train_cfg, settings: SweepSettings) -> RdRecord:
    from ..training import train

    t0 = time.perf_counter()
    gamma = point.resolve(bands)
    cfg = HycassConfig(bands=bands, latent_channels=gamma, stages=point.stages, **(settings.model or {}))
    cr = achieved_cr(cfg)
    if settings.cr_only:
        return RdRecord(settings.dataset_id, point.stages, gamma, cr.cr, cr.cr_spec, cr.cr_spat,
                        math.nan, math.nan, time.perf_counter() - t0)
    try:
        train_set, val_set, test_set = split
        smallest = min(min(c.height, c.width) for c in train_set)
        patch = valid_spatial_size(cfg, min(train_cfg.patch_size, smallest))
        params, history = train(cfg, replace(train_cfg, patch_size=patch), train_set, val_set)
        p, sa = evaluate_model(params, test_set or val_set or train_set, settings.domain)
        return RdRecord(settings.dataset_id, point.stages, gamma, cr.cr, cr.cr_spec, cr.cr_spat,
                        p, sa, time.perf_counter() - t0,
                        train_losses=tuple(r.train_loss for r in history))
    except Exception as exc:  # recorded and the sweep moves on
        log.error("grid point S=%d gamma=%d failed: %s", point.stages, gamma, exc)
        return RdRecord(settings.dataset_id, point.stages, gamma, cr.cr, cr.cr_spec, cr.cr_spat,
                        math.nan, math.nan, time.perf_counter() - t0, error=f"{type(exc).__name__}: {exc}")


def rd_sweep(dataset: Sequence[HsiCube], grid: Sequence[GridPoint], train_cfg=None, *,
             settings: SweepSettings = SweepSettings(), csv_path: str | Path | None = None,
             jobs: int = 1, bands: int | None = None) -> list[RdRecord]:
    """Train and evaluate one model per grid point; returns records in grid order.

    If ``csv_path`` exists, rows already present for the same dataset, S
    and Gamma (and without an error marker) are reused instead of retrained.
    In ``cr_only`` mode no training happens and ``dataset`` may be empty if
    ``bands`` is given.
    """
    if not grid:
        raise GridError("grid is empty")
    if bands is None:
        if not dataset:
            raise EmptyDatasetError("dataset is empty")
        bands = dataset[0].bands
    if not settings.cr_only:
        if not dataset:
            raise EmptyDatasetError("dataset is empty")
        if train_cfg is None:
            from ..training import TrainConfig

            train_cfg = TrainConfig()
    split = split_dataset(dataset, settings.split) if dataset and not settings.cr_only else ((), (), ())

    done: dict[tuple, RdRecord] = {}
    path = Path(csv_path) if csv_path else None
    if path and path.exists() and path.stat().st_size:
        for r in read_csv(path):
            if r.ok:
                done[(r.dataset, r.stages, r.gamma)] = r
    if path and (not path.exists() or not path.stat().st_size):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerow(CSV_COLUMNS)

    keys = [(settings.dataset_id, p.stages, p.resolve(bands)) for p in grid]
    todo = [i for i, k in enumerate(keys) if k not in done]
    if len(todo) < len(grid):
        log.info("resuming: %d of %d grid points already in %s", len(grid) - len(todo), len(grid), path)

    def emit(rec):
        if path:
            with open(path, "a", newline="") as fh:
                csv.writer(fh).writerow(rec.csv_row())
        log.info("S=%d gamma=%d cr=%.4f psnr=%.3f sa=%.4f", rec.stages, rec.gamma, rec.cr, rec.psnr_db, rec.sa_deg)

    results: dict[int, RdRecord] = {}
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_point, grid[i], split, bands, train_cfg, settings) for i in todo]
            for i, fut in zip(todo, futures):  # emitted in grid order
                results[i] = fut.result()
                emit(results[i])
    else:
        for i in todo:
            results[i] = _run_point(grid[i], split, bands, train_cfg, settings)
            emit(results[i])
    return [results[i] if i in results else done[keys[i]] for i in range(len(grid))]
