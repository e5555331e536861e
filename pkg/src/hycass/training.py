"""MSE/Adam training over randomly sampled patches.

Determinism: for a fixed seed, dataset and dtype, training is bit-reproducible
in a single process, and resuming from a checkpoint continues the exact same
trajectory. The RNG stream for patch sampling is carried in the checkpoint.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import checkpoint as ckpt_io
from .data import UNIT, HsiCube, center_crop, min_max_normalize, sample_patch
from .errors import EmptyDatasetError, NonFiniteError, ShapeError
from .model import (
    HycassConfig,
    ModelParams,
    backward,
    check_spatial_dims,
    forward,
    init_params,
    valid_spatial_size,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings.

    ``steps_per_epoch=None`` sizes an epoch so that it visits as many pixels
    as the training set holds: ``ceil(ceil(total_pixels / patch**2) / batch)``.
    ``checkpoint_every=0`` disables periodic checkpoints.
    """

    epochs: int = 200
    learning_rate: float = 1e-4
    batch_size: int = 16
    patch_size: int = 128
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 0
    steps_per_epoch: int | None = None
    grad_clip: float | None = None
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.patch_size < 1:
            raise ValueError("epochs must be >= 0; batch_size and patch_size >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")
        if not self.eps > 0:
            raise ValueError("Adam eps must be positive")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be >= 1")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive")
        if np.dtype(self.dtype) not in (np.float32, np.float64):
            raise ValueError("dtype must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Loss and optimizer


def mse_loss(x, x_hat) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``x_hat``."""
    x, x_hat = np.asarray(x), np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"loss operands differ in shape: {x.shape} vs {x_hat.shape}")
    diff = x_hat - x.astype(x_hat.dtype, copy=False)
    n = diff.size
    return float(np.mean(np.square(diff, dtype=np.float64))), diff * (2.0 / n)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, tensors: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in tensors.items()},
                   {k: np.zeros_like(a) for k, a in tensors.items()}, 0)

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {**{f"m.{k}": a for k, a in self.m.items()}, **{f"v.{k}": a for k, a in self.v.items()}}

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray], t: int) -> "AdamState":
        m = {k[2:]: a for k, a in tensors.items() if k.startswith("m.")}
        v = {k[2:]: a for k, a in tensors.items() if k.startswith("v.")}
        return cls(m, v, t)


def _check_finite(grads: dict[str, np.ndarray]) -> None:
    bad = [k for k, g in grads.items() if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteError(f"non-finite gradient in {len(bad)} tensor(s), first: {bad[:3]}")


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              cfg: TrainConfig) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are left untouched."""
    _check_finite(grads)
    t = state.t + 1
    b1, b2, lr, eps = cfg.beta1, cfg.beta2, cfg.learning_rate, cfg.eps
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        new_p[k] = p - lr * (m / c1) / (np.sqrt(v / c2) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def clip_by_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}


# ---------------------------------------------------------------------------
# History


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_psnr: float
    seconds: float = field(default=0.0, compare=False)


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, rec: EpochRecord) -> None:
        self.records.append(rec)

    def to_list(self) -> list[dict]:
        return [asdict(r) for r in self.records]

    @classmethod
    def from_list(cls, rows: Iterable[dict]) -> "TrainHistory":
        return cls([EpochRecord(**r) for r in rows])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "val_psnr", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), f"{r.val_psnr:.3f}", f"{r.seconds:.3f}"])


# ---------------------------------------------------------------------------
# Data preparation


def prepare_cubes(cubes: Sequence[HsiCube], dtype=np.float32) -> list[np.ndarray]:
    """Unit-normalize raw cubes (global min-max per cube) and cast."""
    out = []
    for c in cubes:
        if c.norm_state != UNIT:
            c, _ = min_max_normalize(c)
        out.append(np.ascontiguousarray(c.values, dtype=dtype))
    return out


def _eval_view(cfg: HycassConfig, x: np.ndarray) -> np.ndarray:
    # largest centered crop the architecture accepts
    h, w = valid_spatial_size(cfg, x.shape[0]), valid_spatial_size(cfg, x.shape[1])
    if (h, w) == x.shape[:2]:
        return x
    return center_crop(HsiCube(x, norm_state=UNIT), h, w).values


def evaluate_cubes(params: ModelParams, cubes: Sequence[np.ndarray]) -> tuple[float, float]:
    """Mean MSE and mean per-cube PSNR (dB, peak 1) of the reconstructions."""
    from .evaluation.metrics import psnr

    losses, psnrs = [], []
    for x in cubes:
        x = _eval_view(params.config, x)
        xh = forward(params, x[None]).reconstruction[0]
        losses.append(mse_loss(x, xh)[0])
        psnrs.append(psnr(x, xh))
    return float(np.mean(losses)), float(np.mean(psnrs))


def default_steps_per_epoch(cubes: Sequence[np.ndarray], cfg: TrainConfig) -> int:
    pixels = sum(x.shape[0] * x.shape[1] for x in cubes)
    patches = -(-pixels // (cfg.patch_size ** 2))
    return max(1, -(-patches // cfg.batch_size))


# ---------------------------------------------------------------------------
# Training loop


class Trainer:
    """Stateful training loop that can checkpoint and resume bit-exactly.

    ``train_cubes`` and ``val_cubes`` may be raw or unit cubes; both are
    normalized once up front. With no validation cubes the training cubes
    double as the validation set.
    """

    def __init__(self, model_cfg: HycassConfig, train_cfg: TrainConfig,
                 train_cubes: Sequence[HsiCube], val_cubes: Sequence[HsiCube] = (),
                 params: ModelParams | None = None):
        if not train_cubes:
            raise EmptyDatasetError("training set is empty")
        self.model_cfg, self.cfg = model_cfg, train_cfg
        dtype = np.dtype(train_cfg.dtype)
        self.train_x = prepare_cubes(train_cubes, dtype)
        self.val_x = prepare_cubes(val_cubes, dtype) if val_cubes else self.train_x
        for x in self.train_x:
            if x.shape[-1] != model_cfg.bands:
                raise ShapeError(f"cube has {x.shape[-1]} bands, model expects {model_cfg.bands}")
            if train_cfg.patch_size > min(x.shape[:2]):
                raise ShapeError(f"patch size {train_cfg.patch_size} exceeds cube {x.shape[0]}x{x.shape[1]}")
        check_spatial_dims(model_cfg, train_cfg.patch_size, train_cfg.patch_size)

        init_seq, data_seq = np.random.SeedSequence(train_cfg.seed).spawn(2)
        if params is None:
            params = init_params(model_cfg, int(init_seq.generate_state(1)[0]), dtype)
        elif params.config != model_cfg:
            raise ValueError("initial params were built for a different model config")
        self.params = params.astype(dtype)
        self.rng = np.random.default_rng(data_seq)
        self.state = AdamState.zeros_like(self.params.tensors)
        self.epoch = 0
        self.history = TrainHistory()
        self.best = self.params.copy()
        self.best_psnr = -math.inf
        self.steps_per_epoch = train_cfg.steps_per_epoch or default_steps_per_epoch(self.train_x, train_cfg)

    # -- state ------------------------------------------------------------

    def to_checkpoint(self) -> ckpt_io.Checkpoint:
        meta = {
            "t": self.state.t,
            "epoch": self.epoch,
            "rng": self.rng.bit_generator.state,
            "history": self.history.to_list(),
            "best_psnr": self.best_psnr,
            "train_config": self.cfg.to_dict(),
        }
        return ckpt_io.Checkpoint(self.params, self.state.to_tensors(), self.best, meta)

    @classmethod
    def from_checkpoint(cls, ck: ckpt_io.Checkpoint, train_cubes, val_cubes=(),
                        train_cfg: TrainConfig | None = None) -> "Trainer":
        """Rebuild a trainer; ``train_cfg`` may only extend ``epochs``."""
        if not ck.has_optimizer:
            raise ValueError("checkpoint has no optimizer section; cannot resume")
        saved = TrainConfig.from_dict(ck.meta["train_config"])
        cfg = saved if train_cfg is None else train_cfg
        if replace(cfg, epochs=saved.epochs) != saved:
            raise ValueError("resuming requires the same train config apart from epochs")
        tr = cls(ck.params.config, cfg, train_cubes, val_cubes, params=ck.params)
        tr.state = AdamState.from_tensors(ck.moments, int(ck.meta["t"]))
        tr.epoch = int(ck.meta["epoch"])
        tr.rng.bit_generator.state = ck.meta["rng"]
        tr.history = TrainHistory.from_list(ck.meta["history"])
        tr.best_psnr = float(ck.meta["best_psnr"])
        tr.best = ck.best.copy() if ck.best is not None else tr.params.copy()
        return tr

    # -- loop -------------------------------------------------------------

    def _batch(self) -> np.ndarray:
        p = self.cfg.patch_size
        out = []
        for _ in range(self.cfg.batch_size):
            x = self.train_x[int(self.rng.integers(len(self.train_x)))]
            out.append(sample_patch(HsiCube(x, norm_state=UNIT), p, self.rng).values)
        return np.stack(out)

    def step(self) -> float:
        x = self._batch()
        trace = forward(self.params, x)
        loss, d_rec = mse_loss(x, trace.reconstruction)
        if not math.isfinite(loss):
            raise NonFiniteError(f"loss became {loss} at step {self.state.t + 1}")
        _, grads = backward(self.params, trace, d_rec)
        if self.cfg.grad_clip is not None:
            grads = clip_by_global_norm(grads, self.cfg.grad_clip)
        new, self.state = adam_step(self.params.tensors, grads, self.state, self.cfg)
        self.params = ModelParams(self.model_cfg, new)
        return loss

    def run_epoch(self) -> EpochRecord:
        t0 = time.perf_counter()
        losses = [self.step() for _ in range(self.steps_per_epoch)]
        val_loss, val_psnr = evaluate_cubes(self.params, self.val_x)
        self.epoch += 1
        rec = EpochRecord(self.epoch, float(np.mean(losses)), val_loss, val_psnr, time.perf_counter() - t0)
        self.history.append(rec)
        if val_psnr > self.best_psnr:
            self.best_psnr, self.best = val_psnr, self.params.copy()
        log.info("epoch %d/%d train_loss=%.6g val_loss=%.6g val_psnr=%.3f seconds=%.2f",
                 rec.epoch, self.cfg.epochs, rec.train_loss, rec.val_loss, rec.val_psnr, rec.seconds)
        return rec

    def fit(self, checkpoint_path: str | Path | None = None, epochs: int | None = None) -> TrainHistory:
        """Train until ``epochs`` (default ``cfg.epochs``) epochs are complete."""
        target = self.cfg.epochs if epochs is None else epochs
        while self.epoch < target:
            last_good = self.to_checkpoint() if checkpoint_path else None
            try:
                self.run_epoch()
            except NonFiniteError:
                if checkpoint_path:
                    ckpt_io.save_checkpoint(last_good, checkpoint_path)
                    log.error("non-finite values; last good state saved to %s", checkpoint_path)
                raise
            every = self.cfg.checkpoint_every
            if checkpoint_path and every and self.epoch % every == 0:
                ckpt_io.save_checkpoint(self.to_checkpoint(), checkpoint_path)
        if checkpoint_path:
            ckpt_io.save_checkpoint(self.to_checkpoint(), checkpoint_path)
        return self.history


def train(model_cfg: HycassConfig, train_cfg: TrainConfig, train_cubes: Sequence[HsiCube],
          val_cubes: Sequence[HsiCube] = (), *, params: ModelParams | None = None,
          checkpoint_path: str | Path | None = None) -> tuple[ModelParams, TrainHistory]:
    """Train from scratch and return the best-validation-PSNR weights."""
    tr = Trainer(model_cfg, train_cfg, train_cubes, val_cubes, params)
    history = tr.fit(checkpoint_path)
    best = tr.best if len(history) else tr.params
    return best, history
