"""The six-module spatio-spectral autoencoder.

Encoder: spectral encoder (1x1 conv C->N, LeakyReLU), ``S`` spatial stages
(RSTB, 3x3 stride-2 conv, LeakyReLU) and the CR adapter (1x1 conv N->Gamma,
sigmoid). The decoder mirrors it; each decoder stage upsamples first and
then applies its RSTB.

Parameters live in a flat ``{path: array}`` dict; paths look like
``spatial_encoder.0.rstb.stl.0.wa.qkv.weight``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import nn
from .data import UNIT, HsiCube
from .errors import DivisibilityError, ShapeError
from .nn import functional as F

MODULES = (
    "spectral_encoder",
    "spatial_encoder",
    "cr_encoder",
    "cr_decoder",
    "spatial_decoder",
    "spectral_decoder",
)


@dataclass(frozen=True)
class HycassConfig:
    """Architecture knobs; together with the weights they fix the model.

    ``features`` is the channel width N, ``latent_channels`` is Gamma and
    ``stages`` is the number of spatial stages S. Gamma may exceed the band
    count.
    """

    bands: int
    latent_channels: int
    stages: int = 0
    features: int = 128
    window: int = 8
    heads: int = 8
    mlp_ratio: float = 4.0
    stl_depth: int = 1
    leaky_slope: float = 0.01
    rel_pos_bias: bool = True

    def __post_init__(self):
        if min(self.bands, self.features, self.latent_channels) < 1:
            raise ValueError("bands, features and latent_channels must be >= 1")
        if self.stages < 0:
            raise ValueError("stages must be >= 0")
        if self.stages and (self.window < 2 or self.window % 2):
            raise ValueError("window must be an even integer >= 2")
        if self.stages and self.features % self.heads:
            raise ValueError(f"features ({self.features}) must be divisible by heads ({self.heads})")
        if self.stl_depth < 1:
            raise ValueError("stl_depth must be >= 1")

    @property
    def block(self) -> nn.BlockSpec:
        return nn.BlockSpec(self.window, self.heads, self.mlp_ratio, self.stl_depth, self.rel_pos_bias)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HycassConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# Compression-ratio arithmetic


class CompressionRatio(NamedTuple):
    cr: float
    cr_spec: float
    cr_spat: float
    exact: Fraction


def achieved_cr(cfg: HycassConfig) -> CompressionRatio:
    """Joint CR = (C / Gamma) * 4**S, with its spectral and spatial factors."""
    spat = 4 ** cfg.stages
    exact = Fraction(cfg.bands * spat, cfg.latent_channels)
    return CompressionRatio(float(exact), cfg.bands / cfg.latent_channels, float(spat), exact)


def gamma_for_target_cr(bands: int, stages: int, target: float) -> int:
    """Latent channel count whose joint CR is closest to ``target``.

    ``round(C * 4**S / target)`` with ties away from zero, at least 1.
    """
    if not target > 0:
        raise ValueError("target CR must be positive")
    ratio = Fraction(bands * 4 ** stages) / Fraction(target)
    return max(1, math.floor(ratio + Fraction(1, 2)))


# ---------------------------------------------------------------------------
# Shapes


def check_spatial_dims(cfg: HycassConfig, height: int, width: int) -> None:
    """Raise unless every stage can downsample and window its input."""
    f = 2 ** cfg.stages
    if height % f or width % f:
        raise DivisibilityError(f"{height}x{width} is not divisible by 2**S = {f}")
    for k in range(cfg.stages):
        h, w = height >> k, width >> k
        if h % cfg.window or w % cfg.window:
            raise DivisibilityError(
                f"stage {k} runs attention at {h}x{w}, not divisible by window {cfg.window}"
            )


def valid_spatial_size(cfg: HycassConfig, n: int) -> int:
    """Largest size <= n accepted by :func:`check_spatial_dims`."""
    step = 2 ** cfg.stages
    if cfg.stages:
        step = math.lcm(step, cfg.window * 2 ** (cfg.stages - 1))
    size = (n // step) * step
    if size < 1:
        raise DivisibilityError(f"no valid spatial size <= {n} for S={cfg.stages}, window={cfg.window}")
    return size


def latent_shape(cfg: HycassConfig, height: int, width: int) -> tuple[int, int, int]:
    check_spatial_dims(cfg, height, width)
    f = 2 ** cfg.stages
    return height // f, width // f, cfg.latent_channels


# ---------------------------------------------------------------------------
# Parameters


def param_shapes(cfg: HycassConfig) -> dict[str, tuple[int, ...]]:
    C, N, G = cfg.bands, cfg.features, cfg.latent_channels
    rstb = nn.rstb_param_shapes(N, cfg.block) if cfg.stages else {}
    shapes = {"spectral_encoder.weight": (N, C, 1, 1), "spectral_encoder.bias": (N,)}
    for i in range(cfg.stages):
        shapes.update(F.prefixed(rstb, f"spatial_encoder.{i}.rstb"))
        shapes[f"spatial_encoder.{i}.down.weight"] = (N, N, 3, 3)
        shapes[f"spatial_encoder.{i}.down.bias"] = (N,)
    shapes.update({
        "cr_encoder.weight": (G, N, 1, 1), "cr_encoder.bias": (G,),
        "cr_decoder.weight": (N, G, 1, 1), "cr_decoder.bias": (N,),
    })
    for i in range(cfg.stages):
        shapes[f"spatial_decoder.{i}.up.weight"] = (N, N, 3, 3)
        shapes[f"spatial_decoder.{i}.up.bias"] = (N,)
        shapes.update(F.prefixed(rstb, f"spatial_decoder.{i}.rstb"))
    shapes.update({"spectral_decoder.weight": (C, N, 1, 1), "spectral_decoder.bias": (C,)})
    return shapes


def tensor_digest(tensors: dict[str, np.ndarray]) -> bytes:
    """16-byte BLAKE2b digest over names, shapes, dtypes and raw bytes."""
    h = hashlib.blake2b(digest_size=16)
    for name in sorted(tensors):
        a = np.ascontiguousarray(tensors[name])
        h.update(name.encode())
        h.update(json.dumps([list(a.shape), a.dtype.str]).encode())
        h.update(a.tobytes())
    return h.digest()


@dataclass(eq=False)
class ModelParams:
    config: HycassConfig
    tensors: dict[str, np.ndarray]

    def __post_init__(self):
        expected = param_shapes(self.config)
        if set(expected) != set(self.tensors):
            missing = sorted(set(expected) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(expected))
            raise ShapeError(f"parameter set mismatch; missing {missing[:3]}, unexpected {extra[:3]}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(f"{name} has shape {self.tensors[name].shape}, expected {shape}")

    @property
    def content_hash(self) -> bytes:
        # recomputed on every access so mutations are always reflected
        return tensor_digest(self.tensors)

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.tensors.values())).dtype

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def module(self, name: str) -> dict[str, np.ndarray]:
        """Tensors of one of the six modules, keyed by their full path."""
        if name not in MODULES:
            raise KeyError(name)
        return {k: v for k, v in self.tensors.items() if k.split(".", 1)[0] == name}

    def num_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())


def _trunc_normal(rng, shape, std=0.02):
    return stats.truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=rng)


def init_params(cfg: HycassConfig, seed: int = 0, dtype=np.float64) -> ModelParams:
    """Draw initial weights deterministically from ``seed``.

    Conv kernels: Kaiming-uniform with LeakyReLU gain over the fan-in.
    Attention and MLP projections: normal(0, 0.02) truncated at 2 sigma.
    Layer-norm scales 1; biases and relative-position tables 0.
    """
    rng = np.random.default_rng(seed)
    gain = math.sqrt(2.0 / (1.0 + cfg.leaky_slope ** 2))
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "weight" and len(shape) == 4:
            bound = gain * math.sqrt(3.0 / (shape[1] * shape[2] * shape[3]))
            t = rng.uniform(-bound, bound, size=shape)
        elif leaf == "weight" and ".norm" in f".{name}":
            t = np.ones(shape)
        elif leaf == "weight":
            t = _trunc_normal(rng, shape)
        else:
            t = np.zeros(shape)
        tensors[name] = np.ascontiguousarray(t, dtype=dtype)
    return ModelParams(cfg, tensors)


def kaiming_std(cfg: HycassConfig, fan_in: int) -> float:
    """Standard deviation targeted by the conv-kernel initializer."""
    return math.sqrt(2.0 / (1.0 + cfg.leaky_slope ** 2)) / math.sqrt(fan_in)


# ---------------------------------------------------------------------------
# Forward / backward


def _encoder_ops(cfg):
    ops = [("conv", "spectral_encoder", 1), ("lrelu",)]
    for i in range(cfg.stages):
        ops += [("rstb", f"spatial_encoder.{i}.rstb"), ("conv", f"spatial_encoder.{i}.down", 2), ("lrelu",)]
    return ops + [("conv", "cr_encoder", 1), ("sigmoid",)]


def _decoder_ops(cfg):
    ops = [("conv", "cr_decoder", 1), ("lrelu",)]
    for i in range(cfg.stages):
        ops += [("tconv", f"spatial_decoder.{i}.up", 2), ("lrelu",), ("rstb", f"spatial_decoder.{i}.rstb")]
    return ops + [("conv", "spectral_decoder", 1), ("sigmoid",)]


def _module_ops(cfg, module):
    enc, dec = _encoder_ops(cfg), _decoder_ops(cfg)
    s = len(enc) - 2
    return {
        "spectral_encoder": enc[:2],
        "spatial_encoder": enc[2:s],
        "cr_encoder": enc[s:],
        "cr_decoder": dec[:2],
        "spatial_decoder": dec[2:-2],
        "spectral_decoder": dec[-2:],
    }[module]


def _run(ops, params: ModelParams, x):
    cfg = params.config
    caches = []
    for op in ops:
        kind = op[0]
        if kind in ("conv", "tconv"):
            x, c = F.conv2d_forward(x, F.sub(params.tensors, op[1]), op[2], kind == "tconv")
        elif kind == "lrelu":
            x, c = F.leaky_relu_forward(x, cfg.leaky_slope)
        elif kind == "sigmoid":
            x, c = F.sigmoid_forward(x)
        else:
            x, c = nn.rstb_forward(x, F.sub(params.tensors, op[1]), cfg.block)
        caches.append(c)
    return x, caches


def _unrun(ops, caches, dy):
    grads = {}
    for op, c in zip(reversed(ops), reversed(caches)):
        kind = op[0]
        if kind in ("conv", "tconv"):
            dy, g = F.conv2d_backward(dy, c)
            grads.update(F.prefixed(g, op[1]))
        elif kind == "lrelu":
            dy = F.leaky_relu_backward(dy, c)
        elif kind == "sigmoid":
            dy = F.sigmoid_backward(dy, c)
        else:
            dy, g = nn.rstb_backward(dy, c)
            grads.update(F.prefixed(g, op[1]))
    return dy, grads


def _as_batch(x, channels: int, what: str):
    x = np.asarray(x)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise ShapeError(f"{what} must be (H, W, C) or (B, H, W, C), got shape {x.shape}")
    if x.shape[-1] != channels:
        raise ShapeError(f"{what} must have {channels} channels, got {x.shape[-1]}")
    return x, single


class Trace(NamedTuple):
    """Everything the backward pass needs from one autoencoder forward."""

    latent: np.ndarray
    reconstruction: np.ndarray
    enc: list
    dec: list


def forward(params: ModelParams, x) -> Trace:
    """Run encoder and decoder on a ``(B, H, W, C)`` unit-range batch."""
    cfg = params.config
    x, _ = _as_batch(x, cfg.bands, "input")
    check_spatial_dims(cfg, x.shape[1], x.shape[2])
    x = x.astype(params.dtype, copy=False)
    y, enc = _run(_encoder_ops(cfg), params, x)
    xh, dec = _run(_decoder_ops(cfg), params, y)
    return Trace(y, xh, enc, dec)


def backward(params: ModelParams, trace: Trace, d_recon, d_latent=None):
    """Gradients of a scalar loss given ``dL/d reconstruction``.

    Returns ``(dL/dx, {path: dL/dparam})``.
    """
    cfg = params.config
    dy, g_dec = _unrun(_decoder_ops(cfg), trace.dec, d_recon)
    if d_latent is not None:
        dy = dy + d_latent
    dx, g_enc = _unrun(_encoder_ops(cfg), trace.enc, dy)
    return dx, {**g_enc, **g_dec}


def _trace_pattern(cfg: HycassConfig, tr: Trace) -> np.ndarray:
    masks = []
    for ops, caches in ((_encoder_ops(cfg), tr.enc), (_decoder_ops(cfg), tr.dec)):
        masks += [c[0].ravel() for op, c in zip(ops, caches) if op[0] == "lrelu"]
    return np.concatenate(masks)


def activation_pattern(params: ModelParams, x) -> np.ndarray:
    """On/off state of every LeakyReLU unit for input ``x``."""
    return _trace_pattern(params.config, forward(params, x))


TINY_CONFIG = HycassConfig(bands=6, latent_channels=3, stages=1, features=8, window=4, heads=2)


def gradient_check(cfg: HycassConfig = TINY_CONFIG, size: int = 16, seed: int = 0, *,
                   tolerance: float = 1e-4, step: float = 1e-5,
                   break_gradient: bool = False) -> nn.GradCheckReport:
    """Finite-difference check of the autoencoder MSE loss ``mean((f(x) - x)**2)``.

    Runs in float64 over every parameter tensor and the input. Weights start
    from :func:`init_params` plus a small random jitter, so zero-initialized
    biases and position tables are probed away from their special point.
    ``break_gradient`` corrupts one analytic gradient to exercise the
    failure path.
    """
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed, np.float64)
    for a in params.tensors.values():
        a += rng.normal(0.0, 0.05, a.shape)
    x = rng.uniform(0.05, 0.95, (1, size, size, cfg.bands))
    n = x.size

    tr = forward(params, x)
    diff = tr.reconstruction - x
    dx, grads = backward(params, tr, diff * (2.0 / n))
    dx = dx - diff * (2.0 / n)  # the target is x itself
    if break_gradient:
        grads["spectral_encoder.weight"] = grads["spectral_encoder.weight"] * 1.1

    def loss():
        t = forward(params, x)
        return float(np.mean((t.reconstruction - x) ** 2)), _trace_pattern(cfg, t)

    tensors = {"input": x, **params.tensors}
    analytic = {"input": dx, **grads}
    return nn.grad_check(loss, tensors, analytic, step=step, tolerance=tolerance)


# ---------------------------------------------------------------------------
# Module-level API on single feature maps or batches


def _apply_module(params: ModelParams, module: str, x, in_ch: int):
    x, single = _as_batch(x, in_ch, module)
    y, _ = _run(_module_ops(params.config, module), params, x.astype(params.dtype, copy=False))
    return y[0] if single else y


def spectral_encode(x, params: ModelParams):
    """Pixelwise ``LeakyReLU(Conv1x1_{C->N}(x))``."""
    return _apply_module(params, "spectral_encoder", x, params.config.bands)


def spatial_encode(x, params: ModelParams):
    """``S`` stages of ``LeakyReLU(Conv3x3 stride 2(RSTB(x)))``; identity for S=0."""
    arr = np.asarray(x)
    check_spatial_dims(params.config, arr.shape[-3], arr.shape[-2])
    return _apply_module(params, "spatial_encoder", x, params.config.features)


def cr_adapt_encode(x, params: ModelParams):
    """``Sigmoid(Conv1x1_{N->Gamma}(x))``."""
    return _apply_module(params, "cr_encoder", x, params.config.features)


def cr_adapt_decode(y, params: ModelParams):
    """``LeakyReLU(Conv1x1_{Gamma->N}(y))``."""
    return _apply_module(params, "cr_decoder", y, params.config.latent_channels)


def spatial_decode(x, params: ModelParams):
    """``S`` stages of ``RSTB(LeakyReLU(TConv3x3 stride 2(x)))``."""
    arr = np.asarray(x)
    f = 2 ** params.config.stages
    check_spatial_dims(params.config, arr.shape[-3] * f, arr.shape[-2] * f)
    return _apply_module(params, "spatial_decoder", x, params.config.features)


def spectral_decode(x, params: ModelParams):
    """Pixelwise ``Sigmoid(Conv1x1_{N->C}(x))``."""
    return _apply_module(params, "spectral_decoder", x, params.config.features)


@dataclass(eq=False)
class LatentRepresentation:
    """Encoder output of shape ``(Sigma, Omega, Gamma)`` with values in [0, 1]."""

    values: np.ndarray
    config: HycassConfig

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or v.shape[-1] != self.config.latent_channels:
            raise ShapeError(f"latent must be (Sigma, Omega, {self.config.latent_channels}), got {v.shape}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def encode(x, params: ModelParams) -> LatentRepresentation:
    """Encode a unit-normalized cube (or ``(H, W, C)`` array) to its latent."""
    if isinstance(x, HsiCube):
        if x.norm_state != UNIT:
            raise ValueError("encode expects a unit-normalized cube")
        x = x.values
    x, single = _as_batch(x, params.config.bands, "input")
    if not single:
        raise ShapeError("encode takes one cube; use forward() for batches")
    check_spatial_dims(params.config, x.shape[1], x.shape[2])
    y, _ = _run(_encoder_ops(params.config), params, x.astype(params.dtype, copy=False))
    return LatentRepresentation(y[0], params.config)


def decode(y, params: ModelParams, bit_depth: int = 32) -> HsiCube:
    """Reconstruct a unit-range cube from a latent."""
    if isinstance(y, LatentRepresentation):
        y = y.values
    y, single = _as_batch(y, params.config.latent_channels, "latent")
    if not single:
        raise ShapeError("decode takes one latent")
    f = 2 ** params.config.stages
    check_spatial_dims(params.config, y.shape[1] * f, y.shape[2] * f)
    xh, _ = _run(_decoder_ops(params.config), params, y.astype(params.dtype, copy=False))
    return HsiCube(xh[0], bit_depth=bit_depth, norm_state=UNIT)


def reconstruct(x, params: ModelParams) -> np.ndarray:
    """``decode(encode(x))`` on a ``(H, W, C)`` or batched unit array."""
    arr, single = _as_batch(x, params.config.bands, "input")
    out = forward(params, arr).reconstruction
    return out[0] if single else out
