"""Windowed multi-head self-attention with optional cyclic shift."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import DivisibilityError, ShapeError

MASK_VALUE = -1e9


def window_partition(x, window: int, shift: int = 0):
    """Cyclically shift ``x`` by ``(-shift, -shift)`` and tile it.

    Args:
        x: ``(B, H, W, C)`` feature map.

    Returns:
        ``(B * nH * nW, window**2, C)`` token windows in row-major window
        order.
    """
    B, H, W, C = x.shape
    if H % window or W % window:
        raise DivisibilityError(f"dims {H}x{W} not divisible by window {window}")
    if shift:
        x = np.roll(x, (-shift, -shift), axis=(1, 2))
    x = x.reshape(B, H // window, window, W // window, window, C)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(-1, window * window, C)


def window_reverse(windows, window: int, height: int, width: int, shift: int = 0):
    """Exact inverse of :func:`window_partition`."""
    C = windows.shape[-1]
    nh, nw = height // window, width // window
    x = windows.reshape(-1, nh, nw, window, window, C).transpose(0, 1, 3, 2, 4, 5)
    x = x.reshape(-1, height, width, C)
    if shift:
        x = np.roll(x, (shift, shift), axis=(1, 2))
    return x


@lru_cache(maxsize=None)
def relative_position_index(window: int) -> np.ndarray:
    """``(w^2, w^2)`` indices into the ``(2w - 1)^2`` bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + (window - 1)
    idx = rel[0] * (2 * window - 1) + rel[1]
    idx.setflags(write=False)
    return idx


@lru_cache(maxsize=None)
def shift_region_labels(height: int, width: int, window: int, shift: int) -> np.ndarray:
    """Region id of every token, laid out as windows ``(nW, w^2)``.

    Labels are assigned in the shifted frame: the last ``shift`` rows and
    columns hold wrapped-around content and form their own regions.
    """
    labels = np.zeros((1, height, width, 1), dtype=np.int64)
    bounds_h = (slice(0, height - window), slice(height - window, height - shift), slice(height - shift, height))
    bounds_w = (slice(0, width - window), slice(width - window, width - shift), slice(width - shift, width))
    n = 0
    for sh in bounds_h:
        for sw in bounds_w:
            labels[:, sh, sw, :] = n
            n += 1
    return window_partition(labels, window)[..., 0]


@lru_cache(maxsize=None)
def shift_attention_mask(height: int, width: int, window: int, shift: int) -> np.ndarray:
    """Additive ``(nW, w^2, w^2)`` mask: 0 within a region, -1e9 across."""
    lab = shift_region_labels(height, width, window, shift)
    mask = np.where(lab[:, :, None] == lab[:, None, :], 0.0, MASK_VALUE)
    mask.setflags(write=False)
    return mask


def _softmax_(z):
    """Softmax over the last axis, overwriting ``z``."""
    z -= z.max(axis=-1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=-1, keepdims=True)
    return z


def window_attention_forward(x, p, heads: int, window: int, shift: int = 0, rel_bias: bool = True):
    """Multi-head attention inside ``window x window`` tiles of ``x``.

    ``p`` holds ``qkv.weight (3C, C)``, ``qkv.bias``, ``proj.weight (C, C)``,
    ``proj.bias`` and, when ``rel_bias`` is set, ``rel_bias`` of shape
    ``((2w - 1)^2, heads)``. With ``shift > 0`` the grid is rolled by
    ``-shift`` first and tokens from different pre-shift regions are masked
    from each other.
    """
    B, H, W, C = x.shape
    if C % heads:
        raise ShapeError(f"channels {C} not divisible by heads {heads}")
    if shift and not 0 < shift < window:
        raise ValueError(f"shift must lie in (0, {window}), got {shift}")
    d = C // heads
    T = window * window
    xw = window_partition(x, window, shift)
    nb = xw.shape[0]
    qkv = xw @ p["qkv.weight"].T + p["qkv.bias"]
    qkv = qkv.reshape(nb, T, 3, heads, d).transpose(2, 0, 3, 1, 4)
    scale = d ** -0.5
    qs, k, v = qkv[0] * scale, qkv[1], qkv[2]
    logits = qs @ k.swapaxes(-1, -2)
    if rel_bias:
        idx = relative_position_index(window)
        logits += p["rel_bias"][idx].transpose(2, 0, 1)
    if shift:
        mask = shift_attention_mask(H, W, window, shift).astype(logits.dtype, copy=False)
        nw = mask.shape[0]
        logits.reshape(B, nw, heads, T, T)[...] += mask[None, :, None]
    attn = _softmax_(logits)
    o = (attn @ v).transpose(0, 2, 1, 3).reshape(nb, T, C)
    out = o @ p["proj.weight"].T + p["proj.bias"]
    y = window_reverse(out, window, H, W, shift)
    cache = (x.shape, xw, qs, k, v, attn, o, p, heads, window, shift, rel_bias, scale)
    return y, cache


def window_attention_backward(dy, cache):
    shape, xw, qs, k, v, attn, o, p, heads, window, shift, rel_bias, scale = cache
    B, H, W, C = shape
    nb, T, _ = xw.shape
    d = C // heads

    dout = window_partition(dy, window, shift)
    dout2 = dout.reshape(-1, C)
    grads = {
        "proj.weight": dout2.T @ o.reshape(-1, C),
        "proj.bias": dout2.sum(axis=0),
    }
    do = (dout @ p["proj.weight"]).reshape(nb, T, heads, d).transpose(0, 2, 1, 3)
    dattn = do @ v.swapaxes(-1, -2)
    dv = attn.swapaxes(-1, -2) @ do
    dlogits = dattn
    dlogits -= (dattn * attn).sum(axis=-1, keepdims=True)
    dlogits *= attn
    if rel_bias:
        idx = relative_position_index(window)
        per_pair = dlogits.sum(axis=0).transpose(1, 2, 0).reshape(T * T, heads)
        table = np.zeros_like(p["rel_bias"])
        np.add.at(table, idx.ravel(), per_pair)
        grads["rel_bias"] = table
    dqs = dlogits @ k
    dk = dlogits.swapaxes(-1, -2) @ qs
    dqkv = np.stack([dqs * scale, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(nb, T, 3 * C)
    dqkv2 = dqkv.reshape(-1, 3 * C)
    grads["qkv.weight"] = dqkv2.T @ xw.reshape(-1, C)
    grads["qkv.bias"] = dqkv2.sum(axis=0)
    dxw = dqkv @ p["qkv.weight"]
    dx = window_reverse(dxw, window, H, W, shift)
    return dx, grads


def window_attention(x, p, heads: int, window: int, shift: int = 0, rel_bias: bool = True):
    return window_attention_forward(x, p, heads, window, shift, rel_bias)[0]


def attention_weights(x, p, heads: int, window: int, shift: int = 0, rel_bias: bool = True):
    """Softmax attention matrices ``(nWindows, heads, w^2, w^2)``, for inspection."""
    return window_attention_forward(x, p, heads, window, shift, rel_bias)[1][5]
