"""Elementary differentiable ops on channels-last arrays.

Every op comes as a ``*_forward`` returning ``(y, cache)`` and a matching
``*_backward(dy, cache)`` returning the input gradient (and a dict of
parameter gradients keyed like the parameter dict). Feature maps are
``(B, H, W, C)``; token matrices are ``(..., C)``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from ..errors import DivisibilityError, ShapeError

LN_EPS = 1e-5


# ---------------------------------------------------------------------------
# Convolution


def _im2col(x, k, stride, pad, out_hw):
    B, H, W, C = x.shape
    Ho, Wo = out_hw
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((B, Ho, Wo, k, k, C), dtype=x.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, :, :, di, dj, :] = x[:, di : di + stride * (Ho - 1) + 1 : stride,
                                         dj : dj + stride * (Wo - 1) + 1 : stride, :]
    return cols


def _col2im(cols, in_hw, stride, pad):
    B, Ho, Wo, k, _, C = cols.shape
    H, W = in_hw
    out = np.zeros((B, H + 2 * pad, W + 2 * pad, C), dtype=cols.dtype)
    for di in range(k):
        for dj in range(k):
            out[:, di : di + stride * (Ho - 1) + 1 : stride,
                dj : dj + stride * (Wo - 1) + 1 : stride, :] += cols[:, :, :, di, dj, :]
    if pad:
        out = out[:, pad : pad + H, pad : pad + W, :]
    return out


def conv_output_hw(h: int, w: int, k: int, stride: int, transposed: bool = False) -> tuple[int, int]:
    if transposed:
        return h * stride, w * stride
    pad = (k - 1) // 2
    return (h + 2 * pad - k) // stride + 1, (w + 2 * pad - k) // stride + 1


def conv2d_forward(x, p, stride: int = 1, transposed: bool = False):
    """2-D convolution with "same"-style padding ``(k - 1) // 2``.

    ``p["weight"]`` has shape ``(out_ch, in_ch, k, k)``. A strided forward
    conv maps ``(H, W)`` to ``(H / s, W / s)`` and requires even dims for
    ``s = 2``; the transposed conv is its exact adjoint and maps ``(H, W)``
    to ``(s H, s W)`` for any input size.
    """
    weight, bias = p["weight"], p["bias"]
    O, I, k, k2 = weight.shape
    if k != k2 or k not in (1, 3) or stride not in (1, 2):
        raise ValueError(f"unsupported conv geometry k={k}x{k2}, stride={stride}")
    B, H, W, C = x.shape
    if C != I:
        raise ShapeError(f"conv expects {I} input channels, got {C}")
    pad = (k - 1) // 2

    if transposed:
        # y = col2im(x @ K), the adjoint of the strided conv from O to I channels
        Ho, Wo = H * stride, W * stride
        K = weight.transpose(1, 2, 3, 0).reshape(I, k * k * O)
        ycols = (x.reshape(-1, I) @ K).reshape(B, H, W, k, k, O)
        y = _col2im(ycols, (Ho, Wo), stride, pad) + bias
        return y, (x, weight, stride, True)

    if stride > 1 and (H % stride or W % stride):
        raise DivisibilityError(f"strided conv needs dims divisible by {stride}, got {H}x{W}")
    Ho, Wo = conv_output_hw(H, W, k, stride)
    Wm = weight.transpose(0, 2, 3, 1).reshape(O, k * k * I)
    if k == 1 and stride == 1:
        cols = x.reshape(-1, I)
    else:
        cols = _im2col(x, k, stride, pad, (Ho, Wo)).reshape(-1, k * k * I)
    y = (cols @ Wm.T).reshape(B, Ho, Wo, O) + bias
    return y, (x, weight, stride, False, cols)


def conv2d_backward(dy, cache):
    x, weight, stride, transposed = cache[:4]
    O, I, k, _ = weight.shape
    B, H, W, _ = x.shape
    pad = (k - 1) // 2
    db = dy.reshape(-1, O).sum(axis=0)

    if transposed:
        K = weight.transpose(1, 2, 3, 0).reshape(I, k * k * O)
        dcols = _im2col(dy, k, stride, pad, (H, W)).reshape(-1, k * k * O)
        dx = (dcols @ K.T).reshape(B, H, W, I)
        dK = x.reshape(-1, I).T @ dcols
        dw = dK.reshape(I, k, k, O).transpose(3, 0, 1, 2)
        return dx, {"weight": np.ascontiguousarray(dw), "bias": db}

    cols = cache[4]
    Ho, Wo = dy.shape[1:3]
    dy2 = dy.reshape(-1, O)
    Wm = weight.transpose(0, 2, 3, 1).reshape(O, k * k * I)
    dw = (dy2.T @ cols).reshape(O, k, k, I).transpose(0, 3, 1, 2)
    dcols = dy2 @ Wm
    if k == 1 and stride == 1:
        dx = dcols.reshape(B, H, W, I)
    else:
        dx = _col2im(dcols.reshape(B, Ho, Wo, k, k, I), (H, W), stride, pad)
    return dx, {"weight": np.ascontiguousarray(dw), "bias": db}


def conv2d(x, p, stride: int = 1, transposed: bool = False):
    return conv2d_forward(x, p, stride, transposed)[0]


# ---------------------------------------------------------------------------
# Dense layers


def linear_forward(x, p):
    """``y = x W^T + b`` over the last axis; ``W`` is ``(out, in)``."""
    y = x @ p["weight"].T + p["bias"]
    return y, (x, p["weight"])


def linear_backward(dy, cache):
    x, w = cache
    d_out = w.shape[0]
    dy2 = dy.reshape(-1, d_out)
    dw = dy2.T @ x.reshape(-1, w.shape[1])
    return dy @ w, {"weight": dw, "bias": dy2.sum(axis=0)}


# ---------------------------------------------------------------------------
# Activations


def leaky_relu_forward(x, slope: float = 0.01):
    pos = x > 0
    return np.where(pos, x, slope * x), (pos, slope)


def leaky_relu_backward(dy, cache):
    pos, slope = cache
    return np.where(pos, dy, slope * dy)


def leaky_relu(x, slope: float = 0.01):
    return leaky_relu_forward(x, slope)[0]


def sigmoid_forward(x):
    y = special.expit(x)
    return y, y


def sigmoid_backward(dy, y):
    return dy * y * (1.0 - y)


def sigmoid(x):
    return special.expit(x)


# python floats, so float32 inputs are not promoted
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu_forward(x):
    """Exact (erf) GELU."""
    cdf = 0.5 * (1.0 + special.erf(x * _INV_SQRT2))
    return x * cdf, (x, cdf)


def gelu_backward(dy, cache):
    x, cdf = cache
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dy * (cdf + x * pdf)


# ---------------------------------------------------------------------------
# Layer normalization


def layer_norm_forward(x, p, eps: float = LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    return xhat * p["weight"] + p["bias"], (xhat, inv, p["weight"])


def layer_norm_backward(dy, cache):
    xhat, inv, gamma = cache
    C = xhat.shape[-1]
    dgamma = (dy * xhat).reshape(-1, C).sum(axis=0)
    dbeta = dy.reshape(-1, C).sum(axis=0)
    dxhat = dy * gamma
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, {"weight": dgamma, "bias": dbeta}


def layer_norm(x, p, eps: float = LN_EPS):
    return layer_norm_forward(x, p, eps)[0]


# ---------------------------------------------------------------------------
# Parameter-dict helpers


def sub(params: dict, prefix: str) -> dict:
    """View of the entries under ``prefix.`` with the prefix stripped."""
    head = prefix + "."
    n = len(head)
    return {k[n:]: v for k, v in params.items() if k.startswith(head)}


def prefixed(grads: dict, prefix: str) -> dict:
    return {f"{prefix}.{k}": v for k, v in grads.items()}
