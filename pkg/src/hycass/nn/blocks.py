"""Swin Transformer layer (STL) and Residual Swin Transformer Block (RSTB).

An STL is two residual attention/MLP pairs, the second on a grid shifted by
half a window::

    x = x + WA(LN1(x));  x = x + MLP1(LN2(x))
    x = x + SWA(LN3(x)); x = x + MLP2(LN4(x))

An RSTB wraps ``depth`` STLs between two 1x1 convs (feature embedding and
unembedding) with an outer residual: ``x + FU(STL(FE(x)))``.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import functional as F
from .attention import window_attention_backward, window_attention_forward


@dataclass(frozen=True)
class BlockSpec:
    window: int = 8
    heads: int = 8
    mlp_ratio: float = 4.0
    depth: int = 1
    rel_bias: bool = True

    @property
    def shift(self) -> int:
        return self.window // 2

    def hidden(self, channels: int) -> int:
        return int(round(channels * self.mlp_ratio))


def mlp_forward(x, p):
    h, c1 = F.linear_forward(x, F.sub(p, "fc1"))
    a, c2 = F.gelu_forward(h)
    y, c3 = F.linear_forward(a, F.sub(p, "fc2"))
    return y, (c1, c2, c3)


def mlp_backward(dy, cache):
    c1, c2, c3 = cache
    da, g2 = F.linear_backward(dy, c3)
    dh = F.gelu_backward(da, c2)
    dx, g1 = F.linear_backward(dh, c1)
    return dx, {**F.prefixed(g1, "fc1"), **F.prefixed(g2, "fc2")}


# (norm, mixer, shifted) for the four residual sub-blocks, in order
_SUBBLOCKS = (("norm1", "wa", False), ("norm2", "mlp1", None),
              ("norm3", "swa", True), ("norm4", "mlp2", None))


def stl_forward(x, p, spec: BlockSpec):
    caches = []
    for norm, mixer, shifted in _SUBBLOCKS:
        h, cn = F.layer_norm_forward(x, F.sub(p, norm))
        if shifted is None:
            m, cm = mlp_forward(h, F.sub(p, mixer))
        else:
            m, cm = window_attention_forward(
                h, F.sub(p, mixer), spec.heads, spec.window,
                spec.shift if shifted else 0, spec.rel_bias,
            )
        x = x + m
        caches.append((cn, cm))
    return x, caches


def stl_backward(dy, caches):
    grads = {}
    dx = dy
    for (norm, mixer, shifted), (cn, cm) in zip(reversed(_SUBBLOCKS), reversed(caches)):
        if shifted is None:
            dh, gm = mlp_backward(dx, cm)
        else:
            dh, gm = window_attention_backward(dx, cm)
        dn, gn = F.layer_norm_backward(dh, cn)
        dx = dx + dn
        grads.update(F.prefixed(gm, mixer))
        grads.update(F.prefixed(gn, norm))
    return dx, grads


def stl_apply(x, p, spec: BlockSpec = BlockSpec()):
    return stl_forward(x, p, spec)[0]


def rstb_forward(x, p, spec: BlockSpec):
    h, c_fe = F.conv2d_forward(x, F.sub(p, "fe"))
    c_stl = []
    for i in range(spec.depth):
        h, c = stl_forward(h, F.sub(p, f"stl.{i}"), spec)
        c_stl.append(c)
    u, c_fu = F.conv2d_forward(h, F.sub(p, "fu"))
    return x + u, (c_fe, c_stl, c_fu)


def rstb_backward(dy, cache):
    c_fe, c_stl, c_fu = cache
    dh, grads = F.conv2d_backward(dy, c_fu)
    grads = F.prefixed(grads, "fu")
    for i in reversed(range(len(c_stl))):
        dh, g = stl_backward(dh, c_stl[i])
        grads.update(F.prefixed(g, f"stl.{i}"))
    dx, g = F.conv2d_backward(dh, c_fe)
    grads.update(F.prefixed(g, "fe"))
    return dy + dx, grads


def rstb_apply(x, p, spec: BlockSpec = BlockSpec()):
    return rstb_forward(x, p, spec)[0]


def stl_param_shapes(channels: int, spec: BlockSpec) -> dict[str, tuple[int, ...]]:
    """Names and shapes of one STL's tensors."""
    c, hid = channels, spec.hidden(channels)
    shapes = {}
    for norm, mixer, shifted in _SUBBLOCKS:
        shapes[f"{norm}.weight"] = (c,)
        shapes[f"{norm}.bias"] = (c,)
        if shifted is None:
            shapes.update({
                f"{mixer}.fc1.weight": (hid, c), f"{mixer}.fc1.bias": (hid,),
                f"{mixer}.fc2.weight": (c, hid), f"{mixer}.fc2.bias": (c,),
            })
        else:
            shapes.update({
                f"{mixer}.qkv.weight": (3 * c, c), f"{mixer}.qkv.bias": (3 * c,),
                f"{mixer}.proj.weight": (c, c), f"{mixer}.proj.bias": (c,),
            })
            if spec.rel_bias:
                shapes[f"{mixer}.rel_bias"] = ((2 * spec.window - 1) ** 2, spec.heads)
    return shapes


def rstb_param_shapes(channels: int, spec: BlockSpec) -> dict[str, tuple[int, ...]]:
    c = channels
    shapes = {"fe.weight": (c, c, 1, 1), "fe.bias": (c,)}
    for i in range(spec.depth):
        shapes.update(F.prefixed(stl_param_shapes(c, spec), f"stl.{i}"))
    shapes.update({"fu.weight": (c, c, 1, 1), "fu.bias": (c,)})
    return shapes
