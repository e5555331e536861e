"""Numpy neural-network primitives with hand-derived backward passes."""

from .attention import (
    attention_weights,
    relative_position_index,
    shift_attention_mask,
    window_attention,
    window_attention_backward,
    window_attention_forward,
    window_partition,
    window_reverse,
)
from .blocks import (
    BlockSpec,
    rstb_apply,
    rstb_backward,
    rstb_forward,
    rstb_param_shapes,
    stl_apply,
    stl_backward,
    stl_forward,
    stl_param_shapes,
)
from .functional import (
    conv2d,
    conv2d_backward,
    conv2d_forward,
    gelu_backward,
    gelu_forward,
    layer_norm,
    layer_norm_backward,
    layer_norm_forward,
    leaky_relu,
    leaky_relu_backward,
    leaky_relu_forward,
    linear_backward,
    linear_forward,
    prefixed,
    sigmoid,
    sigmoid_backward,
    sigmoid_forward,
    sub,
)
from .gradcheck import GradCheckReport, TensorCheck, check_op, grad_check
