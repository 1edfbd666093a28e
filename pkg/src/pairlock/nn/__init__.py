"""Minimal float64 tensor kernel: layers with hand-written backward passes."""

import numpy as np

from .gradcheck import check_array, gradient_check, layer_gradchecks, numeric_gradient, relative_error
from .layers import (
    activation_backward,
    activation_forward,
    adaptive_avg_pool2d_backward,
    adaptive_avg_pool2d_forward,
    bilinear_resize_backward,
    bilinear_resize_forward,
    conv2d_backward,
    conv2d_forward,
    dropout_backward,
    dropout_forward,
    fc_backward,
    fc_forward,
    frobenius_loss,
    interpolation_matrix,
    max_pool2d_backward,
    max_pool2d_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    sigmoid_backward,
    sigmoid_forward,
    softmax,
    softmax_cross_entropy,
    transposed_conv2d_backward,
    transposed_conv2d_forward,
    upsample_nearest_backward,
    upsample_nearest_forward,
)
from .params import (
    CheckpointError,
    Param,
    ParamSet,
    load_tensors,
    save_tensors,
    sgd_momentum_step,
)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator used for initialization, dropout and shuffling (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))
