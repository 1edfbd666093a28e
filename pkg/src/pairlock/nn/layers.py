"""Hand-written forward/backward passes for every layer CarrierNet uses.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes the upstream gradient and that cache. Feature maps are ``(C, H, W)``
float64 arrays; there is no batch axis since training runs at batch size 1.
"""

from __future__ import annotations

import math

import numpy as np

LOG_FLOOR = 1e-300


def _out_extent(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv2d_forward(x, w, b, stride=1, pad=0):
    """Cross-correlation with zero padding.

    Inputs:
    - x: (C_in, H, W)
    - w: (C_out, C_in, kh, kw)
    - b: (C_out,)

    Returns ``(out, cache)`` with out of shape (C_out, H', W').
    """
    c_in, h, wd = x.shape
    c_out, c_in_w, kh, kw = w.shape
    if c_in != c_in_w:
        raise ValueError(f"conv2d: input has {c_in} channels, weight expects {c_in_w}")
    if kh < 1 or kw < 1 or stride < 1:
        raise ValueError("conv2d: kernel and stride must be >= 1")
    h_out = _out_extent(h, kh, stride, pad)
    w_out = _out_extent(wd, kw, stride, pad)
    if h_out < 1 or w_out < 1:
        raise ValueError(
            f"conv2d: non-positive output {h_out}x{w_out} for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    out = np.zeros((c_out, h_out * w_out), dtype=np.result_type(x, w))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i : i + stride * h_out : stride, j : j + stride * w_out : stride]
            out += w[:, :, i, j] @ patch.reshape(c_in, -1)
    out += b[:, None]
    return out.reshape(c_out, h_out, w_out), (x.shape, xp, w, stride, pad)


def conv2d_backward(dout, cache):
    """Returns ``(dx, dw, db)``."""
    x_shape, xp, w, stride, pad = cache
    c_out, c_in, kh, kw = w.shape
    _, h_out, w_out = dout.shape
    g = dout.reshape(c_out, -1)
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    for i in range(kh):
        for j in range(kw):
            sl = (slice(None), slice(i, i + stride * h_out, stride), slice(j, j + stride * w_out, stride))
            patch = xp[sl].reshape(c_in, -1)
            dw[:, :, i, j] = g @ patch.T
            dxp[sl] += (w[:, :, i, j].T @ g).reshape(c_in, h_out, w_out)
    db = g.sum(axis=1)
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad]
    return dxp.reshape(x_shape), dw, db


def transposed_conv2d_forward(x, w, b, stride=1):
    """Adjoint of :func:`conv2d_forward` without padding.

    ``w`` has shape (C_in, C_out, kh, kw), matching the conv weight whose
    input gradient this computes. Output extent is ``(H - 1) * stride + kh``.
    """
    c_in, h, wd = x.shape
    c_in_w, c_out, kh, kw = w.shape
    if c_in != c_in_w:
        raise ValueError(f"transposed_conv2d: input has {c_in} channels, weight expects {c_in_w}")
    if stride < 1:
        raise ValueError("transposed_conv2d: stride must be >= 1")
    h_out = (h - 1) * stride + kh
    w_out = (wd - 1) * stride + kw
    out = np.zeros((c_out, h_out, w_out), dtype=np.result_type(x, w))
    xf = x.reshape(c_in, -1)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + stride * h : stride, j : j + stride * wd : stride] += (
                w[:, :, i, j].T @ xf
            ).reshape(c_out, h, wd)
    out += b[:, None, None]
    return out, (x, w, stride)


def transposed_conv2d_backward(dout, cache):
    x, w, stride = cache
    c_in, h, wd = x.shape
    _, c_out, kh, kw = w.shape
    xf = x.reshape(c_in, -1)
    dx = np.zeros((c_in, h * wd))
    dw = np.empty_like(w)
    for i in range(kh):
        for j in range(kw):
            g = dout[:, i : i + stride * h : stride, j : j + stride * wd : stride].reshape(c_out, -1)
            dx += w[:, :, i, j] @ g
            dw[:, :, i, j] = xf @ g.T
    db = dout.sum(axis=(1, 2))
    return dx.reshape(x.shape), dw, db


def max_pool2d_forward(x, k=2, stride=None):
    stride = k if stride is None else stride
    c, h, wd = x.shape
    h_out = (h - k) // stride + 1
    w_out = (wd - k) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ValueError(f"max_pool2d: window {k} does not fit input {h}x{wd}")
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride][:, :h_out, :w_out].reshape(c, h_out, w_out, k * k)
    # argmax picks the first maximal element, which is where backward routes the gradient
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, k, stride)


def max_pool2d_backward(dout, cache):
    x_shape, arg, k, stride = cache
    c, h_out, w_out = dout.shape
    dx = np.zeros(x_shape)
    di, dj = np.divmod(arg, k)
    rows = np.arange(h_out)[None, :, None] * stride + di
    cols = np.arange(w_out)[None, None, :] * stride + dj
    chans = np.broadcast_to(np.arange(c)[:, None, None], arg.shape)
    np.add.at(dx, (chans, rows, cols), dout)
    return dx


def _pool_windows(n_in: int, n_out: int) -> list[tuple[int, int]]:
    return [
        (math.floor(i * n_in / n_out), math.ceil((i + 1) * n_in / n_out))
        for i in range(n_out)
    ]


def pooling_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) averaging operator of adaptive average pooling along one axis."""
    m = np.zeros((n_out, n_in))
    for i, (lo, hi) in enumerate(_pool_windows(n_in, n_out)):
        m[i, lo:hi] = 1.0 / (hi - lo)
    return m


def adaptive_avg_pool2d_forward(x, out_h, out_w):
    """Mean over windows ``[floor(i*H/out), ceil((i+1)*H/out))`` on each axis.

    The windows are separable, so the pool is ``Ph @ x @ Pw.T`` per channel.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("adaptive_avg_pool2d: output dims must be >= 1")
    _, h, wd = x.shape
    ph = pooling_matrix(h, out_h)
    pw = pooling_matrix(wd, out_w)
    out = np.einsum("ih,chw,jw->cij", ph, x, pw, optimize=True)
    return out, (ph, pw)


def adaptive_avg_pool2d_backward(dout, cache):
    ph, pw = cache
    return np.einsum("ih,cij,jw->chw", ph, dout, pw, optimize=True)


def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) linear interpolation operator with half-pixel centers.

    Output sample ``d`` reads source position ``(d + 0.5) * n_in / n_out - 0.5``,
    clamped to the valid range. Rows sum to exactly one term pair, so
    constants are preserved.
    """
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for d in range(n_out):
        src = min(max((d + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(math.floor(src))
        frac = src - lo
        if frac == 0.0 or lo + 1 >= n_in:
            m[d, lo] = 1.0
        else:
            m[d, lo] = 1.0 - frac
            m[d, lo + 1] = frac
    return m


def bilinear_resize_forward(x, out_h, out_w):
    """Bilinear resize of a (C, H, W) map; linear, so backward is the transpose."""
    _, h, wd = x.shape
    if (h, wd) == (out_h, out_w):
        return x.copy(), None
    rh = interpolation_matrix(h, out_h)
    rw = interpolation_matrix(wd, out_w)
    out = np.einsum("ih,chw,jw->cij", rh, x, rw, optimize=True)
    return out, (rh, rw)


def bilinear_resize_backward(dout, cache):
    if cache is None:
        return dout.copy()
    rh, rw = cache
    return np.einsum("ih,cij,jw->chw", rh, dout, rw, optimize=True)


def upsample_nearest_forward(x, factor=2):
    return x.repeat(factor, axis=1).repeat(factor, axis=2), factor


def upsample_nearest_backward(dout, factor):
    c, h, w = dout.shape
    return dout.reshape(c, h // factor, factor, w // factor, factor).sum(axis=(2, 4))


def fc_forward(x, w, b):
    """``w @ x + b`` for a flat input vector; w has shape (M, N)."""
    if x.ndim != 1 or w.shape[1] != x.shape[0]:
        raise ValueError(f"fully_connected: weight {w.shape} incompatible with input {x.shape}")
    return w @ x + b, (x, w)


def fc_backward(dout, cache):
    x, w = cache
    return w.T @ dout, np.outer(dout, x), dout.copy()


def relu_forward(x):
    return np.maximum(x, 0.0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x):
    out = sigmoid(x)
    return out, out


def sigmoid_backward(dout, cache):
    return dout * cache * (1.0 - cache)


def activation_forward(x, kind):
    if kind == "relu":
        return relu_forward(x)
    if kind == "sigmoid":
        return sigmoid_forward(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(dout, cache, kind):
    if kind == "relu":
        return relu_backward(dout, cache)
    if kind == "sigmoid":
        return sigmoid_backward(dout, cache)
    raise ValueError(f"unknown activation {kind!r}")


def dropout_forward(x, rate, training, rng):
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)``.

    At inference, or with ``rate == 0``, this is the identity and the cache
    is ``None``.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache


def softmax(logits):
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_cross_entropy(logits, target):
    """Negative log-likelihood of a one-hot target under softmax(logits).

    Returns ``(loss, probs, dlogits)`` where ``dlogits = probs - target``.
    """
    probs = softmax(logits)
    loss = float(-np.sum(target * np.log(np.maximum(probs, LOG_FLOOR))))
    return loss, probs, probs - target


def frobenius_loss(pred, target):
    """``||target - pred||_F`` over all entries and its gradient w.r.t. ``pred``.

    The norm is not differentiable at zero; the gradient there is defined as 0.
    """
    if pred.shape != target.shape:
        raise ValueError(f"frobenius_loss: shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.sqrt(np.sum(diff * diff)))
    if loss == 0.0:
        return 0.0, np.zeros_like(pred)
    return loss, diff / loss
