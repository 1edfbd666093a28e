"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamSet

STEP = 1e-6
DENOM_FLOOR = 1e-8


def relative_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), DENOM_FLOOR)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = hi = old + h
        fp = f()
        flat[i] = lo = old - h
        fm = f()
        flat[i] = old
        # divide by the step actually taken after rounding x +/- h
        gflat[i] = (fp - fm) / (hi - lo)
    return grad


def check_array(f: Callable[[], float], x: np.ndarray, analytic: np.ndarray, h: float = STEP) -> float:
    """Max relative error between ``analytic`` and the numeric gradient of ``f`` at ``x``."""
    numeric = numeric_gradient(f, x, h)
    if numeric.size == 0:
        return 0.0
    return float(relative_error(analytic, numeric).max())


def gradient_check(
    forward: Callable[[ParamSet], float],
    params: ParamSet,
    h: float = STEP,
) -> dict[str, float]:
    """Compare analytic gradients already stored in ``params`` against central differences.

    ``forward`` must be deterministic and must not touch the gradient buffers.
    Returns the max relative error per parameter name.
    """
    report = {}
    for name, p in params.items():
        analytic = p.grad.copy()
        report[name] = check_array(lambda: forward(params), p.value, analytic, h)
    return report


def _probe(forward, backward, inputs, rng, h=STEP):
    """Check ``backward`` against differences of ``sum(forward(*inputs) * R)`` for a random ``R``.

    The finite differences run on long-double copies so float64 roundoff in
    the forward pass does not swamp small gradient entries.
    """
    out, cache = forward(*inputs)
    r = rng.standard_normal(np.shape(out))
    grads = backward(r, cache)
    if not isinstance(grads, tuple):
        grads = (grads,)
    ld = [np.array(x, dtype=np.longdouble) for x in inputs]
    worst = 0.0
    for x, g in zip(ld, grads):
        worst = max(worst, check_array(lambda: np.sum(forward(*ld)[0] * r), x, g, h))
    return worst


def layer_gradchecks(seed: int = 0) -> dict[str, float]:
    """Max relative error of every differentiable operator on small random inputs."""
    from . import layers as L

    rng = np.random.Generator(np.random.PCG64(seed))
    x = rng.standard_normal((3, 6, 5))
    report = {
        "conv2d": _probe(
            lambda x, w, b: L.conv2d_forward(x, w, b, 1, 1), L.conv2d_backward,
            [x, rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4)], rng,
        ),
        "conv2d_strided": _probe(
            lambda x, w, b: L.conv2d_forward(x, w, b, 2, 0), L.conv2d_backward,
            [x, rng.standard_normal((2, 3, 2, 2)), rng.standard_normal(2)], rng,
        ),
        "transposed_conv2d": _probe(
            lambda x, w, b: L.transposed_conv2d_forward(x, w, b, 2), L.transposed_conv2d_backward,
            [x, rng.standard_normal((3, 2, 2, 2)), rng.standard_normal(2)], rng,
        ),
        "max_pool2d": _probe(lambda x: L.max_pool2d_forward(x, 2, 2), L.max_pool2d_backward, [x], rng),
        "adaptive_avg_pool2d": _probe(
            lambda x: L.adaptive_avg_pool2d_forward(x, 4, 3), L.adaptive_avg_pool2d_backward, [x], rng
        ),
        "bilinear_resize": _probe(
            lambda x: L.bilinear_resize_forward(x, 9, 4), L.bilinear_resize_backward, [x], rng
        ),
        "upsample_nearest": _probe(
            lambda x: L.upsample_nearest_forward(x, 2), L.upsample_nearest_backward, [x], rng
        ),
        "fully_connected": _probe(
            L.fc_forward, L.fc_backward,
            [rng.standard_normal(7), rng.standard_normal((5, 7)), rng.standard_normal(5)], rng,
        ),
        "relu": _probe(L.relu_forward, L.relu_backward, [x], rng),
        "sigmoid": _probe(L.sigmoid_forward, L.sigmoid_backward, [x * 3.0], rng),
        # reseeding inside the forward keeps the dropout mask fixed across probes
        "dropout": _probe(
            lambda x: L.dropout_forward(x, 0.5, True, np.random.Generator(np.random.PCG64(seed + 1))),
            L.dropout_backward, [x], rng,
        ),
    }

    logits = rng.standard_normal(3)
    target = np.array([0.0, 1.0, 0.0])
    _, _, dlogits = L.softmax_cross_entropy(logits, target)
    z = np.array(logits, dtype=np.longdouble)
    report["softmax_cross_entropy"] = check_array(
        lambda: -np.sum(target * np.log(L.softmax(z))), z, dlogits
    )

    pred = rng.random((3, 4, 4))
    goal = rng.random((3, 4, 4))
    _, dpred = L.frobenius_loss(pred, goal)
    p = np.array(pred, dtype=np.longdouble)
    report["frobenius_loss"] = check_array(lambda: np.sqrt(np.sum((p - goal) ** 2)), p, dpred)
    return report
