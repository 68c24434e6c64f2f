"""Dense tensor primitives: bilinear sampling, linear/conv layers, softmax,
and the finite-difference gradient checker used to validate every analytic
backward pass in the package.

Everything is float64.  Batched linear algebra deliberately avoids BLAS
matmul (broadcast-multiply plus a last-axis sum instead), so results for a
row are identical whether it is evaluated alone or inside a batch.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class LinearParams:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weight, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ValueError(f"inconsistent linear shapes {w.shape} / {b.shape}")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self):
        return self.weight.shape[0]

    @property
    def in_dim(self):
        return self.weight.shape[1]


@dataclass(frozen=True)
class ConvParams:
    kernel: np.ndarray  # (c_out, c_in, 3, 3)
    bias: np.ndarray    # (c_out,)

    def __post_init__(self):
        k = np.ascontiguousarray(self.kernel, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if k.ndim != 4 or k.shape[2:] != (3, 3):
            raise ValueError(f"conv kernel must be (c_out, c_in, 3, 3), got {k.shape}")
        if b.shape != (k.shape[0],):
            raise ValueError("conv bias length must equal c_out")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)


def init_linear(rng, out_dim, in_dim, zero=False):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, or exact zeros."""
    if zero:
        return LinearParams(np.zeros((out_dim, in_dim)), np.zeros(out_dim))
    bound = 1.0 / np.sqrt(max(in_dim, 1))
    return LinearParams(
        rng.uniform(-bound, bound, size=(out_dim, in_dim)),
        rng.uniform(-bound, bound, size=out_dim),
    )


def init_conv(rng, c_out, c_in):
    bound = 1.0 / np.sqrt(c_in * 9)
    return ConvParams(
        rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3)),
        rng.uniform(-bound, bound, size=c_out),
    )


def bilinear_sample(feature, x, y):
    """Sample a (C, H, W) map at continuous pixel (x, y); zero padding outside.

    Pixel (col, row) centers sit at continuous coordinates (col, row); x runs
    along W, y along H.
    """
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 3:
        raise ValueError(f"feature must have rank 3, got rank {feature.ndim}")
    feature = np.ascontiguousarray(feature)
    return kernels.sample_many(feature, np.array([x], dtype=np.float64),
                               np.array([y], dtype=np.float64))[0]


def bilinear_sample_backward(feature, x, y, grad_out):
    """Analytic partials of bilinear_sample w.r.t. feature entries and (x, y).

    At integer coordinates this is the one-sided subgradient from the cell
    [floor(x), floor(x)+1] (tie-break toward +).
    """
    feature = np.asarray(feature, dtype=np.float64)
    if feature.ndim != 3:
        raise ValueError(f"feature must have rank 3, got rank {feature.ndim}")
    feature = np.ascontiguousarray(feature)
    grad_out = np.asarray(grad_out, dtype=np.float64).reshape(1, feature.shape[0])
    gf, gx, gy = kernels.sample_backward_many(
        feature, np.array([x], dtype=np.float64), np.array([y], dtype=np.float64), grad_out)
    return gf, float(gx[0]), float(gy[0])


def linear_apply(params, vec):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (params.in_dim,):
        raise ValueError(f"expected input of length {params.in_dim}, got {vec.shape}")
    return linear_apply_batch(params, vec)


def linear_apply_batch(params, x):
    """Apply a LinearParams map over the last axis of ``x``.

    Reduction runs over the last axis only, so per-row results do not depend
    on the batch shape (determinism contract).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"expected last axis {params.in_dim}, got {x.shape}")
    return (x[..., None, :] * params.weight).sum(axis=-1) + params.bias


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def conv2d(inp, params):
    """3x3 cross-correlation, stride 1, zero padding 1; spatial shape kept."""
    inp = np.ascontiguousarray(inp, dtype=np.float64)
    if inp.ndim != 3:
        raise ValueError(f"conv input must have rank 3, got rank {inp.ndim}")
    if inp.shape[0] != params.kernel.shape[1]:
        raise ValueError(
            f"channel mismatch: input has {inp.shape[0]}, kernel expects {params.kernel.shape[1]}")
    return kernels.conv2d_3x3(inp, params.kernel, params.bias)


def concat_channels(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[1:] != b.shape[1:]:
        raise ValueError(f"spatial mismatch: {a.shape[1:]} vs {b.shape[1:]}")
    return np.concatenate([a, b], axis=0)


def grad_check(f, theta, eps):
    """Max relative error between analytic and central-difference gradients.

    ``f(theta)`` must return ``(value, grad)`` with ``grad`` the analytic
    gradient at ``theta``.  Error per coordinate is
    |analytic - central| / max(1, |central|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    value, grad = f(theta)
    if not np.isfinite(value):
        raise ValueError("objective is not finite at theta")
    grad = np.asarray(grad, dtype=np.float64)
    worst = 0.0
    for i in range(theta.size):
        tp = theta.copy()
        tp.flat[i] += eps
        tm = theta.copy()
        tm.flat[i] -= eps
        fp, _ = f(tp)
        fm, _ = f(tm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError("objective is not finite near theta")
        central = (fp - fm) / (2.0 * eps)
        err = abs(grad.flat[i] - central) / max(1.0, abs(central))
        worst = max(worst, err)
    return worst
