"""Pure-numpy implementations of the hot sampling/convolution kernels.

Mirrors the compiled ``_core`` extension; either backend can serve the rest
of the package.  All arithmetic is double precision and every reduction has
a fixed order, so repeated calls are bit-identical.
"""

import numpy as np

BACKEND = "python"


def _corner_values(feature, xi, yi):
    """Gather feature vectors at integer pixel (xi, yi), zero outside."""
    C, H, W = feature.shape
    inside = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
    xc = np.clip(xi, 0, W - 1)
    yc = np.clip(yi, 0, H - 1)
    vals = feature[:, yc, xc].T * inside[:, None]
    return vals, inside


def sample_many(feature, xs, ys):
    """Bilinear-sample ``feature`` (C,H,W) at continuous pixel coords.

    xs indexes the W axis, ys the H axis.  Locations outside the grid
    contribute zero (zero-padding convention).  Returns (N, C).
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = xs - x0
    wy = ys - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    v00, _ = _corner_values(feature, x0i, y0i)
    v10, _ = _corner_values(feature, x0i + 1, y0i)
    v01, _ = _corner_values(feature, x0i, y0i + 1)
    v11, _ = _corner_values(feature, x0i + 1, y0i + 1)

    w00 = (1.0 - wx) * (1.0 - wy)
    w10 = wx * (1.0 - wy)
    w01 = (1.0 - wx) * wy
    w11 = wx * wy
    # Fixed accumulation order: ((00 + 10) + 01) + 11, same as _core.
    out = w00[:, None] * v00 + w10[:, None] * v10
    out += w01[:, None] * v01
    out += w11[:, None] * v11
    return out


def sample_backward_many(feature, xs, ys, grad_out):
    """Gradients of sample_many w.r.t. the feature map and the coordinates.

    grad_out is (N, C).  Returns (grad_feature (C,H,W), grad_xs (N,),
    grad_ys (N,)); grad_feature accumulates over all N points.
    """
    C, H, W = feature.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = xs - x0
    wy = ys - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)

    corners = (
        (x0i, y0i, (1.0 - wx) * (1.0 - wy)),
        (x0i + 1, y0i, wx * (1.0 - wy)),
        (x0i, y0i + 1, (1.0 - wx) * wy),
        (x0i + 1, y0i + 1, wx * wy),
    )
    grad_flat = np.zeros((H * W, C))
    vals = []
    for xi, yi, w in corners:
        inside = (xi >= 0) & (xi < W) & (yi >= 0) & (yi < H)
        xc = np.clip(xi, 0, W - 1)
        yc = np.clip(yi, 0, H - 1)
        lin = yc * W + xc
        contrib = (w * inside)[:, None] * grad_out
        np.add.at(grad_flat, lin[inside], contrib[inside])
        vals.append(feature[:, yc, xc].T * inside[:, None])
    v00, v10, v01, v11 = vals

    dvdx = (1.0 - wy)[:, None] * (v10 - v00) + wy[:, None] * (v11 - v01)
    dvdy = (1.0 - wx)[:, None] * (v01 - v00) + wx[:, None] * (v11 - v10)
    grad_xs = (grad_out * dvdx).sum(axis=1)
    grad_ys = (grad_out * dvdy).sum(axis=1)
    return grad_flat.T.reshape(C, H, W).copy(), grad_xs, grad_ys


def scatter_many(grad_out, xs, ys, height, width):
    """Transpose of sample_many: splat (N, C) gradients onto a (C,H,W) map."""
    n, C = grad_out.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    wx = xs - x0
    wy = ys - y0
    x0i = x0.astype(np.int64)
    y0i = y0.astype(np.int64)
    grad_flat = np.zeros((height * width, C))
    corners = (
        (x0i, y0i, (1.0 - wx) * (1.0 - wy)),
        (x0i + 1, y0i, wx * (1.0 - wy)),
        (x0i, y0i + 1, (1.0 - wx) * wy),
        (x0i + 1, y0i + 1, wx * wy),
    )
    for xi, yi, w in corners:
        inside = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
        xc = np.clip(xi, 0, width - 1)
        yc = np.clip(yi, 0, height - 1)
        lin = yc * width + xc
        contrib = (w * inside)[:, None] * grad_out
        np.add.at(grad_flat, lin[inside], contrib[inside])
    return grad_flat.T.reshape(C, height, width).copy()


def conv2d_3x3(inp, kernel, bias):
    """3x3 cross-correlation, stride 1, zero padding 1; preserves H, W."""
    c_out, c_in, kh, kw = kernel.shape
    _, H, W = inp.shape
    padded = np.pad(inp, ((0, 0), (1, 1), (1, 1)))
    out = np.empty((c_out, H, W))
    out[:] = bias[:, None, None]
    for dy in range(3):
        for dx in range(3):
            out += np.tensordot(kernel[:, :, dy, dx], padded[:, dy:dy + H, dx:dx + W], axes=1)
    return out
