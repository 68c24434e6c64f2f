"""Naive, loop-based reference implementations used as independent oracles.

Nothing here shares code with the production paths: sampling, convolution,
projection and attention are all spelled out directly so the verification
suites compare two genuinely separate computations.
"""

import math

import numpy as np


def bilinear_naive(feature, x, y):
    """4-corner weighted sum with zero padding, one corner at a time."""
    c, h, w = feature.shape
    x0 = math.floor(x)
    y0 = math.floor(y)
    wx = x - x0
    wy = y - y0
    out = np.zeros(c)
    for dx, dy, wgt in ((0, 0, (1 - wx) * (1 - wy)), (1, 0, wx * (1 - wy)),
                        (0, 1, (1 - wx) * wy), (1, 1, wx * wy)):
        xi = x0 + dx
        yi = y0 + dy
        if 0 <= xi < w and 0 <= yi < h:
            for ch in range(c):
                out[ch] += wgt * feature[ch, yi, xi]
    return out


def linear_naive(weight, bias, vec):
    out_dim, in_dim = weight.shape
    out = np.zeros(out_dim)
    for o in range(out_dim):
        acc = bias[o]
        for i in range(in_dim):
            acc += weight[o, i] * vec[i]
        out[o] = acc
    return out


def softmax_naive(vec):
    m = max(vec)
    exps = [math.exp(v - m) for v in vec]
    total = sum(exps)
    return np.array([e / total for e in exps])


def conv2d_naive(inp, kernel, bias):
    """Six nested loops, stride 1, zero padding 1."""
    c_in, h, w = inp.shape
    c_out = kernel.shape[0]
    out = np.zeros((c_out, h, w))
    for co in range(c_out):
        for y in range(h):
            for x in range(w):
                acc = bias[co]
                for ci in range(c_in):
                    for dy in range(3):
                        for dx in range(3):
                            sy = y + dy - 1
                            sx = x + dx - 1
                            if 0 <= sy < h and 0 <= sx < w:
                                acc += kernel[co, ci, dy, dx] * inp[ci, sy, sx]
                out[co, y, x] = acc
    return out


def project_point_naive(cam, p_world):
    """Explicit 4x4-then-3x3 matrix chain."""
    hom = [p_world[0], p_world[1], p_world[2], 1.0]
    p_cam = [sum(cam.extrinsics[r, c] * hom[c] for c in range(4)) for r in range(3)]
    depth = p_cam[2]
    uvw = [sum(cam.intrinsics[r, c] * p_cam[c] for c in range(3)) for r in range(3)]
    u = uvw[0] / depth
    v = uvw[1] / depth
    valid = depth > 1e-6 and 0.0 <= u <= cam.width - 1 and 0.0 <= v <= cam.height - 1
    return u, v, depth, valid


def deform_attn_naive(query, ref_point, value_map, params):
    """Per-head, per-point loop over the deformable attention definition."""
    c, h, w = value_map.shape
    g, p = params.heads, params.points
    d = c // g

    offsets = linear_naive(params.offset_proj.weight, params.offset_proj.bias, query)
    raw_w = linear_naive(params.weight_proj.weight, params.weight_proj.bias, query)

    projected = np.zeros_like(value_map)
    for yy in range(h):
        for xx in range(w):
            projected[:, yy, xx] = linear_naive(
                params.value_proj.weight, params.value_proj.bias, value_map[:, yy, xx])

    cat = np.zeros(c)
    for head in range(g):
        weights = softmax_naive([raw_w[head * p + k] for k in range(p)])
        head_out = np.zeros(d)
        for k in range(p):
            ox = offsets[(head * p + k) * 2]
            oy = offsets[(head * p + k) * 2 + 1]
            sx = ref_point[0] * (w - 1) + ox
            sy = ref_point[1] * (h - 1) + oy
            sample = bilinear_naive(projected[head * d:(head + 1) * d], sx, sy)
            head_out = head_out + weights[k] * sample
        cat[head * d:(head + 1) * d] = head_out
    return linear_naive(params.output_proj.weight, params.output_proj.bias, cat)
