"""Single-level, multi-head, multi-point deformable attention.

A query produces per-head sampling offsets (pixel units) and softmax
weights; the projected value map is bilinearly sampled at the reference
point plus each offset, the samples are weight-summed per head, and the
concatenated heads go through an output projection.

The grid entry points evaluate many queries at once, but every reduction
runs along a trailing axis, so a cell's result is bit-identical whether it
is computed alone or in a batch.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensorops import LinearParams, init_linear, linear_apply_batch, softmax


@dataclass(frozen=True)
class DeformAttnParams:
    heads: int
    points: int
    offset_proj: LinearParams   # C -> heads*points*2
    weight_proj: LinearParams   # C -> heads*points
    value_proj: LinearParams    # C -> C
    output_proj: LinearParams   # C -> C

    def __post_init__(self):
        c = self.value_proj.in_dim
        if self.heads < 1 or self.points < 1:
            raise ValueError("heads and points must be positive")
        if c % self.heads != 0:
            raise ValueError(f"channels ({c}) must be divisible by heads ({self.heads})")
        expect = {
            "offset_proj": (self.heads * self.points * 2, c),
            "weight_proj": (self.heads * self.points, c),
            "value_proj": (c, c),
            "output_proj": (c, c),
        }
        for name, (out_d, in_d) in expect.items():
            p = getattr(self, name)
            if (p.out_dim, p.in_dim) != (out_d, in_d):
                raise ValueError(f"{name} must map {in_d} -> {out_d}, "
                                 f"got {p.in_dim} -> {p.out_dim}")

    @property
    def channels(self):
        return self.value_proj.in_dim


def init_deform_attn_params(rng, channels, heads=4, points=4, zero_offset_init=True):
    """Seeded init; offset projection starts at exactly zero so an untrained
    module samples at the reference point.  Pass zero_offset_init=False for
    gradient checks: zero offsets put every sampling point on an integer
    pixel, where bilinear interpolation has only a one-sided subgradient.
    """
    return DeformAttnParams(
        heads=heads,
        points=points,
        offset_proj=init_linear(rng, heads * points * 2, channels,
                                zero=zero_offset_init),
        weight_proj=init_linear(rng, heads * points, channels),
        value_proj=init_linear(rng, channels, channels),
        output_proj=init_linear(rng, channels, channels),
    )


def identity_style_params(channels, heads=1, points=1):
    """Zero offsets, uniform weights, identity value/output projections.

    With this parameter set the module reduces to bilinear sampling at the
    reference point, for any heads/points.
    """
    eye = np.eye(channels)
    return DeformAttnParams(
        heads=heads,
        points=points,
        offset_proj=LinearParams(np.zeros((heads * points * 2, channels)),
                                 np.zeros(heads * points * 2)),
        weight_proj=LinearParams(np.zeros((heads * points, channels)),
                                 np.zeros(heads * points)),
        value_proj=LinearParams(eye.copy(), np.zeros(channels)),
        output_proj=LinearParams(eye.copy(), np.zeros(channels)),
    )


def project_values(params, value_map):
    """Apply the value projection channel-wise over a (C, H, W) map."""
    c, h, w = value_map.shape
    flat = value_map.reshape(c, h * w).T
    proj = linear_apply_batch(params.value_proj, flat)
    return np.ascontiguousarray(proj.T.reshape(c, h, w))


def _sampling_coords(queries, ref_points, params, height, width):
    b = queries.shape[0]
    g, p = params.heads, params.points
    off = linear_apply_batch(params.offset_proj, queries).reshape(b, g, p, 2)
    xs = ref_points[:, 0, None, None] * (width - 1) + off[..., 0]
    ys = ref_points[:, 1, None, None] * (height - 1) + off[..., 1]
    return xs, ys


def _attend_batch(queries, ref_points, proj_map, params):
    """Forward over B queries against one projected (C, H, W) value map."""
    b, c = queries.shape
    g, p = params.heads, params.points
    d = c // g
    _, h, w = proj_map.shape
    xs, ys = _sampling_coords(queries, ref_points, params, h, w)
    raw_w = linear_apply_batch(params.weight_proj, queries).reshape(b, g, p)
    attn_w = softmax(raw_w, axis=-1)
    samples = np.empty((b, g, p, d))
    for head in range(g):
        sl = proj_map[head * d:(head + 1) * d]
        samples[:, head] = kernels.sample_many(
            sl, xs[:, head].ravel(), ys[:, head].ravel()).reshape(b, p, d)
    head_out = (attn_w[..., None] * samples).sum(axis=2)
    return linear_apply_batch(params.output_proj, head_out.reshape(b, c))


def deform_attn(query, ref_point, value_map, params):
    """Attend a single query against a (C, H, W) value map.

    ``ref_point`` is (x, y) in normalized [0, 1]^2 coordinates (x along W);
    points outside the map hit zero padding.
    """
    query = np.asarray(query, dtype=np.float64)
    value_map = np.ascontiguousarray(value_map, dtype=np.float64)
    if query.shape != (params.channels,) or value_map.shape[0] != params.channels:
        raise ValueError("query/value channel mismatch with params")
    proj_map = project_values(params, value_map)
    refs = np.asarray(ref_point, dtype=np.float64).reshape(1, 2)
    return _attend_batch(query[None, :], refs, proj_map, params)[0]


def deform_attn_grid(queries, ref_points, value_map, params):
    """Independent per-cell attention over an (X, Y, C) query grid."""
    queries = np.asarray(queries, dtype=np.float64)
    ref_points = np.asarray(ref_points, dtype=np.float64)
    value_map = np.ascontiguousarray(value_map, dtype=np.float64)
    if queries.ndim != 3 or queries.shape[2] != params.channels:
        raise ValueError(f"queries must be (X, Y, {params.channels})")
    if ref_points.shape != queries.shape[:2] + (2,):
        raise ValueError("ref_points must be (X, Y, 2) matching queries")
    x, y, c = queries.shape
    proj_map = project_values(params, value_map)
    out = _attend_batch(queries.reshape(-1, c), ref_points.reshape(-1, 2),
                        proj_map, params)
    return out.reshape(x, y, c)


@dataclass
class DeformAttnGrads:
    query: np.ndarray
    value_map: np.ndarray
    offset_proj: LinearParams
    weight_proj: LinearParams
    value_proj: LinearParams
    output_proj: LinearParams


def _attend_batch_backward(queries, ref_points, proj_map, params, grad_out):
    """Backward through _attend_batch; returns grads for queries, the
    projected map, and the offset/weight/output projections."""
    b, c = queries.shape
    g, p = params.heads, params.points
    d = c // g
    _, h, w = proj_map.shape

    # Recompute forward intermediates (cheap relative to caching).
    off_flat = linear_apply_batch(params.offset_proj, queries)
    off = off_flat.reshape(b, g, p, 2)
    xs = ref_points[:, 0, None, None] * (w - 1) + off[..., 0]
    ys = ref_points[:, 1, None, None] * (h - 1) + off[..., 1]
    raw_w = linear_apply_batch(params.weight_proj, queries).reshape(b, g, p)
    attn_w = softmax(raw_w, axis=-1)
    samples = np.empty((b, g, p, d))
    for head in range(g):
        sl = proj_map[head * d:(head + 1) * d]
        samples[:, head] = kernels.sample_many(
            sl, xs[:, head].ravel(), ys[:, head].ravel()).reshape(b, p, d)
    head_out = (attn_w[..., None] * samples).sum(axis=2)
    cat = head_out.reshape(b, c)

    # Output projection.
    d_wout = grad_out.T @ cat
    d_bout = grad_out.sum(axis=0)
    d_cat = grad_out @ params.output_proj.weight
    d_head = d_cat.reshape(b, g, d)

    # Weighted point sum.
    d_attn = (d_head[:, :, None, :] * samples).sum(axis=-1)   # (b, g, p)
    d_samples = attn_w[..., None] * d_head[:, :, None, :]      # (b, g, p, d)

    # Softmax (per head over points).
    d_raw = attn_w * (d_attn - (d_attn * attn_w).sum(axis=-1, keepdims=True))
    d_raw_flat = d_raw.reshape(b, g * p)
    d_ww = d_raw_flat.T @ queries
    d_bw = d_raw_flat.sum(axis=0)
    d_q = d_raw_flat @ params.weight_proj.weight

    # Bilinear sampling: map gradient plus coordinate gradients into offsets.
    d_proj_map = np.zeros_like(proj_map)
    d_off = np.empty((b, g, p, 2))
    for head in range(g):
        sl = proj_map[head * d:(head + 1) * d]
        gf, gx, gy = kernels.sample_backward_many(
            sl, xs[:, head].ravel(), ys[:, head].ravel(),
            d_samples[:, head].reshape(b * p, d))
        d_proj_map[head * d:(head + 1) * d] += gf
        d_off[:, head, :, 0] = gx.reshape(b, p)
        d_off[:, head, :, 1] = gy.reshape(b, p)
    d_off_flat = d_off.reshape(b, g * p * 2)
    d_wo = d_off_flat.T @ queries
    d_bo = d_off_flat.sum(axis=0)
    d_q = d_q + d_off_flat @ params.offset_proj.weight

    grads = {
        "offset_proj": LinearParams(d_wo, d_bo),
        "weight_proj": LinearParams(d_ww, d_bw),
        "output_proj": LinearParams(d_wout, d_bout),
    }
    return d_q, d_proj_map, grads


def _value_proj_backward(params, value_map, d_proj_map):
    c, h, w = value_map.shape
    d_flat = d_proj_map.reshape(c, h * w).T   # (N, c_out)
    v_flat = value_map.reshape(c, h * w).T    # (N, c_in)
    d_wv = d_flat.T @ v_flat
    d_bv = d_flat.sum(axis=0)
    d_value = (d_flat @ params.value_proj.weight).T.reshape(c, h, w)
    return np.ascontiguousarray(d_value), LinearParams(d_wv, d_bv)


def deform_attn_backward(query, ref_point, value_map, params, grad_out):
    """Exact analytic gradients of deform_attn for every input and parameter."""
    query = np.asarray(query, dtype=np.float64)
    value_map = np.ascontiguousarray(value_map, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    proj_map = project_values(params, value_map)
    refs = np.asarray(ref_point, dtype=np.float64).reshape(1, 2)
    d_q, d_proj_map, grads = _attend_batch_backward(
        query[None, :], refs, proj_map, params, grad_out[None, :])
    d_value, d_vp = _value_proj_backward(params, value_map, d_proj_map)
    return DeformAttnGrads(
        query=d_q[0],
        value_map=d_value,
        offset_proj=grads["offset_proj"],
        weight_proj=grads["weight_proj"],
        value_proj=d_vp,
        output_proj=grads["output_proj"],
    )


def deform_attn_grid_backward(queries, ref_points, value_map, params, grad_out):
    """Backward over a query grid; param grads accumulate over cells."""
    queries = np.asarray(queries, dtype=np.float64)
    x, y, c = queries.shape
    value_map = np.ascontiguousarray(value_map, dtype=np.float64)
    proj_map = project_values(params, value_map)
    d_q, d_proj_map, grads = _attend_batch_backward(
        queries.reshape(-1, c), np.asarray(ref_points, dtype=np.float64).reshape(-1, 2),
        proj_map, params, np.asarray(grad_out, dtype=np.float64).reshape(-1, c))
    d_value, d_vp = _value_proj_backward(params, value_map, d_proj_map)
    return DeformAttnGrads(
        query=d_q.reshape(x, y, c),
        value_map=d_value,
        offset_proj=grads["offset_proj"],
        weight_proj=grads["weight_proj"],
        value_proj=d_vp,
        output_proj=grads["output_proj"],
    )
