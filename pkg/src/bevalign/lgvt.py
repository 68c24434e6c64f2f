"""LiDAR-guided view transform: camera BEV initialization from pillar
projections, guided query formation, and stacked deformable cross-attention
over multi-view image features.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .deform_attn import (DeformAttnParams, _attend_batch, identity_style_params,
                          init_deform_attn_params, project_values)
from .geometry import BevFeature, cell_centers, project_points
from .tensorops import LinearParams, init_linear, linear_apply_batch


@dataclass(frozen=True)
class ImageFeatureSet:
    features: tuple  # per-view (C, H, W) arrays
    cameras: tuple   # matching CameraModel per view

    def __post_init__(self):
        feats = tuple(np.ascontiguousarray(f, dtype=np.float64) for f in self.features)
        if len(feats) != len(self.cameras):
            raise ValueError("one camera per feature map required")
        if feats and len({f.shape[0] for f in feats}) != 1:
            raise ValueError("all views must share the channel count")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "cameras", tuple(self.cameras))

    @property
    def channels(self):
        return self.features[0].shape[0]


@dataclass(frozen=True)
class LgvtLayerParams:
    query_reduce: LinearParams  # 2C -> C
    attn: DeformAttnParams

    def __post_init__(self):
        c = self.attn.channels
        if (self.query_reduce.out_dim, self.query_reduce.in_dim) != (c, 2 * c):
            raise ValueError(f"query_reduce must map {2 * c} -> {c}")


@dataclass(frozen=True)
class LgvtParams:
    layers: tuple  # of LgvtLayerParams

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("at least one layer required")
        object.__setattr__(self, "layers", tuple(self.layers))


def init_lgvt_params(rng, channels, layers=3, heads=4, points=4):
    return LgvtParams(tuple(
        LgvtLayerParams(
            query_reduce=init_linear(rng, channels, 2 * channels),
            attn=init_deform_attn_params(rng, channels, heads, points),
        )
        for _ in range(layers)
    ))


def identity_style_lgvt_params(channels, layers=3, heads=1, points=1):
    """Layers whose attention reduces to reference-point sampling; the query
    reduction passes the LiDAR block through."""
    block = np.hstack([np.eye(channels), np.zeros((channels, channels))])
    return LgvtParams(tuple(
        LgvtLayerParams(
            query_reduce=LinearParams(block.copy(), np.zeros(channels)),
            attn=identity_style_params(channels, heads, points),
        )
        for _ in range(layers)
    ))


def _pillar_projections(spec, images):
    """Project every (cell, height) through every view.

    Returns per view: (u, v, valid) arrays of shape (X, Y, N).
    """
    px, py = cell_centers(spec)
    n = len(spec.heights)
    pts = np.empty((spec.cells_x, spec.cells_y, n, 3))
    pts[..., 0] = px[..., None]
    pts[..., 1] = py[..., None]
    pts[..., 2] = np.asarray(spec.heights)
    flat = pts.reshape(-1, 3)
    out = []
    for cam in images.cameras:
        u, v, _, valid = project_points(cam, flat)
        shape = (spec.cells_x, spec.cells_y, n)
        out.append((u.reshape(shape), v.reshape(shape), valid.reshape(shape)))
    return out


def init_camera_bev(spec, images):
    """Camera BEV initialization by pillar sampling.

    Per cell and view: bilinearly sample the view at each valid pillar
    projection, take the element-wise max over valid heights; average the
    per-view maxima over views with at least one valid height.  Cells seen
    by no view stay zero.
    """
    c = images.channels
    x_cells, y_cells = spec.cells_x, spec.cells_y
    acc = np.zeros((x_cells, y_cells, c))
    hits = np.zeros((x_cells, y_cells))
    for (u, v, valid), feat in zip(_pillar_projections(spec, images), images.features):
        samples = np.full((x_cells, y_cells, len(spec.heights), c), -np.inf)
        idx = np.nonzero(valid)
        if idx[0].size:
            samples[idx] = kernels.sample_many(feat, u[idx], v[idx])
        view_max = samples.max(axis=2)
        view_hit = valid.any(axis=2)
        acc[view_hit] += view_max[view_hit]
        hits += view_hit
    out = np.zeros_like(acc)
    seen = hits > 0
    out[seen] = acc[seen] / hits[seen, None]
    return BevFeature(spec, out)


def guided_query(b_lidar, b_cam_prev, reduce):
    """Per-cell concat of LiDAR (first) and camera features, reduced 2C -> C."""
    if b_lidar.spec != b_cam_prev.spec or b_lidar.channels != b_cam_prev.channels:
        raise ValueError("LiDAR and camera BEV features must share spec and channels")
    cat = np.concatenate([b_lidar.data, b_cam_prev.data], axis=2)
    return linear_apply_batch(reduce, cat)


def _mid_pillar_refs(spec, cam):
    """Normalized reference point of each cell's mid-pillar projection."""
    px, py = cell_centers(spec)
    mid_h = float(np.mean(spec.heights))
    pts = np.stack([px.ravel(), py.ravel(), np.full(px.size, mid_h)], axis=1)
    u, v, _, valid = project_points(cam, pts)
    shape = (spec.cells_x, spec.cells_y)
    refs = np.zeros(shape + (2,))
    refs[..., 0] = (u / max(cam.width - 1, 1)).reshape(shape)
    refs[..., 1] = (v / max(cam.height - 1, 1)).reshape(shape)
    return refs, valid.reshape(shape)


def lgvt_layer(q_guided, images, spec, attn):
    """One deformable cross-attention update of the camera BEV.

    Each cell attends each view at its mid-pillar reference point; outputs
    average over the views whose projection is valid.
    """
    q_guided = np.asarray(q_guided, dtype=np.float64)
    c = attn.channels
    if q_guided.shape != (spec.cells_x, spec.cells_y, c):
        raise ValueError(f"queries must be ({spec.cells_x}, {spec.cells_y}, {c})")
    acc = np.zeros_like(q_guided)
    hits = np.zeros(q_guided.shape[:2])
    flat_q = q_guided.reshape(-1, c)
    for feat, cam in zip(images.features, images.cameras):
        refs, valid = _mid_pillar_refs(spec, cam)
        mask = valid.ravel()
        if not mask.any():
            continue
        proj_map = project_values(attn, feat)
        out = _attend_batch(flat_q[mask], refs.reshape(-1, 2)[mask], proj_map, attn)
        acc.reshape(-1, c)[mask] += out
        hits += valid
    result = np.zeros_like(acc)
    seen = hits > 0
    result[seen] = acc[seen] / hits[seen, None]
    return BevFeature(spec, result)


def lgvt_forward(b_lidar, images, spec, params):
    """Full view transform: init, then layered guided-query attention."""
    b_cam = init_camera_bev(spec, images)
    for layer in params.layers:
        q = guided_query(b_lidar, b_cam, layer.query_reduce)
        b_cam = lgvt_layer(q, images, spec, layer.attn)
    return b_cam
