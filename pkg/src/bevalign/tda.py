"""Temporal fusion of a BEV sequence: ego-motion calibration of the running
frame, recurrent deformable alignment with a residual update, the naive
concat-plus-conv baseline, and a small gradient-descent training loop that
learns the alignment offsets against ground-truth renders.
"""

from dataclasses import dataclass

import numpy as np

from . import synthetic
from .deform_attn import (DeformAttnParams, deform_attn_grid,
                          deform_attn_grid_backward, identity_style_params,
                          init_deform_attn_params)
from .geometry import (BevFeature, bev_to_map, ego_motion_matrix, map_to_bev,
                       warp_bev, warp_bev_backward)
from .tensorops import (ConvParams, LinearParams, conv2d, init_linear,
                        linear_apply_batch)


@dataclass(frozen=True)
class TdaParams:
    query_reduce: LinearParams  # 2C -> C
    attn_prev: DeformAttnParams
    attn_curr: DeformAttnParams

    def __post_init__(self):
        c = self.attn_prev.channels
        if self.attn_curr.channels != c:
            raise ValueError("both attention branches must share channels")
        if (self.query_reduce.out_dim, self.query_reduce.in_dim) != (c, 2 * c):
            raise ValueError(f"query_reduce must map {2 * c} -> {c}")

    @property
    def channels(self):
        return self.attn_prev.channels


@dataclass(frozen=True)
class FrameSequence:
    frames: tuple  # BevFeature per time step, oldest first
    poses: tuple   # EgoPose per time step

    def __post_init__(self):
        if len(self.frames) != len(self.poses) or len(self.frames) < 1:
            raise ValueError("frames and poses must be equal-length and non-empty")
        spec = self.frames[0].spec
        c = self.frames[0].channels
        if any(f.spec != spec or f.channels != c for f in self.frames):
            raise ValueError("all frames must share spec and channels")
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "poses", tuple(self.poses))


def init_tda_params(rng, channels, heads=4, points=4, share_attn=False,
                    zero_offset_init=True):
    attn_prev = init_deform_attn_params(rng, channels, heads, points,
                                        zero_offset_init)
    attn_curr = attn_prev if share_attn else init_deform_attn_params(
        rng, channels, heads, points, zero_offset_init)
    return TdaParams(
        query_reduce=init_linear(rng, channels, 2 * channels),
        attn_prev=attn_prev,
        attn_curr=attn_curr,
    )


def identity_residual_tda_params(channels, heads=1, points=1):
    """Zero output projections: the residual update passes f_curr through."""
    attn = identity_style_params(channels, heads, points)
    zero_out = LinearParams(np.zeros((channels, channels)), np.zeros(channels))
    attn_zero = DeformAttnParams(attn.heads, attn.points, attn.offset_proj,
                                 attn.weight_proj, attn.value_proj, zero_out)
    block = np.hstack([np.zeros((channels, channels)), np.eye(channels)])
    return TdaParams(
        query_reduce=LinearParams(block, np.zeros(channels)),
        attn_prev=attn_zero,
        attn_curr=attn_zero,
    )


def calibrate_step(f_prev, pose_prev, pose_curr):
    """Re-express a previous BEV frame in the current ego frame."""
    return warp_bev(f_prev, ego_motion_matrix(pose_prev, pose_curr))


def self_reference_points(cells_x, cells_y):
    """Each cell's own normalized grid coordinate (x along j, y along i)."""
    refs = np.zeros((cells_x, cells_y, 2))
    refs[..., 0] = np.arange(cells_y) / max(cells_y - 1, 1)
    refs[..., 1] = (np.arange(cells_x) / max(cells_x - 1, 1))[:, None]
    return refs


def tda_step(f_prev_update, f_curr, params):
    """One deformable alignment update; inputs share the current ego frame.

    Queries come from the reduced concat of both frames; each frame is
    attended as a value map at the cell's own location, and the averaged
    attended features are added to f_curr as a residual.
    """
    if f_prev_update.spec != f_curr.spec:
        raise ValueError("frames must share a BEV spec")
    cat = np.concatenate([f_prev_update.data, f_curr.data], axis=2)
    q = linear_apply_batch(params.query_reduce, cat)
    refs = self_reference_points(f_curr.spec.cells_x, f_curr.spec.cells_y)
    a_prev = deform_attn_grid(q, refs, bev_to_map(f_prev_update.data), params.attn_prev)
    a_curr = deform_attn_grid(q, refs, bev_to_map(f_curr.data), params.attn_curr)
    return BevFeature(f_curr.spec, f_curr.data + 0.5 * (a_prev + a_curr))


def tda_step_backward(f_prev_update, f_curr, params, grad_out):
    """Gradients of tda_step w.r.t. both input frames and all parameters.

    Returns (d_prev, d_curr, grad_vector) with the vector in
    tda_params_to_vector order.
    """
    c = params.channels
    cat = np.concatenate([f_prev_update.data, f_curr.data], axis=2)
    q = linear_apply_batch(params.query_reduce, cat)
    refs = self_reference_points(f_curr.spec.cells_x, f_curr.spec.cells_y)
    d_attended = 0.5 * grad_out
    gp = deform_attn_grid_backward(q, refs, bev_to_map(f_prev_update.data),
                                   params.attn_prev, d_attended)
    gc = deform_attn_grid_backward(q, refs, bev_to_map(f_curr.data),
                                   params.attn_curr, d_attended)
    dq = (gp.query + gc.query).reshape(-1, c)
    cat_flat = cat.reshape(-1, 2 * c)
    d_wr = dq.T @ cat_flat
    d_br = dq.sum(axis=0)
    d_cat = (dq @ params.query_reduce.weight).reshape(cat.shape)
    d_prev = d_cat[:, :, :c] + map_to_bev(gp.value_map)
    d_curr = grad_out + d_cat[:, :, c:] + map_to_bev(gc.value_map)
    grad_vec = np.concatenate([
        _linear_vec(LinearParams(d_wr, d_br)),
        _attn_grads_vec(gp),
        _attn_grads_vec(gc),
    ])
    return d_prev, d_curr, grad_vec


def temporal_fuse(seq, params):
    """Recurrent calibrate-then-align fusion; T = 1 is the identity."""
    running = seq.frames[0]
    for t in range(1, len(seq.frames)):
        warped = calibrate_step(running, seq.poses[t - 1], seq.poses[t])
        running = tda_step(warped, seq.frames[t], params)
    return running


def temporal_fuse_loss_grad(seq, target, params):
    """MSE between temporal_fuse(seq) and target, with the analytic gradient
    w.r.t. all TdaParams fields (full backprop through the recurrence)."""
    caches = []
    running = seq.frames[0]
    for t in range(1, len(seq.frames)):
        m = ego_motion_matrix(seq.poses[t - 1], seq.poses[t])
        warped = warp_bev(running, m)
        caches.append((warped, seq.frames[t], m))
        running = tda_step(warped, seq.frames[t], params)
    diff = running.data - target.data
    # Overflow to inf is the divergence signal handled by callers.
    with np.errstate(over="ignore"):
        loss = float(np.mean(diff ** 2))
    grad_vec = np.zeros(tda_params_to_vector(params).size)
    g = (2.0 / diff.size) * diff
    for warped, f_curr, m in reversed(caches):
        d_prev, _, step_vec = tda_step_backward(warped, f_curr, params, g)
        grad_vec += step_vec
        g = warp_bev_backward(d_prev, m, seq.frames[0].spec)
    return loss, grad_vec


def naive_fuse(seq, conv):
    """Baseline: chain-calibrate every frame into the last ego frame, channel
    concat all T frames (oldest first) and apply one convolution."""
    t_total = len(seq.frames)
    c = seq.frames[0].channels
    if conv.kernel.shape[1] != t_total * c:
        raise ValueError(f"conv must take {t_total * c} input channels")
    calibrated = []
    for k, frame in enumerate(seq.frames):
        warped = frame
        for t in range(k + 1, t_total):
            warped = calibrate_step(warped, seq.poses[t - 1], seq.poses[t])
        calibrated.append(bev_to_map(warped.data))
    stacked = np.concatenate(calibrated, axis=0)
    return BevFeature(seq.frames[0].spec, map_to_bev(conv2d(stacked, conv)))


def averaging_conv(frames, channels):
    """Centered-delta kernel averaging the per-frame channel blocks."""
    kernel = np.zeros((channels, frames * channels, 3, 3))
    for c in range(channels):
        for t in range(frames):
            kernel[c, t * channels + c, 1, 1] = 1.0 / frames
    return ConvParams(kernel, np.zeros(channels))


# ---------------------------------------------------------------------------
# Parameter flattening (training / gradient checking)
# ---------------------------------------------------------------------------

def _linear_vec(p):
    return np.concatenate([p.weight.ravel(), p.bias.ravel()])


def _attn_params_vec(a):
    return np.concatenate([
        _linear_vec(a.offset_proj), _linear_vec(a.weight_proj),
        _linear_vec(a.value_proj), _linear_vec(a.output_proj),
    ])


def _attn_grads_vec(g):
    return np.concatenate([
        _linear_vec(g.offset_proj), _linear_vec(g.weight_proj),
        _linear_vec(g.value_proj), _linear_vec(g.output_proj),
    ])


def tda_params_to_vector(params):
    return np.concatenate([
        _linear_vec(params.query_reduce),
        _attn_params_vec(params.attn_prev),
        _attn_params_vec(params.attn_curr),
    ])


def _take_linear(vec, pos, out_dim, in_dim):
    w = vec[pos:pos + out_dim * in_dim].reshape(out_dim, in_dim)
    pos += out_dim * in_dim
    b = vec[pos:pos + out_dim]
    pos += out_dim
    return LinearParams(w.copy(), b.copy()), pos


def _take_attn(vec, pos, channels, heads, points):
    offset, pos = _take_linear(vec, pos, heads * points * 2, channels)
    weight, pos = _take_linear(vec, pos, heads * points, channels)
    value, pos = _take_linear(vec, pos, channels, channels)
    output, pos = _take_linear(vec, pos, channels, channels)
    return DeformAttnParams(heads, points, offset, weight, value, output), pos


def tda_params_from_vector(vec, channels, heads, points):
    vec = np.asarray(vec, dtype=np.float64)
    reduce_p, pos = _take_linear(vec, 0, channels, 2 * channels)
    attn_prev, pos = _take_attn(vec, pos, channels, heads, points)
    attn_curr, pos = _take_attn(vec, pos, channels, heads, points)
    if pos != vec.size:
        raise ValueError(f"parameter vector length {vec.size}, expected {pos}")
    return TdaParams(reduce_p, attn_prev, attn_curr)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def frame_sequence(scene):
    """Per-frame LiDAR-style renders standing in for the fused features."""
    frames = tuple(synthetic.render_lidar_bev(scene, t) for t in range(scene.num_frames))
    return FrameSequence(frames=frames, poses=scene.ego)


def train_tda_offsets(scene_family, params, steps, lr):
    """Plain gradient descent on the temporal-fusion MSE against ground truth.

    ``scene_family`` is a sequence of scenes cycled over deterministically.
    Returns (trained params, loss history).  Raises FloatingPointError on a
    non-finite loss.
    """
    if steps < 0 or lr <= 0:
        raise ValueError("steps must be >= 0 and lr > 0")
    if steps == 0:
        return params, []
    cases = []
    for scene in scene_family:
        seq = frame_sequence(scene)
        target = synthetic.ground_truth_bev(scene, scene.num_frames - 1)
        cases.append((seq, target))
    if not cases:
        raise ValueError("empty scene family")
    heads, points = params.attn_prev.heads, params.attn_prev.points
    channels = params.channels
    vec = tda_params_to_vector(params)
    history = []
    for step in range(steps):
        seq, target = cases[step % len(cases)]
        current = tda_params_from_vector(vec, channels, heads, points)
        loss, grad = temporal_fuse_loss_grad(seq, target, current)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite training loss at step {step}")
        history.append(loss)
        vec = vec - lr * grad
    return tda_params_from_vector(vec, channels, heads, points), history
