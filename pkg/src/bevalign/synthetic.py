"""Synthetic scenes with known geometry: deterministic LiDAR-style BEV
renders, multi-view image feature renders, and evaluation metrics.

Scenes stand in for the sensor backbones: boxes carry a per-channel feature
signature that is splatted onto the BEV grid (sharp footprint) and onto the
camera views (small Gaussian around the projected center).
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import (BevFeature, BevSpec, CameraModel, EgoPose,
                       camera_extrinsic, make_intrinsics, pose_matrix,
                       project_point)
from .lgvt import ImageFeatureSet

GAUSSIAN_SIGMA_PX = 1.5
GAUSSIAN_TRUNC_SIGMAS = 3.0


@dataclass(frozen=True)
class Box:
    center: tuple       # world (x, y, z) meters
    half_extent: tuple  # (hx, hy) meters
    velocity: tuple     # (vx, vy) meters per frame
    signature: np.ndarray  # per-channel fingerprint

    def __post_init__(self):
        if self.half_extent[0] <= 0 or self.half_extent[1] <= 0:
            raise ValueError("half extents must be positive")
        sig = np.ascontiguousarray(self.signature, dtype=np.float64)
        if not np.all(np.isfinite(sig)):
            raise ValueError("signature must be finite")
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "half_extent", tuple(float(v) for v in self.half_extent))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "signature", sig)


@dataclass(frozen=True)
class Scene:
    boxes: tuple
    ego: tuple          # EgoPose per frame
    rig: tuple          # CameraModel per view, extrinsics in the ego frame
    spec: BevSpec
    image_size: tuple   # (height, width) of the feature maps
    seed: int

    def __post_init__(self):
        if len(self.ego) < 1:
            raise ValueError("at least one ego pose required")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "ego", tuple(self.ego))
        object.__setattr__(self, "rig", tuple(self.rig))
        object.__setattr__(self, "image_size",
                           (int(self.image_size[0]), int(self.image_size[1])))

    @property
    def num_frames(self):
        return len(self.ego)

    @property
    def channels(self):
        return self.boxes[0].signature.shape[0] if self.boxes else 0


def _check_frame(scene, t):
    if not (0 <= t < scene.num_frames):
        raise IndexError(f"frame {t} outside 0..{scene.num_frames - 1}")


def _box_ego_center(box, pose, t):
    """Box center at frame t, expressed in the frame-t ego frame (x, y, z)."""
    wx = box.center[0] + t * box.velocity[0]
    wy = box.center[1] + t * box.velocity[1]
    m = pose_matrix(pose)
    dx = wx - m[0, 2]
    dy = wy - m[1, 2]
    ex = m[0, 0] * dx + m[1, 0] * dy
    ey = m[0, 1] * dx + m[1, 1] * dy
    return ex, ey, box.center[2]


def render_lidar_bev(scene, t, channels=None):
    """Splat each box footprint (axis-aligned in the ego frame) onto the grid;
    overlaps take the element-wise max."""
    _check_frame(scene, t)
    spec = scene.spec
    c = channels if channels is not None else scene.channels
    out = np.zeros((spec.cells_x, spec.cells_y, c))
    pose = scene.ego[t]
    for box in scene.boxes:
        ex, ey, _ = _box_ego_center(box, pose, t)
        i_lo = math.ceil((ex - box.half_extent[0] - spec.origin[0]) / spec.cell_size)
        i_hi = math.floor((ex + box.half_extent[0] - spec.origin[0]) / spec.cell_size)
        j_lo = math.ceil((ey - box.half_extent[1] - spec.origin[1]) / spec.cell_size)
        j_hi = math.floor((ey + box.half_extent[1] - spec.origin[1]) / spec.cell_size)
        i_lo = max(i_lo, 0)
        j_lo = max(j_lo, 0)
        i_hi = min(i_hi, spec.cells_x - 1)
        j_hi = min(j_hi, spec.cells_y - 1)
        if i_lo > i_hi or j_lo > j_hi:
            continue
        block = out[i_lo:i_hi + 1, j_lo:j_hi + 1]
        np.maximum(block, box.signature, out=block)
    return BevFeature(spec, out)


def render_image_features(scene, t):
    """Per view, project each box center and splat its signature as a
    truncated Gaussian (sigma 1.5 px, cut at 3 sigma) around the projection."""
    _check_frame(scene, t)
    h, w = scene.image_size
    c = scene.channels if scene.channels else 1
    pose = scene.ego[t]
    maps = []
    radius = int(math.ceil(GAUSSIAN_SIGMA_PX * GAUSSIAN_TRUNC_SIGMAS))
    cutoff_sq = (GAUSSIAN_SIGMA_PX * GAUSSIAN_TRUNC_SIGMAS) ** 2
    for cam in scene.rig:
        img = np.zeros((c, h, w))
        for box in scene.boxes:
            ex, ey, ez = _box_ego_center(box, pose, t)
            u, v, _, valid = project_point(cam, (ex, ey, ez))
            if not valid:
                continue
            u_lo = max(int(math.floor(u)) - radius, 0)
            u_hi = min(int(math.ceil(u)) + radius, w - 1)
            v_lo = max(int(math.floor(v)) - radius, 0)
            v_hi = min(int(math.ceil(v)) + radius, h - 1)
            uu, vv = np.meshgrid(np.arange(u_lo, u_hi + 1), np.arange(v_lo, v_hi + 1))
            d_sq = (uu - u) ** 2 + (vv - v) ** 2
            weight = np.where(d_sq <= cutoff_sq,
                              np.exp(-d_sq / (2.0 * GAUSSIAN_SIGMA_PX ** 2)), 0.0)
            img[:, v_lo:v_hi + 1, u_lo:u_hi + 1] += box.signature[:, None, None] * weight
        maps.append(img)
    return ImageFeatureSet(tuple(maps), scene.rig)


def ground_truth_bev(scene, t, channels=None):
    """Evaluation oracle: identical to render_lidar_bev, kept under its own
    name so test code never trains against its own input by accident."""
    return render_lidar_bev(scene, t, channels)


def peak_displacement_error(feature, truth):
    """Distance in cells between the channel-0 magnitude argmax of feature
    and of truth; ties resolve to the lowest (i, then j) cell."""
    if feature.spec != truth.spec:
        raise ValueError("feature and truth specs must match")
    truth_mag = np.abs(truth.data[:, :, 0])
    if not truth_mag.any():
        raise ValueError("ground truth has an all-zero channel 0")
    feat_mag = np.abs(feature.data[:, :, 0])
    fi, fj = np.unravel_index(np.argmax(feat_mag), feat_mag.shape)
    ti, tj = np.unravel_index(np.argmax(truth_mag), truth_mag.shape)
    return math.hypot(float(fi) - float(ti), float(fj) - float(tj))


# ---------------------------------------------------------------------------
# Scene file format
# ---------------------------------------------------------------------------

_TOP_KEYS = {"seed", "spec", "image_size", "cameras", "ego", "boxes"}
_SPEC_KEYS = {"cells_x", "cells_y", "cell_size", "origin", "heights"}
_CAMERA_KEYS = {"fx", "fy", "cx", "cy", "extrinsic"}
_EGO_KEYS = {"x", "y", "yaw"}
_BOX_KEYS = {"center", "half_extent", "velocity", "signature"}


def _require_keys(obj, allowed, what):
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"unknown {what} keys: {sorted(unknown)}")
    missing = allowed - set(obj)
    if missing:
        raise ValueError(f"missing {what} keys: {sorted(missing)}")


def scene_from_json(text):
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("scene document must be a JSON object")
    _require_keys(doc, _TOP_KEYS, "scene")
    _require_keys(doc["spec"], _SPEC_KEYS, "spec")
    spec = BevSpec(
        cells_x=int(doc["spec"]["cells_x"]),
        cells_y=int(doc["spec"]["cells_y"]),
        cell_size=float(doc["spec"]["cell_size"]),
        origin=tuple(doc["spec"]["origin"]),
        heights=tuple(doc["spec"]["heights"]),
    )
    h, w = (int(v) for v in doc["image_size"])
    cams = []
    for entry in doc["cameras"]:
        _require_keys(entry, _CAMERA_KEYS, "camera")
        ext = np.asarray(entry["extrinsic"], dtype=np.float64)
        if ext.shape != (16,):
            raise ValueError("camera extrinsic must hold 16 row-major reals")
        cams.append(CameraModel(
            intrinsics=make_intrinsics(entry["fx"], entry["fy"], entry["cx"], entry["cy"]),
            extrinsics=ext.reshape(4, 4),
            width=w, height=h,
        ))
    ego = []
    for entry in doc["ego"]:
        _require_keys(entry, _EGO_KEYS, "ego pose")
        ego.append(EgoPose(entry["x"], entry["y"], entry["yaw"]))
    boxes = []
    for entry in doc["boxes"]:
        _require_keys(entry, _BOX_KEYS, "box")
        boxes.append(Box(
            center=tuple(entry["center"]),
            half_extent=tuple(entry["half_extent"]),
            velocity=tuple(entry["velocity"]),
            signature=np.asarray(entry["signature"], dtype=np.float64),
        ))
    return Scene(boxes=tuple(boxes), ego=tuple(ego), rig=tuple(cams),
                 spec=spec, image_size=(h, w), seed=int(doc["seed"]))


def scene_to_json(scene):
    doc = {
        "seed": scene.seed,
        "spec": {
            "cells_x": scene.spec.cells_x,
            "cells_y": scene.spec.cells_y,
            "cell_size": scene.spec.cell_size,
            "origin": list(scene.spec.origin),
            "heights": list(scene.spec.heights),
        },
        "image_size": list(scene.image_size),
        "cameras": [
            {
                "fx": cam.intrinsics[0, 0],
                "fy": cam.intrinsics[1, 1],
                "cx": cam.intrinsics[0, 2],
                "cy": cam.intrinsics[1, 2],
                "extrinsic": [float(v) for v in cam.extrinsics.ravel()],
            }
            for cam in scene.rig
        ],
        "ego": [{"x": p.x, "y": p.y, "yaw": p.yaw} for p in scene.ego],
        "boxes": [
            {
                "center": list(box.center),
                "half_extent": list(box.half_extent),
                "velocity": list(box.velocity),
                "signature": [float(v) for v in box.signature],
            }
            for box in scene.boxes
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_scene(path):
    with open(path, encoding="utf-8") as fh:
        return scene_from_json(fh.read())


# ---------------------------------------------------------------------------
# Canned scene families
# ---------------------------------------------------------------------------

def default_heights(n):
    """Pillar heights centered on z = 1.0 m; four by default."""
    if n == 1:
        return (1.0,)
    return tuple(np.linspace(0.25, 1.75, n))


def beacon_rig(image_size=64):
    """Two cameras with near-orthogonal views of a 32 m x 32 m grid."""
    fx = 39.0
    c = (image_size - 1) / 2.0
    intr = make_intrinsics(fx, fx, c, c)
    cam_a = CameraModel(intr, camera_extrinsic((16.0, -20.0, 1.0), (0.0, 1.0, 0.0)),
                        width=image_size, height=image_size)
    cam_b = CameraModel(intr, camera_extrinsic((-20.0, 16.0, 1.0), (1.0, 0.0, 0.0)),
                        width=image_size, height=image_size)
    return (cam_a, cam_b)


def beacon_scene(seed, cells=64, channels=8, n_heights=4):
    """One single-cell box ('beacon') at a seeded grid position."""
    rng = np.random.default_rng(seed)
    spec = BevSpec(cells, cells, 0.5, (0.0, 0.0), default_heights(n_heights))
    i = int(rng.integers(4, cells - 4))
    j = int(rng.integers(4, cells - 4))
    jitter = rng.uniform(-0.05, 0.05, size=2)
    center = (spec.origin[0] + i * spec.cell_size + jitter[0],
              spec.origin[1] + j * spec.cell_size + jitter[1],
              1.0)
    signature = np.concatenate([[1.0], rng.uniform(0.2, 0.8, size=channels - 1)])
    box = Box(center=center, half_extent=(0.24, 0.24), velocity=(0.0, 0.0),
              signature=signature)
    return Scene(boxes=(box,), ego=(EgoPose(0.0, 0.0, 0.0),), rig=beacon_rig(),
                 spec=spec, image_size=(64, 64), seed=seed)


def static_scene(channels=8):
    """A static box watched by the two-camera rig while the ego drives a
    five-pose translate-and-turn trajectory (per-step motion under a meter)."""
    spec = BevSpec(64, 64, 0.5, (0.0, 0.0), default_heights(4))
    signature = np.concatenate([[1.0], np.linspace(0.3, 0.8, channels - 1)])
    box = Box(center=(14.0, 17.0, 1.0), half_extent=(0.26, 0.26),
              velocity=(0.0, 0.0), signature=signature)
    ego = tuple(EgoPose(0.9 * t, 0.35 * t, 0.05 * t) for t in range(5))
    return Scene(boxes=(box,), ego=ego, rig=beacon_rig(), spec=spec,
                 image_size=(64, 64), seed=0)


def bundled_scene_path(name="static_scene.json"):
    """Path of a scene file shipped with the package."""
    from importlib import resources
    return resources.files("bevalign").joinpath("data", name)


def moving_blob_scene(seed, speed_cells=3.0, cells=32, channels=4, frames=5,
                      ego_step=0.5):
    """A blob moving at ``speed_cells`` cells/frame while the ego advances.

    Used by the TDA training loop; the blob trajectory stays on-grid for all
    frames in their respective ego frames.
    """
    rng = np.random.default_rng(seed)
    cell = 0.5
    spec = BevSpec(cells, cells, cell, (0.0, 0.0), default_heights(4))
    # Positive axis directions only: the smear of the naive baseline then
    # always displaces its (lowest-index tie-broken) argmax away from the
    # blob's current cell.
    direction = rng.choice(2)
    step = speed_cells * cell
    vel = [(0.0, step), (step, 0.0)][direction]
    span = (frames - 1) * step
    extent = (cells - 1) * cell
    margin = 2.0 * cell
    ego_span = (frames - 1) * ego_step

    def start_range(v):
        lo = margin + (span if v < 0 else 0.0)
        hi = extent - margin - (span if v > 0 else 0.0)
        return lo, hi

    sx_lo, sx_hi = start_range(vel[0])
    # Ego advances along +x, so keep the blob inside the latest frame too.
    sx_lo += ego_span
    sy_lo, sy_hi = start_range(vel[1])
    center = (rng.uniform(sx_lo, sx_hi), rng.uniform(sy_lo, sy_hi), 1.0)
    signature = rng.uniform(0.5, 1.0, size=channels)
    signature[0] = 1.0
    box = Box(center=center, half_extent=(0.74, 0.74), velocity=vel,
              signature=signature)
    ego = tuple(EgoPose(t * ego_step, 0.0, 0.0) for t in range(frames))
    return Scene(boxes=(box,), ego=ego, rig=(), spec=spec,
                 image_size=(64, 64), seed=seed)
