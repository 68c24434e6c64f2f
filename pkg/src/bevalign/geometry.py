"""Pinhole projection, BEV grid <-> metric mapping, SE(2) ego motion and
BEV feature warping.

Conventions: BEV features are (cells_x, cells_y, C) arrays bound to a
BevSpec; cell (i, j) has its metric center at origin + (i, j) * cell_size.
Ego motion is planar (x, y, yaw) -- z/pitch/roll are invisible to a planar
grid warp.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

DEPTH_EPS = 1e-6


@dataclass(frozen=True)
class CameraModel:
    intrinsics: np.ndarray  # 3x3, zero skew
    extrinsics: np.ndarray  # 4x4 world -> camera
    width: int
    height: int

    def __post_init__(self):
        k = np.ascontiguousarray(self.intrinsics, dtype=np.float64)
        e = np.ascontiguousarray(self.extrinsics, dtype=np.float64)
        if k.shape != (3, 3) or e.shape != (4, 4):
            raise ValueError("intrinsics must be 3x3 and extrinsics 4x4")
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if not np.allclose(e[3], [0.0, 0.0, 0.0, 1.0], atol=1e-12):
            raise ValueError("extrinsics bottom row must be (0, 0, 0, 1)")
        r = e[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise ValueError("extrinsics rotation block is not orthonormal")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "extrinsics", e)


def make_intrinsics(fx, fy, cx, cy):
    return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])


def camera_extrinsic(position, forward, up=(0.0, 0.0, 1.0)):
    """World->camera 4x4 for a camera at ``position`` looking along ``forward``.

    Camera axes: z along the view direction, x to the right, y down.
    """
    fwd = np.asarray(forward, dtype=np.float64)
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    nr = np.linalg.norm(right)
    if nr < 1e-12:
        raise ValueError("forward and up are collinear")
    right /= nr
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    ext = np.eye(4)
    ext[:3, :3] = rot
    ext[:3, 3] = -rot @ np.asarray(position, dtype=np.float64)
    return ext


@dataclass(frozen=True)
class BevSpec:
    cells_x: int
    cells_y: int
    cell_size: float
    origin: tuple  # world (x, y) of cell (0, 0) center
    heights: tuple  # pillar heights, strictly increasing

    def __post_init__(self):
        if self.cells_x < 1 or self.cells_y < 1 or self.cell_size <= 0:
            raise ValueError("grid extents and cell size must be positive")
        h = tuple(float(v) for v in self.heights)
        if len(h) < 1 or any(b <= a for a, b in zip(h, h[1:])):
            raise ValueError("heights must be non-empty and strictly increasing")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "heights", h)


def normalize_yaw(yaw):
    """Wrap an angle into (-pi, pi]."""
    wrapped = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class EgoPose:
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))


@dataclass(frozen=True)
class BevFeature:
    spec: BevSpec
    data: np.ndarray = field(repr=False)  # (cells_x, cells_y, C)

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        if d.ndim != 3 or d.shape[0] != self.spec.cells_x or d.shape[1] != self.spec.cells_y:
            raise ValueError(f"data shape {d.shape} does not match spec "
                             f"({self.spec.cells_x}, {self.spec.cells_y}, C)")
        object.__setattr__(self, "data", d)

    @property
    def channels(self):
        return self.data.shape[2]


def bev_cell_to_world(spec, i, j, h):
    """Metric center of cell (i, j) at pillar height h."""
    if not (0 <= i < spec.cells_x and 0 <= j < spec.cells_y):
        raise IndexError(f"cell ({i}, {j}) outside grid "
                         f"{spec.cells_x}x{spec.cells_y}")
    return np.array([spec.origin[0] + i * spec.cell_size,
                     spec.origin[1] + j * spec.cell_size,
                     float(h)])


def cell_centers(spec):
    """Metric centers of all cells: two (cells_x, cells_y) arrays (x, y)."""
    xs = spec.origin[0] + np.arange(spec.cells_x) * spec.cell_size
    ys = spec.origin[1] + np.arange(spec.cells_y) * spec.cell_size
    return np.meshgrid(xs, ys, indexing="ij")


def project_point(cam, p_world):
    """Project a world point; validity is data, not an error.

    Returns (u, v, depth, valid).  valid iff depth > 1e-6 m and (u, v)
    lies inside [0, width-1] x [0, height-1].  Invalid results still carry
    the computed values.
    """
    u, v, depth, valid = project_points(cam, np.asarray(p_world, dtype=np.float64)[None, :])
    return float(u[0]), float(v[0]), float(depth[0]), bool(valid[0])


def project_points(cam, pts):
    """Vectorized project_point over an (N, 3) array."""
    pts = np.asarray(pts, dtype=np.float64)
    p_cam = pts @ cam.extrinsics[:3, :3].T + cam.extrinsics[:3, 3]
    depth = p_cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uvw = p_cam @ cam.intrinsics.T
        u = uvw[:, 0] / depth
        v = uvw[:, 1] / depth
    valid = (depth > DEPTH_EPS) & (u >= 0.0) & (u <= cam.width - 1) \
        & (v >= 0.0) & (v <= cam.height - 1)
    return u, v, depth, valid


def pose_matrix(pose):
    """Ego -> world SE(2) homogeneous 3x3."""
    c = math.cos(pose.yaw)
    s = math.sin(pose.yaw)
    return np.array([[c, -s, pose.x], [s, c, pose.y], [0.0, 0.0, 1.0]])


def ego_motion_matrix(pose_from, pose_to):
    """SE(2) map taking points in the ``from`` ego frame to the ``to`` frame."""
    to_mat = pose_matrix(pose_to)
    rot = to_mat[:2, :2]
    inv = np.eye(3)
    inv[:2, :2] = rot.T
    inv[:2, 2] = -rot.T @ to_mat[:2, 2]
    return inv @ pose_matrix(pose_from)


def bev_to_map(data):
    """(X, Y, C) -> contiguous (C, X, Y) sampling layout (H=X, W=Y)."""
    return np.ascontiguousarray(np.moveaxis(data, 2, 0))


def map_to_bev(m):
    return np.ascontiguousarray(np.moveaxis(m, 0, 2))


def _warp_cell_coords(spec, M):
    """Fractional source cell coords for every output cell under inverse warp."""
    rot = M[:2, :2]
    if abs(np.linalg.det(rot)) < 1e-12:
        raise ValueError("warp matrix has a singular rotation block")
    minv = np.linalg.inv(M)
    px, py = cell_centers(spec)
    sx = minv[0, 0] * px + minv[0, 1] * py + minv[0, 2]
    sy = minv[1, 0] * px + minv[1, 1] * py + minv[1, 2]
    fi = (sx - spec.origin[0]) / spec.cell_size
    fj = (sy - spec.origin[1]) / spec.cell_size
    return fi.ravel(), fj.ravel()


def warp_bev(feature, M):
    """Inverse-warp a BEV feature by an SE(2) matrix with bilinear sampling."""
    M = np.asarray(M, dtype=np.float64)
    if np.array_equal(M, np.eye(3)):
        # Identity lands exactly on cell centers; skip resampling entirely.
        return BevFeature(feature.spec, feature.data.copy())
    spec = feature.spec
    fi, fj = _warp_cell_coords(spec, M)
    sampled = kernels.sample_many(bev_to_map(feature.data), fj, fi)
    return BevFeature(spec, sampled.reshape(spec.cells_x, spec.cells_y, -1))


def warp_bev_backward(grad_out, M, spec):
    """Transpose of warp_bev: scatter output-cell gradients onto the source."""
    M = np.asarray(M, dtype=np.float64)
    if np.array_equal(M, np.eye(3)):
        return np.asarray(grad_out, dtype=np.float64).copy()
    fi, fj = _warp_cell_coords(spec, M)
    c = grad_out.shape[2]
    scattered = kernels.scatter_many(grad_out.reshape(-1, c), fj, fi,
                                     spec.cells_x, spec.cells_y)
    return map_to_bev(scattered)
