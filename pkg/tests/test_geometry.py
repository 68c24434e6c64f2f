import math

import numpy as np
import pytest

from bevalign import oracles
from bevalign.geometry import (BevFeature, BevSpec, CameraModel, EgoPose,
                               bev_cell_to_world, bev_to_map, camera_extrinsic,
                               cell_centers, ego_motion_matrix, make_intrinsics,
                               map_to_bev, normalize_yaw, pose_matrix,
                               project_point, project_points, warp_bev,
                               warp_bev_backward)


def _spec(x=8, y=6):
    return BevSpec(x, y, 0.5, (0.0, 0.0), (1.0,))


def test_normalize_yaw_range():
    for yaw in (-10.0, -math.pi, 0.0, math.pi, 3.5, 12.0):
        n = normalize_yaw(yaw)
        assert -math.pi < n <= math.pi
        assert abs(math.sin(n) - math.sin(yaw)) <= 1e-12
        assert abs(math.cos(n) - math.cos(yaw)) <= 1e-12


def test_camera_model_rejects_non_orthonormal():
    ext = np.eye(4)
    ext[0, 0] = 2.0
    with pytest.raises(ValueError):
        CameraModel(make_intrinsics(30, 30, 16, 16), ext, width=32, height=32)


def test_camera_extrinsic_axes():
    cam = CameraModel(make_intrinsics(30, 30, 16, 16),
                      camera_extrinsic((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
                      width=32, height=32)
    # A point straight ahead lands at the principal point with its distance
    # as depth.
    u, v, depth, valid = project_point(cam, (5.0, 0.0, 1.0))
    assert valid
    assert abs(u - 16.0) <= 1e-9 and abs(v - 16.0) <= 1e-9
    assert abs(depth - 5.0) <= 1e-9


def test_project_point_matches_oracle():
    rng = np.random.default_rng(0)
    cam = CameraModel(make_intrinsics(40, 45, 31.5, 31.5),
                      camera_extrinsic((1.0, -2.0, 0.5), (0.2, 1.0, 0.1)),
                      width=64, height=64)
    for _ in range(50):
        p = rng.normal(scale=8.0, size=3)
        got = project_point(cam, p)
        want = oracles.project_point_naive(cam, p)
        if abs(want[2]) < 0.1:
            continue
        assert abs(got[0] - want[0]) <= 1e-9
        assert abs(got[1] - want[1]) <= 1e-9
        assert abs(got[2] - want[2]) <= 1e-9
        assert got[3] == want[3]


def test_project_point_validity_rules():
    cam = CameraModel(make_intrinsics(30, 30, 16, 16),
                      camera_extrinsic((0.0, 0.0, 1.0), (1.0, 0.0, 0.0)),
                      width=32, height=32)
    # Behind the camera.
    assert not project_point(cam, (-3.0, 0.0, 1.0))[3]
    # Far off to the side (projects outside the image).
    assert not project_point(cam, (1.0, 30.0, 1.0))[3]


def test_project_points_matches_scalar():
    rng = np.random.default_rng(1)
    cam = CameraModel(make_intrinsics(40, 40, 31.5, 31.5),
                      camera_extrinsic((0.0, 0.0, 1.0), (0.0, 1.0, 0.0)),
                      width=64, height=64)
    pts = rng.normal(scale=6.0, size=(20, 3))
    us, vs, ds, valid = project_points(cam, pts)
    for k in range(20):
        u, v, d, ok = project_point(cam, pts[k])
        assert us[k] == u and vs[k] == v and ds[k] == d and valid[k] == ok


def test_bev_cell_to_world_and_centers():
    spec = _spec()
    p = bev_cell_to_world(spec, 2, 3, 1.5)
    assert np.array_equal(p, [1.0, 1.5, 1.5])
    with pytest.raises(IndexError):
        bev_cell_to_world(spec, 8, 0, 1.0)
    px, py = cell_centers(spec)
    assert px.shape == (8, 6) and py.shape == (8, 6)
    assert px[2, 3] == 1.0 and py[2, 3] == 1.5


def test_ego_motion_laws():
    a = EgoPose(1.0, -2.0, 0.3)
    b = EgoPose(-0.5, 4.0, -1.2)
    c = EgoPose(2.0, 1.0, 2.9)
    assert np.max(np.abs(ego_motion_matrix(a, a) - np.eye(3))) <= 1e-12
    inv = ego_motion_matrix(a, b) @ ego_motion_matrix(b, a)
    assert np.max(np.abs(inv - np.eye(3))) <= 1e-12
    comp = ego_motion_matrix(b, c) @ ego_motion_matrix(a, b)
    assert np.max(np.abs(comp - ego_motion_matrix(a, c))) <= 1e-12


def test_ego_motion_maps_world_point_consistently():
    a = EgoPose(1.0, 2.0, 0.4)
    b = EgoPose(-1.0, 0.5, -0.9)
    world = np.array([3.0, -1.0, 1.0])
    in_a = np.linalg.inv(pose_matrix(a)) @ world
    in_b = np.linalg.inv(pose_matrix(b)) @ world
    assert np.max(np.abs(ego_motion_matrix(a, b) @ in_a - in_b)) <= 1e-12


def test_bev_map_round_trip():
    data = np.random.default_rng(2).normal(size=(5, 7, 3))
    m = bev_to_map(data)
    assert m.shape == (3, 5, 7)
    assert np.array_equal(map_to_bev(m), data)


def test_warp_identity_bit_exact():
    spec = _spec()
    feat = BevFeature(spec, np.random.default_rng(3).normal(size=(8, 6, 2)))
    out = warp_bev(feat, np.eye(3))
    assert np.array_equal(out.data, feat.data)
    assert out.data is not feat.data


def test_warp_one_cell_shift():
    spec = _spec()
    feat = BevFeature(spec, np.random.default_rng(4).normal(size=(8, 6, 2)))
    m = np.eye(3)
    m[0, 2] = spec.cell_size
    out = warp_bev(feat, m)
    assert np.array_equal(out.data[1:], feat.data[:-1])
    assert np.all(out.data[0] == 0.0)


def test_warp_rejects_singular_matrix():
    spec = _spec()
    feat = BevFeature(spec, np.zeros((8, 6, 1)))
    bad = np.zeros((3, 3))
    with pytest.raises(ValueError):
        warp_bev(feat, bad)


def test_warp_backward_is_transpose():
    # <warp(f), g> == <f, warp_backward(g)> for the same transform.
    rng = np.random.default_rng(5)
    spec = _spec()
    f = BevFeature(spec, rng.normal(size=(8, 6, 2)))
    g = rng.normal(size=(8, 6, 2))
    pose_a = EgoPose(0.0, 0.0, 0.0)
    pose_b = EgoPose(0.3, -0.2, 0.15)
    m = ego_motion_matrix(pose_a, pose_b)
    lhs = float((warp_bev(f, m).data * g).sum())
    rhs = float((f.data * warp_bev_backward(g, m, spec)).sum())
    assert abs(lhs - rhs) <= 1e-10


def test_bev_feature_validation():
    spec = _spec()
    with pytest.raises(ValueError):
        BevFeature(spec, np.zeros((7, 6, 1)))
