import numpy as np
import pytest

from bevalign import synthetic
from bevalign.geometry import BevFeature, BevSpec
from bevalign.lgvt import (ImageFeatureSet, identity_style_lgvt_params,
                           init_camera_bev, init_lgvt_params, guided_query,
                           lgvt_forward, lgvt_layer)


def _beacon(seed=0):
    scene = synthetic.beacon_scene(seed)
    return scene, synthetic.render_image_features(scene, 0)


def test_image_feature_set_validation():
    scene, images = _beacon()
    with pytest.raises(ValueError):
        ImageFeatureSet(images.features[:1], images.cameras)


def test_init_camera_bev_localizes_beacon():
    scene, images = _beacon(3)
    truth = synthetic.ground_truth_bev(scene, 0)
    cam_bev = init_camera_bev(scene.spec, images)
    assert cam_bev.data.shape == truth.data.shape
    ti, tj = np.unravel_index(np.argmax(truth.data[:, :, 0]),
                              truth.data.shape[:2])
    ci, cj = np.unravel_index(np.argmax(cam_bev.data[:, :, 0]),
                              cam_bev.data.shape[:2])
    assert max(abs(ci - ti), abs(cj - tj)) <= 1


def test_init_camera_bev_zero_without_hits():
    # Cameras looking away from the grid produce an all-zero initialization.
    scene, images = _beacon()
    spec = BevSpec(8, 8, 0.5, (-1000.0, -1000.0), scene.spec.heights)
    out = init_camera_bev(spec, images)
    assert np.all(out.data == 0.0)


def test_guided_query_identity_reduce_passes_lidar():
    scene, images = _beacon()
    channels = scene.channels
    params = identity_style_lgvt_params(channels, layers=1)
    lidar = synthetic.render_lidar_bev(scene, 0)
    cam = BevFeature(scene.spec, np.zeros_like(lidar.data))
    q = guided_query(lidar, cam, params.layers[0].query_reduce)
    assert np.max(np.abs(q - lidar.data)) <= 1e-14


def test_lgvt_layer_preserves_shape_and_finite():
    scene, images = _beacon(1)
    channels = scene.channels
    rng = np.random.default_rng(0)
    params = init_lgvt_params(rng, channels, layers=2, heads=2, points=2)
    lidar = synthetic.render_lidar_bev(scene, 0)
    q = guided_query(lidar, init_camera_bev(scene.spec, images),
                     params.layers[0].query_reduce)
    out = lgvt_layer(q, images, scene.spec, params.layers[0].attn)
    assert out.data.shape == lidar.data.shape
    assert np.all(np.isfinite(out.data))


def test_lgvt_forward_identity_params_keeps_peak():
    scene, images = _beacon(5)
    lidar = synthetic.render_lidar_bev(scene, 0)
    truth = synthetic.ground_truth_bev(scene, 0)
    params = identity_style_lgvt_params(scene.channels, layers=3)
    out = lgvt_forward(lidar, images, scene.spec, params)
    err = synthetic.peak_displacement_error(out, truth)
    assert err <= np.sqrt(2.0)


def test_lgvt_forward_channel_mismatch_raises():
    scene, images = _beacon()
    lidar = synthetic.render_lidar_bev(scene, 0)
    params = identity_style_lgvt_params(scene.channels + 1, layers=1)
    with pytest.raises(ValueError):
        lgvt_forward(lidar, images, scene.spec, params)
