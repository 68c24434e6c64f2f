import numpy as np
import pytest

from bevalign import synthetic, tda
from bevalign.geometry import BevFeature, BevSpec, EgoPose
from bevalign.tensorops import grad_check


def _spec(x=8, y=8, c=1):
    return BevSpec(x, y, 0.5, (0.0, 0.0), (1.0,))


def _frames(rng, spec, n, c):
    return tuple(BevFeature(spec, rng.normal(size=(spec.cells_x, spec.cells_y, c)))
                 for _ in range(n))


def test_frame_sequence_validation():
    rng = np.random.default_rng(0)
    spec = _spec()
    frames = _frames(rng, spec, 2, 2)
    with pytest.raises(ValueError):
        tda.FrameSequence(frames, (EgoPose(0, 0, 0),))
    other = BevFeature(BevSpec(8, 8, 1.0, (0.0, 0.0), (1.0,)),
                       rng.normal(size=(8, 8, 2)))
    with pytest.raises(ValueError):
        tda.FrameSequence((frames[0], other), (EgoPose(0, 0, 0), EgoPose(1, 0, 0)))


def test_single_frame_fuse_is_identity_bit_exact():
    rng = np.random.default_rng(1)
    spec = _spec()
    frames = _frames(rng, spec, 1, 3)
    seq = tda.FrameSequence(frames, (EgoPose(0.7, -0.3, 0.2),))
    params = tda.init_tda_params(rng, 3, heads=3, points=2)
    out = tda.temporal_fuse(seq, params)
    assert np.array_equal(out.data, frames[0].data)


def test_identity_residual_params_pass_current_frame():
    rng = np.random.default_rng(2)
    spec = _spec()
    frames = _frames(rng, spec, 4, 2)
    poses = tuple(EgoPose(0.4 * t, 0.0, 0.0) for t in range(4))
    out = tda.temporal_fuse(tda.FrameSequence(frames, poses),
                            tda.identity_residual_tda_params(2))
    assert np.array_equal(out.data, frames[-1].data)


def test_calibrate_step_compensates_cell_shift():
    rng = np.random.default_rng(3)
    spec = _spec()
    f = BevFeature(spec, rng.normal(size=(8, 8, 2)))
    # Ego advances one cell along +x; the same world content moves one cell
    # toward -x in the new ego frame.
    out = tda.calibrate_step(f, EgoPose(0, 0, 0), EgoPose(spec.cell_size, 0, 0))
    assert np.array_equal(out.data[:-1], f.data[1:])
    assert np.all(out.data[-1] == 0.0)


def test_self_reference_points_cover_unit_square():
    refs = tda.self_reference_points(5, 7)
    assert refs.shape == (5, 7, 2)
    assert refs[0, 0, 0] == 0.0 and refs[0, 6, 0] == 1.0
    assert refs[0, 0, 1] == 0.0 and refs[4, 0, 1] == 1.0


def test_params_vector_round_trip():
    rng = np.random.default_rng(4)
    params = tda.init_tda_params(rng, 4, heads=2, points=3,
                                 zero_offset_init=False)
    vec = tda.tda_params_to_vector(params)
    back = tda.tda_params_from_vector(vec, 4, 2, 3)
    assert np.array_equal(tda.tda_params_to_vector(back), vec)
    with pytest.raises(ValueError):
        tda.tda_params_from_vector(vec[:-1], 4, 2, 3)


def test_tda_step_backward_finite_difference():
    scene = synthetic.moving_blob_scene(7, speed_cells=2.0, cells=8,
                                        channels=4, frames=2)
    seq = tda.frame_sequence(scene)
    target = synthetic.ground_truth_bev(scene, 1)
    params = tda.init_tda_params(np.random.default_rng(8), 4, heads=2,
                                 points=2, zero_offset_init=False)
    vec0 = tda.tda_params_to_vector(params)

    def f(theta):
        p = tda.tda_params_from_vector(theta, 4, 2, 2)
        return tda.temporal_fuse_loss_grad(seq, target, p)

    assert grad_check(f, vec0, 1e-5) <= 1e-4


def test_naive_fuse_averaging_recovers_static_box():
    # A static scene with no ego motion: the averaged stack equals each frame.
    spec = BevSpec(16, 16, 0.5, (0.0, 0.0), (1.0,))
    sig = np.array([1.0, 0.5])
    box = synthetic.Box((2.0, 3.0, 1.0), (0.6, 0.6), (0.0, 0.0), sig)
    ego = tuple(EgoPose(0, 0, 0) for _ in range(3))
    scene = synthetic.Scene((box,), ego, (), spec, (8, 8), 0)
    seq = tda.frame_sequence(scene)
    out = tda.naive_fuse(seq, tda.averaging_conv(3, 2))
    assert np.max(np.abs(out.data - seq.frames[0].data)) <= 1e-12


def test_naive_fuse_rejects_wrong_conv_width():
    rng = np.random.default_rng(5)
    spec = _spec()
    frames = _frames(rng, spec, 3, 2)
    poses = tuple(EgoPose(0, 0, 0) for _ in range(3))
    seq = tda.FrameSequence(frames, poses)
    with pytest.raises(ValueError):
        tda.naive_fuse(seq, tda.averaging_conv(2, 2))


def test_naive_fuse_smears_moving_object():
    scene = synthetic.moving_blob_scene(11, speed_cells=3.0)
    seq = tda.frame_sequence(scene)
    naive = tda.naive_fuse(seq, tda.averaging_conv(5, scene.channels))
    truth = synthetic.ground_truth_bev(scene, 4)
    support_naive = int((np.abs(naive.data[:, :, 0]) > 1e-9).sum())
    support_truth = int((np.abs(truth.data[:, :, 0]) > 1e-9).sum())
    assert support_naive > support_truth


def test_train_tda_offsets_zero_steps_and_validation():
    rng = np.random.default_rng(6)
    params = tda.init_tda_params(rng, 4, heads=2, points=2)
    family = [synthetic.moving_blob_scene(0, speed_cells=2.0, frames=2, cells=8)]
    out, history = tda.train_tda_offsets(family, params, 0, 1e-2)
    assert history == []
    assert np.array_equal(tda.tda_params_to_vector(out),
                          tda.tda_params_to_vector(params))
    with pytest.raises(ValueError):
        tda.train_tda_offsets(family, params, -1, 1e-2)
    with pytest.raises(ValueError):
        tda.train_tda_offsets([], params, 1, 1e-2)


def test_train_tda_offsets_reduces_loss():
    params = tda.init_tda_params(np.random.default_rng(7), 4, heads=2, points=2)
    family = [synthetic.moving_blob_scene(21, frames=3, cells=16)]
    _, history = tda.train_tda_offsets(family, params, 10, 1e-2)
    assert len(history) == 10
    assert history[-1] < history[0]


def test_train_tda_offsets_divergence_raises():
    params = tda.init_tda_params(np.random.default_rng(9), 4, heads=2, points=2)
    family = [synthetic.moving_blob_scene(22, speed_cells=2.0, frames=2, cells=8)]
    with pytest.raises(FloatingPointError):
        tda.train_tda_offsets(family, params, 60, 1e6)
