"""End-to-end acceptance checks, one test per numbered criterion.

The conftest terminal-summary hook prints one PASS/FAIL line per criterion
after the run.
"""

import json
import time

import numpy as np

from bevalign import cli, synthetic, tda, verify
from bevalign.lgvt import identity_style_lgvt_params, init_camera_bev, lgvt_forward


def _suite_ok(results):
    return all(ok for _, ok in results)


def test_criterion_1_oracle_equivalence():
    start = time.monotonic()
    results = verify.check_oracles(seed=0)
    elapsed = time.monotonic() - start
    assert _suite_ok(results), results
    assert elapsed < 10.0, f"oracle suite took {elapsed:.1f}s"


def test_criterion_2_gradient_suite():
    start = time.monotonic()
    results = verify.check_gradients(seed=0)
    elapsed = time.monotonic() - start
    assert _suite_ok(results), results
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"


def test_criterion_3_geometry_suite():
    results = verify.check_geometry(seed=0)
    assert _suite_ok(results), results


def test_criterion_4_camera_bev_localization():
    start = time.monotonic()
    hits_init = 0
    hits_layers = 0
    for k in range(100):
        scene = synthetic.beacon_scene(1000 + k)
        images = synthetic.render_image_features(scene, 0)
        truth = synthetic.ground_truth_bev(scene, 0)
        ti, tj = np.unravel_index(np.argmax(np.abs(truth.data[:, :, 0])),
                                  truth.data.shape[:2])

        init = init_camera_bev(scene.spec, images)
        ii, ij = np.unravel_index(np.argmax(np.abs(init.data[:, :, 0])),
                                  init.data.shape[:2])
        if max(abs(ii - ti), abs(ij - tj)) <= 1:
            hits_init += 1

        lidar = synthetic.render_lidar_bev(scene, 0)
        params = identity_style_lgvt_params(scene.channels, layers=3)
        out = lgvt_forward(lidar, images, scene.spec, params)
        oi, oj = np.unravel_index(np.argmax(np.abs(out.data[:, :, 0])),
                                  out.data.shape[:2])
        if max(abs(oi - ti), abs(oj - tj)) <= 1:
            hits_layers += 1
    elapsed = time.monotonic() - start
    assert hits_init >= 95, f"initialization localized {hits_init}/100"
    assert hits_layers >= 95, f"after 3 layers localized {hits_layers}/100"
    assert elapsed < 120.0, f"localization sweep took {elapsed:.1f}s"


def test_criterion_5_static_alignment_and_motion_smear():
    # Static box, five-pose translate-and-turn trajectory (every step
    # well under five cells): chained calibration keeps the peak within
    # one cell of the current-frame render.
    scene = synthetic.static_scene()
    steps = [np.hypot(b.x - a.x, b.y - a.y)
             for a, b in zip(scene.ego, scene.ego[1:])]
    assert all(s <= 5 * scene.spec.cell_size for s in steps)
    running = synthetic.render_lidar_bev(scene, 0)
    for t in range(1, scene.num_frames):
        running = tda.calibrate_step(running, scene.ego[t - 1], scene.ego[t])
    truth = synthetic.ground_truth_bev(scene, scene.num_frames - 1)
    err = synthetic.peak_displacement_error(running, truth)
    assert err <= 1.0, f"static peak error {err}"

    # A three-cells-per-frame mover under the naive concat baseline
    # leaves a response trail at least six cells long along its motion
    # axis.
    mover = synthetic.moving_blob_scene(100, speed_cells=3.0)
    seq = tda.frame_sequence(mover)
    naive = tda.naive_fuse(seq, tda.averaging_conv(len(seq.frames),
                                                   mover.channels))
    mag = np.abs(naive.data[:, :, 0])
    vel = mover.boxes[0].velocity
    motion_axis = 0 if abs(vel[0]) > abs(vel[1]) else 1
    profile = mag.max(axis=1 - motion_axis)
    support = int((profile > 1e-9).sum())
    assert support >= 6, f"smear support {support} cells"


def test_criterion_6_trained_alignment_beats_naive(tmp_path):
    start = time.monotonic()
    code = cli.main(["train-tda", "--out", str(tmp_path)])
    elapsed = time.monotonic() - start
    assert code == 0, f"train-tda exited {code}"
    report = json.loads((tmp_path / "tda_report.json").read_text(encoding="utf-8"))
    assert report["steps"] <= 500
    assert report["final_loss"] < report["initial_loss"], report
    assert report["tda_peak_error"] < report["naive_peak_error"], report
    assert elapsed < 300.0, f"training took {elapsed:.1f}s"


def test_criterion_7_knob_sweep_and_single_frame_identity(tmp_path):
    scene_path = str(synthetic.bundled_scene_path())
    for layers in (1, 2, 3):
        for n_heights in (1, 2, 4, 8):
            for frames in (1, 3, 5):
                out = tmp_path / f"l{layers}_h{n_heights}_f{frames}"
                heights = ",".join(str(v) for v in
                                   synthetic.default_heights(n_heights))
                code = cli.main(["demo", "--scene", scene_path,
                                 "--layers", str(layers),
                                 "--heights", heights,
                                 "--frames", str(frames),
                                 "--out", str(out)])
                assert code == 0, (layers, n_heights, frames, code)
                metrics = json.loads((out / "metrics.json")
                                     .read_text(encoding="utf-8"))
                assert metrics["frames"] == frames
                for entry in metrics["maps"].values():
                    assert np.isfinite(entry["min"])
                    assert np.isfinite(entry["max"])
                pgm = (out / "temporal.pgm").read_bytes()
                assert pgm.startswith(b"P5\n64 64\n255\n")
                assert len(pgm) == len(b"P5\n64 64\n255\n") + 64 * 64

    # T = 1 reduces temporal fusion to the identity, bit-exactly, even
    # with fully random parameters.
    rng = np.random.default_rng(0)
    from bevalign.geometry import BevFeature, BevSpec, EgoPose
    spec = BevSpec(12, 12, 0.5, (0.0, 0.0), (1.0,))
    frame = BevFeature(spec, rng.normal(size=(12, 12, 4)))
    seq = tda.FrameSequence((frame,), (EgoPose(1.0, -2.0, 0.7),))
    params = tda.init_tda_params(rng, 4, zero_offset_init=False)
    fused = tda.temporal_fuse(seq, params)
    assert np.array_equal(fused.data, frame.data)


def test_criterion_8_determinism_and_interface(tmp_path, capsys):
    scene_path = str(synthetic.bundled_scene_path())
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    start = time.monotonic()
    assert cli.main(["demo", "--scene", scene_path, "--out", str(out_a)]) == 0
    demo_elapsed = time.monotonic() - start
    assert cli.main(["demo", "--scene", scene_path, "--out", str(out_b)]) == 0
    for name in ("b_lidar.pgm", "b_camera.pgm", "fused.pgm",
                 "temporal.pgm", "metrics.json"):
        a = (out_a / name).read_bytes()
        b = (out_b / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
    assert demo_elapsed < 60.0, f"demo took {demo_elapsed:.1f}s"

    assert cli.main(["verify", "all"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    verify_lines = [ln for ln in lines if ln.startswith(("PASS", "FAIL"))]
    assert verify_lines and all(ln.startswith("PASS") for ln in verify_lines)
