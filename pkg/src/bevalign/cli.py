"""Command-line entry point.

Subcommands:
  demo       render a scene file, run the spatial + temporal fusion pipeline,
             write per-stage PGM maps and metrics.json
  verify     run the self-verification suites (oracles/gradients/geometry/
             properties/all)
  train-tda  run the alignment training loop and compare against the naive
             concat baseline
  bench      time the hot kernels on every available backend

Exit codes: 0 ok, 2 usage or parse error, 3 non-finite numerics,
4 training divergence.
"""

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels, synthetic, tda, verify
from .geometry import BevFeature, BevSpec
from .lgvt import ImageFeatureSet, identity_style_lgvt_params, lgvt_forward
from .spatial_fusion import block_average_conv, fuse_spatial

DEFAULT_CHANNELS = 8


@dataclass
class RunConfig:
    scene_path: str = ""
    layers: int = 3
    heights: tuple = tuple(synthetic.default_heights(4))
    frames: int = 5
    heads: int = 4
    points: int = 4
    seed: int = 7
    output_dir: str = "out"
    steps: int = 500
    lr: float = 1e-2


def write_pgm(path, values):
    """P5 binary PGM with min-max normalization; returns (min, max)."""
    lo = float(values.min())
    hi = float(values.max())
    if hi > lo:
        scaled = np.round((values - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(values)
    body = scaled.astype(np.uint8).tobytes()
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(body)
    return lo, hi


def magnitude_map(bev):
    """Per-cell L2 norm over channels."""
    return np.sqrt((bev.data ** 2).sum(axis=2))


def dump_metrics(metrics):
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"


def load_metrics(text):
    return json.loads(text)


def _fail(code, message):
    print(message, file=sys.stderr)
    return code


def run_demo(config):
    try:
        scene = synthetic.load_scene(config.scene_path)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        return _fail(2, f"demo: cannot load scene: {exc}")

    base = scene.spec
    spec = BevSpec(base.cells_x, base.cells_y, base.cell_size, base.origin,
                   tuple(config.heights))
    scene = synthetic.Scene(scene.boxes, scene.ego, scene.rig, spec,
                            scene.image_size, scene.seed)
    frames = min(config.frames, scene.num_frames)
    channels = scene.channels or DEFAULT_CHANNELS

    lgvt_params = identity_style_lgvt_params(channels, layers=config.layers,
                                             heads=config.heads, points=config.points)
    fuse_conv = block_average_conv(channels)
    tda_params = tda.identity_residual_tda_params(channels, heads=config.heads,
                                                  points=config.points)

    fused_frames = []
    b_lidar = b_cam = None
    for t in range(frames):
        b_lidar = synthetic.render_lidar_bev(scene, t, channels=channels)
        if scene.rig:
            images = synthetic.render_image_features(scene, t)
            b_cam = lgvt_forward(b_lidar, images, spec, lgvt_params)
        else:
            b_cam = BevFeature(spec, np.zeros_like(b_lidar.data))
        fused_frames.append(fuse_spatial(b_lidar, b_cam, fuse_conv))
    seq = tda.FrameSequence(tuple(fused_frames), scene.ego[:frames])
    temporal = tda.temporal_fuse(seq, tda_params)

    stages = {
        "b_lidar": b_lidar,
        "b_camera": b_cam,
        "fused": fused_frames[-1],
        "temporal": temporal,
    }
    for name, bev in stages.items():
        if not np.all(np.isfinite(bev.data)):
            return _fail(3, f"demo: non-finite values in stage {name}")

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    maps = {}
    for name, bev in stages.items():
        lo, hi = write_pgm(out_dir / f"{name}.pgm", magnitude_map(bev))
        maps[name] = {"min": lo, "max": hi}

    truth = synthetic.ground_truth_bev(scene, frames - 1, channels=channels)
    try:
        peak_temporal = synthetic.peak_displacement_error(temporal, truth)
        peak_fused = synthetic.peak_displacement_error(fused_frames[-1], truth)
    except ValueError:
        peak_temporal = peak_fused = None
    metrics = {
        "frames": frames,
        "layers": config.layers,
        "maps": maps,
        "peak_error": peak_temporal,
        "peak_error_fused": peak_fused,
    }
    (out_dir / "metrics.json").write_text(dump_metrics(metrics), encoding="utf-8")
    return 0


def run_verify(suite):
    try:
        ok = verify.run_suite(suite)
    except KeyError:
        return _fail(2, f"verify: unknown suite {suite!r}; "
                        "choose from oracles, gradients, geometry, properties, all")
    return 0 if ok else 1


def training_family(seed, frames=5, speed_cells=3.0, members=4):
    """Fixed-seed moving-blob scenes for the training experiment."""
    return [synthetic.moving_blob_scene(seed + k, speed_cells=speed_cells,
                                        frames=frames)
            for k in range(members)]


def run_train_tda(config):
    family = training_family(config.seed, frames=config.frames)
    channels = family[0].channels
    rng = np.random.default_rng(config.seed)
    params = tda.init_tda_params(rng, channels, heads=2, points=config.points)
    try:
        trained, history = tda.train_tda_offsets(family, params,
                                                 config.steps, config.lr)
    except FloatingPointError as exc:
        return _fail(4, f"train-tda: {exc}")

    eval_scene = family[0]
    seq = tda.frame_sequence(eval_scene)
    truth = synthetic.ground_truth_bev(eval_scene, eval_scene.num_frames - 1)
    tda_out = tda.temporal_fuse(seq, trained)
    naive_out = tda.naive_fuse(seq, tda.averaging_conv(len(seq.frames), channels))
    tda_err = synthetic.peak_displacement_error(tda_out, truth)
    naive_err = synthetic.peak_displacement_error(naive_out, truth)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "initial_loss": history[0] if history else None,
        "final_loss": history[-1] if history else None,
        "lr": config.lr,
        "naive_peak_error": naive_err,
        "seed": config.seed,
        "steps": config.steps,
        "tda_peak_error": tda_err,
    }
    (out_dir / "tda_report.json").write_text(dump_metrics(report), encoding="utf-8")
    return 0 if tda_err < naive_err else 1


def run_bench(repeats=3):
    rng = np.random.default_rng(0)
    feature = rng.normal(size=(8, 64, 64))
    xs = rng.uniform(-2, 66, size=200_000)
    ys = rng.uniform(-2, 66, size=200_000)
    gout = rng.normal(size=(200_000, 8))
    conv_in = rng.normal(size=(16, 64, 64))
    conv_k = rng.normal(size=(8, 16, 3, 3))
    conv_b = rng.normal(size=8)

    print(f"available backends: {', '.join(kernels.available_backends())}")
    print(f"active backend: {kernels.backend}")
    for name in kernels.available_backends():
        mod = kernels.get_backend(name)
        cases = {
            "sample_many(200k pts, C=8)": lambda m=mod: m.sample_many(feature, xs, ys),
            "sample_backward_many(200k pts)": lambda m=mod: m.sample_backward_many(
                feature, xs, ys, gout),
            "conv2d_3x3(16->8, 64x64)": lambda m=mod: m.conv2d_3x3(
                conv_in, conv_k, conv_b),
        }
        for label, fn in cases.items():
            fn()  # warm-up
            best = min(_time_once(fn) for _ in range(repeats))
            print(f"  {name:7s} {label:34s} {best * 1e3:8.2f} ms", file=sys.stderr)
    return 0


def _time_once(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def _parse_heights(text):
    vals = tuple(float(v) for v in text.split(","))
    return vals


def build_parser():
    parser = argparse.ArgumentParser(prog="bevalign")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--layers", type=int, default=3)
        p.add_argument("--heights", type=_parse_heights,
                       default=tuple(synthetic.default_heights(4)),
                       help="comma-separated pillar heights, e.g. 0.25,0.75,1.25,1.75")
        p.add_argument("--frames", type=int, default=5)
        p.add_argument("--seed", type=int, default=7)
        p.add_argument("--out", default="out")

    p_demo = sub.add_parser("demo", help="run the fusion pipeline on a scene file")
    p_demo.add_argument("--scene", required=True)
    add_common(p_demo)

    p_verify = sub.add_parser("verify", help="run a self-verification suite")
    p_verify.add_argument("suite",
                          help="oracles | gradients | geometry | properties | all")

    p_train = sub.add_parser("train-tda", help="train alignment offsets and "
                                               "compare against the naive baseline")
    add_common(p_train)
    p_train.add_argument("--steps", type=int, default=500)
    p_train.add_argument("--lr", type=float, default=1e-2)

    sub.add_parser("bench", help="time the hot kernels per backend")
    return parser


def config_from_args(args):
    return RunConfig(
        scene_path=getattr(args, "scene", ""),
        layers=args.layers,
        heights=tuple(args.heights),
        frames=args.frames,
        seed=args.seed,
        output_dir=args.out,
        steps=getattr(args, "steps", 500),
        lr=getattr(args, "lr", 1e-2),
    )


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command == "demo":
        return run_demo(config_from_args(args))
    if args.command == "verify":
        return run_verify(args.suite)
    if args.command == "train-tda":
        return run_train_tda(config_from_args(args))
    if args.command == "bench":
        return run_bench()
    return 2


if __name__ == "__main__":
    sys.exit(main())
