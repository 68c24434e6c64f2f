"""Self-verification suites: oracle equivalence, gradient checks, geometry
laws and structural properties.  Used by the CLI ``verify`` subcommand and
reused by the acceptance tests.
"""

import numpy as np

from . import oracles, tda
from .deform_attn import (deform_attn, deform_attn_backward, deform_attn_grid,
                          init_deform_attn_params)
from .geometry import (BevFeature, BevSpec, CameraModel, EgoPose,
                       ego_motion_matrix, make_intrinsics, project_point,
                       warp_bev)
from .tensorops import (LinearParams, bilinear_sample, bilinear_sample_backward,
                        conv2d, grad_check, init_conv, init_linear,
                        linear_apply, softmax)


def _random_attn_config(rng):
    heads = int(rng.choice([1, 2, 4]))
    points = int(rng.choice([1, 4]))
    channels = heads * int(rng.choice([2, 4]))
    h = int(rng.integers(4, 17))
    w = int(rng.integers(4, 17))
    # Non-zero offset projection: the default init freezes offsets at zero,
    # which would leave the sampling-coordinate path unexercised.
    from .deform_attn import DeformAttnParams
    params = DeformAttnParams(
        heads, points,
        offset_proj=init_linear(rng, heads * points * 2, channels),
        weight_proj=init_linear(rng, heads * points, channels),
        value_proj=init_linear(rng, channels, channels),
        output_proj=init_linear(rng, channels, channels),
    )
    query = rng.normal(size=channels)
    ref = rng.uniform(0.1, 0.9, size=2)
    value_map = rng.normal(size=(channels, h, w))
    return query, ref, value_map, params


def check_oracles(seed=0):
    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    for _ in range(50):
        query, ref, value_map, params = _random_attn_config(rng)
        got = deform_attn(query, ref, value_map, params)
        want = oracles.deform_attn_naive(query, ref, value_map, params)
        worst = max(worst, float(np.max(np.abs(got - want))))
    results.append((f"deform_attn vs naive loop (50 cases, max err {worst:.2e})",
                    worst <= 1e-10))

    worst = 0.0
    for _ in range(25):
        feat = rng.normal(size=(int(rng.integers(1, 5)), 6, 7))
        x = rng.uniform(-2, 8)
        y = rng.uniform(-2, 7)
        err = float(np.max(np.abs(bilinear_sample(feat, x, y)
                                  - oracles.bilinear_naive(feat, x, y))))
        worst = max(worst, err)
    results.append((f"bilinear_sample vs naive (max err {worst:.2e})", worst <= 1e-12))

    worst = 0.0
    for _ in range(10):
        inp = rng.normal(size=(2, 5, 5))
        conv = init_conv(rng, 3, 2)
        err = float(np.max(np.abs(conv2d(inp, conv)
                                  - oracles.conv2d_naive(inp, conv.kernel, conv.bias))))
        worst = max(worst, err)
    results.append((f"conv2d vs naive 6-loop (max err {worst:.2e})", worst <= 1e-12))

    worst = 0.0
    for _ in range(10):
        lin = init_linear(rng, 2, 3)
        vec = rng.normal(size=3)
        err = float(np.max(np.abs(linear_apply(lin, vec)
                                  - oracles.linear_naive(lin.weight, lin.bias, vec))))
        worst = max(worst, err)
    results.append((f"linear_apply vs naive loop (max err {worst:.2e})", worst <= 1e-12))
    return results


def check_gradients(seed=0):
    rng = np.random.default_rng(seed)
    results = []
    eps = 1e-5

    worst = 0.0
    for _ in range(10):
        feat = rng.normal(size=(2, 6, 6))
        x = rng.uniform(0.6, 4.4)
        y = rng.uniform(0.6, 4.4)
        probe = rng.normal(size=2)

        def f(theta, x=x, y=y, probe=probe, shape=feat.shape):
            fmap = theta.reshape(shape)
            val = float(probe @ bilinear_sample(fmap, x, y))
            gf, _, _ = bilinear_sample_backward(fmap, x, y, probe)
            return val, gf.ravel()

        worst = max(worst, grad_check(f, feat.ravel(), eps))
        # Coordinate gradients.
        def f_xy(theta, feat=feat, probe=probe):
            val = float(probe @ bilinear_sample(feat, theta[0], theta[1]))
            _, gx, gy = bilinear_sample_backward(feat, theta[0], theta[1], probe)
            return val, np.array([gx, gy])

        worst = max(worst, grad_check(f_xy, np.array([x, y]), eps))
    results.append((f"bilinear_sample_backward fd check (max rel err {worst:.2e})",
                    worst <= 1e-4))

    worst = 0.0
    for _ in range(10):
        query, ref, value_map, params = _random_attn_config(rng)
        value_map = rng.normal(size=(params.channels, 8, 8))
        probe = rng.normal(size=params.channels)
        vec0 = tda._attn_params_vec(params)

        def f(theta, params=params, query=query, ref=ref, value_map=value_map,
              probe=probe):
            p, _ = tda._take_attn(theta, 0, params.channels, params.heads, params.points)
            val = float(probe @ deform_attn(query, ref, value_map, p))
            g = deform_attn_backward(query, ref, value_map, p, probe)
            return val, tda._attn_grads_vec(g)

        worst = max(worst, grad_check(f, vec0, eps))
    results.append((f"deform_attn_backward fd check (max rel err {worst:.2e})",
                    worst <= 1e-4))

    worst = 0.0
    for case in range(10):
        scene = tda.synthetic.moving_blob_scene(seed=100 + case, speed_cells=2.0,
                                                cells=8, channels=4, frames=2)
        seq = tda.frame_sequence(scene)
        target = tda.synthetic.ground_truth_bev(scene, scene.num_frames - 1)
        # Random offsets keep sampling points off the bilinear kinks at
        # integer coordinates (where only a one-sided subgradient exists).
        params = tda.init_tda_params(np.random.default_rng(200 + case), 4,
                                     heads=2, points=2, zero_offset_init=False)
        vec0 = tda.tda_params_to_vector(params)

        def f(theta, seq=seq, target=target):
            p = tda.tda_params_from_vector(theta, 4, 2, 2)
            return tda.temporal_fuse_loss_grad(seq, target, p)

        worst = max(worst, grad_check(f, vec0, eps))
    results.append((f"TDA training loss fd check (max rel err {worst:.2e})",
                    worst <= 1e-4))
    return results


def _random_camera(rng):
    m = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(m)
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    ext = np.eye(4)
    ext[:3, :3] = q.T
    ext[:3, 3] = rng.normal(scale=3.0, size=3)
    return CameraModel(
        make_intrinsics(rng.uniform(20, 100), rng.uniform(20, 100),
                        rng.uniform(20, 44), rng.uniform(20, 44)),
        ext, width=64, height=64)


def check_geometry(seed=0):
    rng = np.random.default_rng(seed)
    results = []

    worst = 0.0
    count = 0
    while count < 100:
        cam = _random_camera(rng)
        p = rng.normal(scale=10.0, size=3)
        u, v, depth, _ = project_point(cam, p)
        if abs(depth) < 0.1:
            continue
        count += 1
        nu, nv, nd, _ = oracles.project_point_naive(cam, p)
        worst = max(worst, abs(u - nu), abs(v - nv), abs(depth - nd))
    results.append((f"project_point vs matrix-chain oracle (max err {worst:.2e})",
                    worst <= 1e-9))

    worst = 0.0
    for _ in range(20):
        a = EgoPose(*rng.normal(scale=5.0, size=3))
        b = EgoPose(*rng.normal(scale=5.0, size=3))
        c = EgoPose(*rng.normal(scale=5.0, size=3))
        ident = ego_motion_matrix(a, a)
        worst = max(worst, float(np.max(np.abs(ident - np.eye(3)))))
        inv = ego_motion_matrix(a, b) @ ego_motion_matrix(b, a)
        worst = max(worst, float(np.max(np.abs(inv - np.eye(3)))))
        comp = ego_motion_matrix(b, c) @ ego_motion_matrix(a, b)
        worst = max(worst, float(np.max(np.abs(comp - ego_motion_matrix(a, c)))))
    results.append((f"ego_motion identity/inverse/composition (max err {worst:.2e})",
                    worst <= 1e-12))

    spec = BevSpec(12, 10, 0.5, (0.0, 0.0), (1.0,))
    feat = BevFeature(spec, rng.normal(size=(12, 10, 3)))
    same = warp_bev(feat, np.eye(3))
    results.append(("warp_bev identity bit-exact",
                    np.array_equal(same.data, feat.data)))

    shift = np.eye(3)
    shift[0, 2] = spec.cell_size
    shifted = warp_bev(feat, shift)
    ok = np.array_equal(shifted.data[1:], feat.data[:-1]) \
        and np.all(shifted.data[0] == 0.0)
    results.append(("warp_bev one-cell translation matches shift", ok))
    return results


def check_properties(seed=0):
    rng = np.random.default_rng(seed)
    results = []

    v = rng.normal(size=9)
    s = softmax(v)
    ok = abs(s.sum() - 1.0) <= 1e-12 and np.all(s > 0)
    ok = ok and np.max(np.abs(softmax(v + 3.7) - s)) <= 1e-12
    results.append(("softmax normalization and shift invariance", ok))

    feat = rng.normal(size=(3, 6, 6))
    ok = True
    for _ in range(20):
        x = rng.uniform(0, 5)
        y = rng.uniform(0, 5)
        got = bilinear_sample(feat, x, y)
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        corners = feat[:, y0:min(y0 + 2, 6), x0:min(x0 + 2, 6)].reshape(3, -1)
        ok = ok and np.all(got <= corners.max(axis=1) + 1e-12)
        ok = ok and np.all(got >= corners.min(axis=1) - 1e-12)
    results.append(("bilinear_sample stays in corner hull", ok))

    ident = np.zeros((2, 2, 3, 3))
    ident[0, 0, 1, 1] = 1.0
    ident[1, 1, 1, 1] = 1.0
    inp = rng.normal(size=(2, 5, 5))
    from .tensorops import ConvParams
    ok = np.allclose(conv2d(inp, ConvParams(ident, np.zeros(2))), inp, atol=1e-15)
    results.append(("conv2d identity kernel is identity", ok))

    spec = BevSpec(16, 16, 0.5, (0.0, 0.0), (1.0,))
    feat = BevFeature(spec, np.abs(rng.normal(size=(16, 16, 2))))
    shift = np.eye(3)
    shift[0, 2] = 1.3
    warped = warp_bev(feat, shift)
    results.append(("warp_bev mass never grows",
                    float(warped.data.sum()) <= float(feat.data.sum()) + 1e-9))

    frames = tuple(BevFeature(spec, rng.normal(size=(16, 16, 2))) for _ in range(3))
    poses = (EgoPose(0, 0, 0), EgoPose(0.5, 0, 0), EgoPose(1.0, 0, 0))
    seq = tda.FrameSequence(frames, poses)
    out = tda.temporal_fuse(seq, tda.identity_residual_tda_params(2))
    results.append(("temporal_fuse residual identity",
                    np.array_equal(out.data, frames[-1].data)))

    params = init_deform_attn_params(rng, 4, heads=2, points=4)
    queries = rng.normal(size=(4, 4, 4))
    refs = rng.uniform(0.1, 0.9, size=(4, 4, 2))
    vmap = rng.normal(size=(4, 8, 8))
    a = deform_attn_grid(queries, refs, vmap, params)
    b = deform_attn_grid(queries, refs, vmap, params)
    results.append(("deform_attn_grid is deterministic", np.array_equal(a, b)))
    return results


SUITES = {
    "oracles": check_oracles,
    "gradients": check_gradients,
    "geometry": check_geometry,
    "properties": check_properties,
}


def run_suite(name, seed=0, out=None):
    """Run one suite (or 'all'); print per-check lines; return overall pass."""
    import sys
    out = out or sys.stdout
    if name == "all":
        names = list(SUITES)
    elif name in SUITES:
        names = [name]
    else:
        raise KeyError(name)
    all_ok = True
    for suite in names:
        for label, ok in SUITES[suite](seed):
            print(f"{'PASS' if ok else 'FAIL'} [{suite}] {label}", file=out)
            all_ok = all_ok and ok
    return all_ok
