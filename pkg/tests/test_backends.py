import numpy as np
import pytest

from bevalign import kernels

needs_compiled = pytest.mark.skipif(
    "cython" not in kernels.available_backends(),
    reason="compiled kernel backend not built")


def _inputs(seed=0, n=500):
    rng = np.random.default_rng(seed)
    feature = rng.normal(size=(5, 9, 7))
    xs = rng.uniform(-2, 9, size=n)
    ys = rng.uniform(-2, 11, size=n)
    gout = rng.normal(size=(n, 5))
    return feature, xs, ys, gout


def test_backend_selection_is_consistent():
    assert kernels.backend in ("python", "cython")
    assert "python" in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_python_backend_sample_shapes():
    feature, xs, ys, gout = _inputs()
    py = kernels.get_backend("python")
    out = py.sample_many(feature, xs, ys)
    assert out.shape == (xs.size, feature.shape[0])
    gf, gx, gy = py.sample_backward_many(feature, xs, ys, gout)
    assert gf.shape == feature.shape
    assert gx.shape == xs.shape and gy.shape == ys.shape


@needs_compiled
def test_sample_many_backend_parity():
    feature, xs, ys, _ = _inputs(1)
    py = kernels.get_backend("python").sample_many(feature, xs, ys)
    cy = kernels.get_backend("cython").sample_many(feature, xs, ys)
    assert np.max(np.abs(py - cy)) <= 1e-13


@needs_compiled
def test_sample_backward_backend_parity():
    feature, xs, ys, gout = _inputs(2)
    pf, px, py_ = kernels.get_backend("python").sample_backward_many(
        feature, xs, ys, gout)
    cf, cx, cy_ = kernels.get_backend("cython").sample_backward_many(
        feature, xs, ys, gout)
    assert np.max(np.abs(pf - cf)) <= 1e-13
    assert np.max(np.abs(px - cx)) <= 1e-13
    assert np.max(np.abs(py_ - cy_)) <= 1e-13


@needs_compiled
def test_scatter_backend_parity():
    rng = np.random.default_rng(3)
    vals = rng.normal(size=(300, 4))
    xs = rng.uniform(-1, 8, size=300)
    ys = rng.uniform(-1, 6, size=300)
    py = kernels.get_backend("python").scatter_many(vals, xs, ys, 6, 8)
    cy = kernels.get_backend("cython").scatter_many(vals, xs, ys, 6, 8)
    assert np.max(np.abs(py - cy)) <= 1e-13


@needs_compiled
def test_conv_backend_parity():
    rng = np.random.default_rng(4)
    inp = rng.normal(size=(6, 12, 11))
    kernel = rng.normal(size=(3, 6, 3, 3))
    bias = rng.normal(size=3)
    py = kernels.get_backend("python").conv2d_3x3(inp, kernel, bias)
    cy = kernels.get_backend("cython").conv2d_3x3(inp, kernel, bias)
    assert np.max(np.abs(py - cy)) <= 1e-12


def test_scatter_is_transpose_of_sample():
    # <sample(F, pts), V> == <F, scatter(V, pts)> for any F, V.
    rng = np.random.default_rng(5)
    feature = rng.normal(size=(3, 7, 8))
    xs = rng.uniform(-1, 9, size=100)
    ys = rng.uniform(-1, 8, size=100)
    vals = rng.normal(size=(100, 3))
    for name in kernels.available_backends():
        mod = kernels.get_backend(name)
        lhs = float((mod.sample_many(feature, xs, ys) * vals).sum())
        scattered = mod.scatter_many(vals, xs, ys, 7, 8)
        rhs = float((feature * scattered).sum())
        assert abs(lhs - rhs) <= 1e-10
