# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bilinear sampling / convolution kernels.

Same contracts as ``_pykernels``; accumulation order matches the numpy
fallback so the two backends agree to the last bit on typical inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()

BACKEND = "cython"


cdef inline double _at(const double[:, :, ::1] f, Py_ssize_t c,
                       Py_ssize_t y, Py_ssize_t x, Py_ssize_t H, Py_ssize_t W) noexcept nogil:
    if x < 0 or x >= W or y < 0 or y >= H:
        return 0.0
    return f[c, y, x]


def sample_many(const double[:, :, ::1] feature, xs, ys):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ya = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t C = feature.shape[0]
    cdef Py_ssize_t H = feature.shape[1]
    cdef Py_ssize_t W = feature.shape[2]
    cdef Py_ssize_t N = xa.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((N, C))
    cdef double[:, ::1] o = out
    cdef double[::1] xv = xa
    cdef double[::1] yv = ya
    cdef Py_ssize_t i, c, x0, y0
    cdef double x, y, fx, fy, wx, wy, w00, w10, w01, w11
    for i in range(N):
        x = xv[i]
        y = yv[i]
        fx = floor(x)
        fy = floor(y)
        x0 = <Py_ssize_t>fx
        y0 = <Py_ssize_t>fy
        wx = x - fx
        wy = y - fy
        w00 = (1.0 - wx) * (1.0 - wy)
        w10 = wx * (1.0 - wy)
        w01 = (1.0 - wx) * wy
        w11 = wx * wy
        for c in range(C):
            o[i, c] = (w00 * _at(feature, c, y0, x0, H, W)
                       + w10 * _at(feature, c, y0, x0 + 1, H, W)) \
                      + w01 * _at(feature, c, y0 + 1, x0, H, W) \
                      + w11 * _at(feature, c, y0 + 1, x0 + 1, H, W)
    return out


def sample_backward_many(const double[:, :, ::1] feature, xs, ys, grad_out):
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ya = np.ascontiguousarray(ys, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] ga = np.ascontiguousarray(grad_out, dtype=np.float64)
    cdef Py_ssize_t C = feature.shape[0]
    cdef Py_ssize_t H = feature.shape[1]
    cdef Py_ssize_t W = feature.shape[2]
    cdef Py_ssize_t N = xa.shape[0]
    cdef cnp.ndarray[double, ndim=3] gf = np.zeros((C, H, W))
    cdef cnp.ndarray[double, ndim=1] gx = np.zeros(N)
    cdef cnp.ndarray[double, ndim=1] gy = np.zeros(N)
    cdef double[:, :, ::1] gfv = gf
    cdef double[:, ::1] gv = ga
    cdef double[::1] xv = xa
    cdef double[::1] yv = ya
    cdef double[::1] gxv = gx
    cdef double[::1] gyv = gy
    cdef Py_ssize_t i, c, x0, y0
    cdef double x, y, fx, fy, wx, wy, g, v00, v10, v01, v11, sx, sy
    for i in range(N):
        x = xv[i]
        y = yv[i]
        fx = floor(x)
        fy = floor(y)
        x0 = <Py_ssize_t>fx
        y0 = <Py_ssize_t>fy
        wx = x - fx
        wy = y - fy
        sx = 0.0
        sy = 0.0
        for c in range(C):
            g = gv[i, c]
            v00 = _at(feature, c, y0, x0, H, W)
            v10 = _at(feature, c, y0, x0 + 1, H, W)
            v01 = _at(feature, c, y0 + 1, x0, H, W)
            v11 = _at(feature, c, y0 + 1, x0 + 1, H, W)
            if 0 <= x0 < W and 0 <= y0 < H:
                gfv[c, y0, x0] += (1.0 - wx) * (1.0 - wy) * g
            if 0 <= x0 + 1 < W and 0 <= y0 < H:
                gfv[c, y0, x0 + 1] += wx * (1.0 - wy) * g
            if 0 <= x0 < W and 0 <= y0 + 1 < H:
                gfv[c, y0 + 1, x0] += (1.0 - wx) * wy * g
            if 0 <= x0 + 1 < W and 0 <= y0 + 1 < H:
                gfv[c, y0 + 1, x0 + 1] += wx * wy * g
            sx += g * ((1.0 - wy) * (v10 - v00) + wy * (v11 - v01))
            sy += g * ((1.0 - wx) * (v01 - v00) + wx * (v11 - v10))
        gxv[i] = sx
        gyv[i] = sy
    return gf, gx, gy


def scatter_many(grad_out, xs, ys, Py_ssize_t height, Py_ssize_t width):
    cdef cnp.ndarray[double, ndim=2] ga = np.ascontiguousarray(grad_out, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ya = np.ascontiguousarray(ys, dtype=np.float64)
    cdef Py_ssize_t N = xa.shape[0]
    cdef Py_ssize_t C = ga.shape[1]
    cdef cnp.ndarray[double, ndim=3] gf = np.zeros((C, height, width))
    cdef double[:, :, ::1] gfv = gf
    cdef double[:, ::1] gv = ga
    cdef double[::1] xv = xa
    cdef double[::1] yv = ya
    cdef Py_ssize_t i, c, x0, y0
    cdef double x, y, fx, fy, wx, wy, g
    for i in range(N):
        x = xv[i]
        y = yv[i]
        fx = floor(x)
        fy = floor(y)
        x0 = <Py_ssize_t>fx
        y0 = <Py_ssize_t>fy
        wx = x - fx
        wy = y - fy
        for c in range(C):
            g = gv[i, c]
            if 0 <= x0 < width and 0 <= y0 < height:
                gfv[c, y0, x0] += (1.0 - wx) * (1.0 - wy) * g
            if 0 <= x0 + 1 < width and 0 <= y0 < height:
                gfv[c, y0, x0 + 1] += wx * (1.0 - wy) * g
            if 0 <= x0 < width and 0 <= y0 + 1 < height:
                gfv[c, y0 + 1, x0] += (1.0 - wx) * wy * g
            if 0 <= x0 + 1 < width and 0 <= y0 + 1 < height:
                gfv[c, y0 + 1, x0 + 1] += wx * wy * g
    return gf


def conv2d_3x3(const double[:, :, ::1] inp, const double[:, :, :, ::1] kernel,
               const double[::1] bias):
    cdef Py_ssize_t c_in = inp.shape[0]
    cdef Py_ssize_t H = inp.shape[1]
    cdef Py_ssize_t W = inp.shape[2]
    cdef Py_ssize_t c_out = kernel.shape[0]
    cdef cnp.ndarray[double, ndim=3] out = np.empty((c_out, H, W))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t co, ci, y, x, dy, dx, sy, sx
    cdef double acc
    for co in range(c_out):
        for y in range(H):
            for x in range(W):
                acc = bias[co]
                for dy in range(3):
                    sy = y + dy - 1
                    if sy < 0 or sy >= H:
                        continue
                    for dx in range(3):
                        sx = x + dx - 1
                        if sx < 0 or sx >= W:
                            continue
                        for ci in range(c_in):
                            acc += kernel[co, ci, dy, dx] * inp[ci, sy, sx]
                o[co, y, x] = acc
    return out
