# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled im2col / col2im for the convolution lowering.

Column layout is ``(N, C*kh*kw, Ho*Wo)`` with row index ``(c*kh + i)*kw + j``.
Padding is handled inline, so no padded copy of the input is made.
"""
import numpy as np
from libc.string cimport memcpy, memset

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _lo(Py_ssize_t j, Py_ssize_t padding, Py_ssize_t stride, Py_ssize_t Wo) noexcept nogil:
    # first ox with ox*stride + j - padding >= 0
    cdef Py_ssize_t d = padding - j
    if d <= 0:
        return 0
    d = (d + stride - 1) // stride
    return d if d < Wo else Wo


cdef inline Py_ssize_t _hi(Py_ssize_t j, Py_ssize_t padding, Py_ssize_t stride,
                           Py_ssize_t W, Py_ssize_t Wo) noexcept nogil:
    # one past the last ox with ox*stride + j - padding < W
    cdef Py_ssize_t d = W + padding - j
    if d <= 0:
        return 0
    d = (d + stride - 1) // stride
    return d if d < Wo else Wo


def _im2col(real[:, :, :, ::1] x, real[:, :, ::1] cols,
            int kh, int kw, int stride, int padding):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t n, c, i, j, oy, ox, iy, lo, hi
    cdef real *src
    cdef real *dst
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        dst = &cols[n, (c * kh + i) * kw + j, 0]
                        lo = _lo(j, padding, stride, Wo)
                        hi = _hi(j, padding, stride, W, Wo)
                        for oy in range(Ho):
                            iy = oy * stride + i - padding
                            if iy < 0 or iy >= H or hi <= lo:
                                memset(dst, 0, Wo * sizeof(real))
                            else:
                                src = &x[n, c, iy, 0]
                                if lo > 0:
                                    memset(dst, 0, lo * sizeof(real))
                                if stride == 1:
                                    memcpy(dst + lo, src + lo + j - padding, (hi - lo) * sizeof(real))
                                else:
                                    for ox in range(lo, hi):
                                        dst[ox] = src[ox * stride + j - padding]
                                if hi < Wo:
                                    memset(dst + hi, 0, (Wo - hi) * sizeof(real))
                            dst += Wo


def _col2im(real[:, :, ::1] cols, real[:, :, :, ::1] out,
            int kh, int kw, int stride, int padding):
    # fixed (c, i, j, oy, ox) nesting: accumulation order is deterministic
    cdef Py_ssize_t N = out.shape[0], C = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t Ho = (H + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t Wo = (W + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t n, c, i, j, oy, ox, iy, lo, hi, off
    cdef real *src
    cdef real *dst
    with nogil:
        for n in range(N):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        src = &cols[n, (c * kh + i) * kw + j, 0]
                        lo = _lo(j, padding, stride, Wo)
                        hi = _hi(j, padding, stride, W, Wo)
                        off = j - padding
                        for oy in range(Ho):
                            iy = oy * stride + i - padding
                            if iy >= 0 and iy < H:
                                dst = &out[n, c, iy, 0]
                                if stride == 1:
                                    for ox in range(lo, hi):
                                        dst[ox + off] += src[ox]
                                else:
                                    for ox in range(lo, hi):
                                        dst[ox * stride + off] += src[ox]
                            src += Wo


def im2col(x, int kh, int kw, int stride, int padding):
    x = np.ascontiguousarray(x)
    N, C, H, W = x.shape
    Ho = (H + 2 * padding - kh) // stride + 1
    Wo = (W + 2 * padding - kw) // stride + 1
    cols = np.empty((N, C * kh * kw, Ho * Wo), dtype=x.dtype)
    _im2col(x, cols, kh, kw, stride, padding)
    return cols


def col2im(cols, shape, int kh, int kw, int stride, int padding):
    cols = np.ascontiguousarray(cols)
    out = np.zeros(shape, dtype=cols.dtype)
    _col2im(cols, out, kh, kw, stride, padding)
    return out
