# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: dilated depthwise convolution (forward and both
gradients), the xoshiro256** block generator and the GELU forward.

Channels-last layout ``[B, H, W, C]``; every reduction accumulates in double.
"""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.stdlib cimport malloc, free
from libc.string cimport memset
from libc.stdint cimport uint64_t

cdef extern from "_gelu.h" nogil:
    void adanca_gelu_f32(const float *x, float *y, float *cdf, Py_ssize_t n)

cnp.import_array()


def dwconv_forward(floating[:, :, :, ::1] x, floating[:, :, ::1] k, Py_ssize_t dilation):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t K = k.shape[1], r = K // 2
    cdef Py_ssize_t b, y, xx, i, j, c, yy, xs
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((B, H, W, C), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef double* acc = <double*> malloc(C * sizeof(double))
    if acc == NULL:
        raise MemoryError()
    try:
        for b in range(B):
            for y in range(H):
                for xx in range(W):
                    memset(acc, 0, C * sizeof(double))
                    for i in range(K):
                        yy = y + (i - r) * dilation
                        if yy < 0 or yy >= H:
                            continue
                        for j in range(K):
                            xs = xx + (j - r) * dilation
                            if xs < 0 or xs >= W:
                                continue
                            for c in range(C):
                                acc[c] += <double> x[b, yy, xs, c] * <double> k[c, i, j]
                    for c in range(C):
                        out[b, y, xx, c] = <floating> acc[c]
    finally:
        free(acc)
    return out_arr


def dwconv_backward_input(floating[:, :, :, ::1] g, floating[:, :, ::1] k, Py_ssize_t dilation):
    # transpose of forward: gather with the spatially mirrored tap offsets
    cdef Py_ssize_t B = g.shape[0], H = g.shape[1], W = g.shape[2], C = g.shape[3]
    cdef Py_ssize_t K = k.shape[1], r = K // 2
    cdef Py_ssize_t b, y, xx, i, j, c, yy, xs
    dtype = np.float32 if floating is float else np.float64
    out_arr = np.empty((B, H, W, C), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    cdef double* acc = <double*> malloc(C * sizeof(double))
    if acc == NULL:
        raise MemoryError()
    try:
        for b in range(B):
            for y in range(H):
                for xx in range(W):
                    memset(acc, 0, C * sizeof(double))
                    for i in range(K):
                        yy = y - (i - r) * dilation
                        if yy < 0 or yy >= H:
                            continue
                        for j in range(K):
                            xs = xx - (j - r) * dilation
                            if xs < 0 or xs >= W:
                                continue
                            for c in range(C):
                                acc[c] += <double> g[b, yy, xs, c] * <double> k[c, i, j]
                    for c in range(C):
                        out[b, y, xx, c] = <floating> acc[c]
    finally:
        free(acc)
    return out_arr


def dwconv_backward_kernel(floating[:, :, :, ::1] x, floating[:, :, :, ::1] g,
                           Py_ssize_t K, Py_ssize_t dilation):
    cdef Py_ssize_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3]
    cdef Py_ssize_t r = K // 2
    cdef Py_ssize_t b, y, xx, i, j, c, yy, xs, base
    dtype = np.float32 if floating is float else np.float64
    cdef double* acc = <double*> malloc(C * K * K * sizeof(double))
    if acc == NULL:
        raise MemoryError()
    memset(acc, 0, C * K * K * sizeof(double))
    try:
        for b in range(B):
            for y in range(H):
                for xx in range(W):
                    for i in range(K):
                        yy = y + (i - r) * dilation
                        if yy < 0 or yy >= H:
                            continue
                        for j in range(K):
                            xs = xx + (j - r) * dilation
                            if xs < 0 or xs >= W:
                                continue
                            base = i * K + j
                            for c in range(C):
                                acc[c * K * K + base] += <double> g[b, y, xx, c] * <double> x[b, yy, xs, c]
        out = np.empty(C * K * K, dtype=np.float64)
        for c in range(C * K * K):
            out[c] = acc[c]
    finally:
        free(acc)
    return out.reshape(C, K, K).astype(dtype)


cdef inline uint64_t _rotl(uint64_t x, int s) nogil:
    return (x << s) | (x >> (64 - s))


def xoshiro_fill(cnp.uint64_t[::1] state, cnp.uint64_t[::1] out):
    """Advance the 4-word ``state`` in place, writing ``len(out)`` outputs."""
    cdef uint64_t s0 = state[0], s1 = state[1], s2 = state[2], s3 = state[3], t
    cdef Py_ssize_t n = out.shape[0], i
    with nogil:
        for i in range(n):
            out[i] = _rotl(s1 * 5, 7) * 9
            t = s1 << 17
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = _rotl(s3, 45)
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3


from libc.math cimport erf


def gelu_forward(floating[::1] x):
    """GELU ``x * Phi(x)`` over a flat array; returns ``(y, cdf)``.

    float32 goes through the vectorized rational erf, float64 through libm.
    """
    cdef Py_ssize_t n = x.shape[0], i
    cdef double v, c
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty(n, dtype=dtype)
    cdf_arr = np.empty(n, dtype=dtype)
    cdef floating[::1] y = y_arr
    cdef floating[::1] cdf = cdf_arr
    if n == 0:
        return y_arr, cdf_arr
    with nogil:
        if floating is float:
            adanca_gelu_f32(&x[0], &y[0], &cdf[0], n)
        else:
            for i in range(n):
                v = x[i]
                c = 0.5 * (1.0 + erf(v * 0.7071067811865476))
                cdf[i] = c
                y[i] = v * c
    return y_arr, cdf_arr


def gelu_backward(x, cdf, g):
    # exp is already SIMD in NumPy; a scalar loop here would be slower
    pdf = np.exp(-0.5 * x * x) * x.dtype.type(0.3989422804014327)
    return (g * (cdf + x * pdf)).astype(x.dtype, copy=False)
