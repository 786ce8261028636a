# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels: fused elementwise and row-wise loops.

Mirrors the call surface of `_ops_py`. Arrays are flattened to
contiguous float64 buffers; row-wise kernels treat the last axis as
the row. Each function single-pass fuses what the numpy fallback does
with several temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp, log as c_log, sqrt as c_sqrt, tanh as c_tanh

cnp.import_array()

cdef double GELU_C = c_sqrt(2.0 / np.pi)
cdef double GELU_A = 0.044715


cdef inline tuple _flat(object x):
    a = np.ascontiguousarray(x, dtype=np.float64)
    return a.reshape(-1), a.shape


cdef inline tuple _rows(object x):
    a = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t d = a.shape[a.ndim - 1]
    return a.reshape(-1, d), a.shape


def relu_fwd(x):
    f, shape = _flat(x)
    out = np.empty_like(f)
    cdef double[::1] xv = f
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = xv[i] if xv[i] > 0.0 else 0.0
    return out.reshape(shape)


def relu_bwd(y, g):
    fy, shape = _flat(y)
    fg, _ = _flat(g)
    out = np.empty_like(fy)
    cdef double[::1] yv = fy
    cdef double[::1] gv = fg
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] if yv[i] > 0.0 else 0.0
    return out.reshape(shape)


def gelu_fwd(x):
    f, shape = _flat(x)
    out = np.empty_like(f)
    cdef double[::1] xv = f
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v, t
    with nogil:
        for i in range(n):
            v = xv[i]
            t = c_tanh(GELU_C * (v + GELU_A * v * v * v))
            ov[i] = 0.5 * v * (1.0 + t)
    return out.reshape(shape)


def gelu_bwd(x, g):
    fx, shape = _flat(x)
    fg, _ = _flat(g)
    out = np.empty_like(fx)
    cdef double[::1] xv = fx
    cdef double[::1] gv = fg
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v, t, du
    with nogil:
        for i in range(n):
            v = xv[i]
            t = c_tanh(GELU_C * (v + GELU_A * v * v * v))
            du = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
            ov[i] = gv[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return out.reshape(shape)


def sigmoid_fwd(x):
    f, shape = _flat(x)
    out = np.empty_like(f)
    cdef double[::1] xv = f
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double v, e
    with nogil:
        for i in range(n):
            v = xv[i]
            if v >= 0.0:
                ov[i] = 1.0 / (1.0 + c_exp(-v))
            else:
                e = c_exp(v)
                ov[i] = e / (1.0 + e)
    return out.reshape(shape)


def sigmoid_bwd(y, g):
    fy, shape = _flat(y)
    fg, _ = _flat(g)
    out = np.empty_like(fy)
    cdef double[::1] yv = fy
    cdef double[::1] gv = fg
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] * yv[i] * (1.0 - yv[i])
    return out.reshape(shape)


def exp_fwd(x):
    f, shape = _flat(x)
    out = np.empty_like(f)
    cdef double[::1] xv = f
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_exp(xv[i])
    return out.reshape(shape)


def exp_bwd(y, g):
    fy, shape = _flat(y)
    fg, _ = _flat(g)
    out = np.empty_like(fy)
    cdef double[::1] yv = fy
    cdef double[::1] gv = fg
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = yv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] * yv[i]
    return out.reshape(shape)


def log_fwd(x):
    f, shape = _flat(x)
    out = np.empty_like(f)
    cdef double[::1] xv = f
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = c_log(xv[i])
    return out.reshape(shape)


def log_bwd(x, g):
    fx, shape = _flat(x)
    fg, _ = _flat(g)
    out = np.empty_like(fx)
    cdef double[::1] xv = fx
    cdef double[::1] gv = fg
    cdef double[::1] ov = out
    cdef Py_ssize_t i, n = xv.shape[0]
    with nogil:
        for i in range(n):
            ov[i] = gv[i] / xv[i]
    return out.reshape(shape)


def softmax_fwd(x):
    r, shape = _rows(x)
    out = np.empty_like(r)
    cdef double[:, ::1] xv = r
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, n = xv.shape[0], d = xv.shape[1]
    cdef double m, s
    with nogil:
        for i in range(n):
            m = xv[i, 0]
            for j in range(1, d):
                if xv[i, j] > m:
                    m = xv[i, j]
            s = 0.0
            for j in range(d):
                ov[i, j] = c_exp(xv[i, j] - m)
                s += ov[i, j]
            for j in range(d):
                ov[i, j] /= s
    return out.reshape(shape)


def softmax_bwd(y, g):
    ry, shape = _rows(y)
    rg, _ = _rows(g)
    out = np.empty_like(ry)
    cdef double[:, ::1] yv = ry
    cdef double[:, ::1] gv = rg
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, n = yv.shape[0], d = yv.shape[1]
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot += yv[i, j] * gv[i, j]
            for j in range(d):
                ov[i, j] = yv[i, j] * (gv[i, j] - dot)
    return out.reshape(shape)


def layernorm_fwd(x, double eps):
    r, shape = _rows(x)
    out = np.empty_like(r)
    rstd = np.empty(r.shape[0], dtype=np.float64)
    cdef double[:, ::1] xv = r
    cdef double[:, ::1] ov = out
    cdef double[::1] rv = rstd
    cdef Py_ssize_t i, j, n = xv.shape[0], d = xv.shape[1]
    cdef double mu, var, dv
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(d):
                mu += xv[i, j]
            mu /= d
            var = 0.0
            for j in range(d):
                dv = xv[i, j] - mu
                var += dv * dv
            var /= d
            rv[i] = 1.0 / c_sqrt(var + eps)
            for j in range(d):
                ov[i, j] = (xv[i, j] - mu) * rv[i]
    return out.reshape(shape), rstd.reshape(shape[:-1])


def layernorm_bwd(y, rstd, g):
    ry, shape = _rows(y)
    rg, _ = _rows(g)
    rs = np.ascontiguousarray(rstd, dtype=np.float64).reshape(-1)
    out = np.empty_like(ry)
    cdef double[:, ::1] yv = ry
    cdef double[:, ::1] gv = rg
    cdef double[::1] rv = rs
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, n = yv.shape[0], d = yv.shape[1]
    cdef double gm, gym
    with nogil:
        for i in range(n):
            gm = 0.0
            gym = 0.0
            for j in range(d):
                gm += gv[i, j]
                gym += gv[i, j] * yv[i, j]
            gm /= d
            gym /= d
            for j in range(d):
                ov[i, j] = rv[i] * (gv[i, j] - gm - yv[i, j] * gym)
    return out.reshape(shape)
