# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels (see _kernels_np for the contract)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

IMPL = "cython"


cdef inline double _bump_s2(double s2) nogil:
    if s2 >= 1.0:
        return 0.0
    return exp(1.0 / (s2 - 1.0))


cdef inline double _bump_dr_over_r(double s2) nogil:
    cdef double t
    if s2 >= 1.0:
        return 0.0
    t = s2 - 1.0
    return -2.0 * exp(1.0 / t) / (t * t)


def bump_raw_s2(s2):
    s2_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(s2, dtype=np.float64)))
    shape = s2_arr.shape
    cdef double[::1] flat = s2_arr.reshape(-1)
    out = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        o[i] = _bump_s2(flat[i])
    return out.reshape(shape)


def bump_raw_dr_over_r(s2):
    s2_arr = np.ascontiguousarray(np.atleast_1d(np.asarray(s2, dtype=np.float64)))
    shape = s2_arr.shape
    cdef double[::1] flat = s2_arr.reshape(-1)
    out = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        o[i] = _bump_dr_over_r(flat[i])
    return out.reshape(shape)


def segment_distances(x, a, u, L):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = av.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, t, cx, cy, cz
    with nogil:
        for i in range(n):
            for j in range(m):
                dx = xv[i, 0] - av[j, 0]
                dy = xv[i, 1] - av[j, 1]
                dz = xv[i, 2] - av[j, 2]
                t = dx * uv[j, 0] + dy * uv[j, 1] + dz * uv[j, 2]
                if t < 0.0:
                    t = 0.0
                elif t > Lv[j]:
                    t = Lv[j]
                cx = dx - t * uv[j, 0]
                cy = dy - t * uv[j, 1]
                cz = dz - t * uv[j, 2]
                ov[i, j] = sqrt(cx * cx + cy * cy + cz * cz)
    return out


def min_segment_distance(x, a, u, L):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = av.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, t, cx, cy, cz, d2, best
    with nogil:
        for i in range(n):
            best = 1e300
            for j in range(m):
                dx = xv[i, 0] - av[j, 0]
                dy = xv[i, 1] - av[j, 1]
                dz = xv[i, 2] - av[j, 2]
                t = dx * uv[j, 0] + dy * uv[j, 1] + dz * uv[j, 2]
                if t < 0.0:
                    t = 0.0
                elif t > Lv[j]:
                    t = Lv[j]
                cx = dx - t * uv[j, 0]
                cy = dy - t * uv[j, 1]
                cz = dz - t * uv[j, 2]
                d2 = cx * cx + cy * cy + cz * cz
                if d2 < best:
                    best = d2
            ov[i] = sqrt(best)
    return out


def line_conv(x, a, u, L, double eps, nodes, wts, bint want_grad):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[::1] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef double[::1] gx = np.ascontiguousarray(nodes, dtype=np.float64)
    cdef double[::1] gw = np.ascontiguousarray(wts, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = av.shape[0], K = gx.shape[0]
    S = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] Sv = S
    G = np.zeros((n, m, 3), dtype=np.float64) if want_grad else None
    cdef double[:, :, ::1] Gv = G if want_grad else np.zeros((1, 1, 3))
    cdef Py_ssize_t i, j, k
    cdef double dx, dy, dz, b_lin, d2, h2, hc, t1, t2, mid, half
    cdef double tk, s2, val, acc, accA, accB, g, inv_eps3, inv_eps2
    inv_eps3 = 1.0 / (eps * eps * eps)
    inv_eps2 = 1.0 / (eps * eps)
    with nogil:
        for i in range(n):
            for j in range(m):
                dx = xv[i, 0] - av[j, 0]
                dy = xv[i, 1] - av[j, 1]
                dz = xv[i, 2] - av[j, 2]
                b_lin = dx * uv[j, 0] + dy * uv[j, 1] + dz * uv[j, 2]
                d2 = dx * dx + dy * dy + dz * dz - b_lin * b_lin
                if d2 < 0.0:
                    d2 = 0.0
                h2 = eps * eps - d2
                if h2 <= 0.0:
                    continue
                hc = sqrt(h2)
                t1 = b_lin - hc
                t2 = b_lin + hc
                if t1 < 0.0:
                    t1 = 0.0
                if t2 > Lv[j]:
                    t2 = Lv[j]
                if t2 <= t1:
                    continue
                mid = 0.5 * (t1 + t2)
                half = 0.5 * (t2 - t1)
                acc = 0.0
                accA = 0.0
                accB = 0.0
                for k in range(K):
                    tk = mid + half * gx[k]
                    s2 = (d2 + (tk - b_lin) * (tk - b_lin)) * inv_eps2
                    val = _bump_s2(s2)
                    acc += gw[k] * val
                    if want_grad:
                        g = _bump_dr_over_r(s2) * inv_eps2
                        accA += gw[k] * g
                        accB -= gw[k] * g * tk
                Sv[i, j] = acc * half * inv_eps3
                if want_grad:
                    accA *= half * inv_eps3
                    accB *= half * inv_eps3
                    Gv[i, j, 0] = accA * dx + accB * uv[j, 0]
                    Gv[i, j, 1] = accA * dy + accB * uv[j, 1]
                    Gv[i, j, 2] = accA * dz + accB * uv[j, 2]
    if want_grad:
        return S, G
    return S
