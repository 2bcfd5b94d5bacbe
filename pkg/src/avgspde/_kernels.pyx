# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np

from libc.math cimport cos, log, sin, sqrt, M_PI
from libc.stdint cimport uint32_t, uint64_t

NAME = "compiled"

LINEAR_ROWS = ("ex", "wx", "sx", "ey", "wy", "sy", "a", "b", "f0", "g", "c", "g0", "abar", "fbar0")

cdef double TWO_M53 = 1.0 / 9007199254740992.0


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t t0, t1, t2, t3
    cdef int r
    for r in range(10):
        if r:
            k0 = k0 + <uint32_t>0x9E3779B9U
            k1 = k1 + <uint32_t>0xBB67AE85U
        p0 = <uint64_t>0xD2511F53U * c[0]
        p1 = <uint64_t>0xCD9E8D57U * c[2]
        t0 = <uint32_t>(p1 >> 32) ^ c[1] ^ k0
        t1 = <uint32_t>p1
        t2 = <uint32_t>(p0 >> 32) ^ c[3] ^ k1
        t3 = <uint32_t>p0
        c[0] = t0
        c[1] = t1
        c[2] = t2
        c[3] = t3


cdef inline void _pair(const uint32_t* key, uint64_t block, double* z) noexcept nogil:
    cdef uint32_t c[4]
    cdef uint64_t ua, ub
    cdef double u1, u2, r, th
    c[0] = <uint32_t>(block & 0xFFFFFFFFULL)
    c[1] = <uint32_t>(block >> 32)
    c[2] = key[2]
    c[3] = key[3]
    _philox(c, key[0], key[1])
    ua = ((<uint64_t>c[0] << 32) | c[1]) >> 11
    ub = ((<uint64_t>c[2] << 32) | c[3]) >> 11
    u1 = (<double>ua + 0.5) * TWO_M53
    u2 = (<double>ub + 0.5) * TWO_M53
    r = sqrt(-2.0 * log(u1))
    th = 2.0 * M_PI * u2
    z[0] = r * cos(th)
    z[1] = r * sin(th)


cdef inline void _fill(const uint32_t* key, uint64_t start, Py_ssize_t count, double* out) noexcept nogil:
    cdef double z[2]
    cdef Py_ssize_t i
    cdef uint64_t idx
    for i in range(count):
        idx = start + i
        if i == 0 or (idx & 1) == 0:
            _pair(key, idx >> 1, z)
        out[i] = z[idx & 1]


def philox4x32(ctr, key):
    cdef uint32_t c[4]
    for i in range(4):
        c[i] = <uint32_t>(int(ctr[i]) & 0xFFFFFFFF)
    _philox(c, <uint32_t>(int(key[0]) & 0xFFFFFFFF), <uint32_t>(int(key[1]) & 0xFFFFFFFF))
    return (int(c[0]), int(c[1]), int(c[2]), int(c[3]))


def normals(keys, start, Py_ssize_t count):
    cdef uint32_t[:, ::1] kv = np.ascontiguousarray(keys, dtype=np.uint32)
    cdef Py_ssize_t M = kv.shape[0]
    out = np.empty((M, max(count, 0)))
    cdef double[:, ::1] ov = out
    cdef uint64_t s = start
    cdef Py_ssize_t m
    if count <= 0:
        return out
    with nogil:
        for m in range(M):
            _fill(&kv[m, 0], s, count, &ov[m, 0])
    return out


def linear_paths(double[:, ::1] x, double[:, ::1] y, double[:, ::1] xbar,
                 keys1, keys2, coef, step0, long nsteps, bint coupled, bint averaged):
    cdef uint32_t[:, ::1] k1 = np.ascontiguousarray(keys1, dtype=np.uint32)
    cdef uint32_t[:, ::1] k2 = np.ascontiguousarray(keys2, dtype=np.uint32)
    cdef double[:, ::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t M = x.shape[0], n = x.shape[1]
    cdef Py_ssize_t m, k
    cdef long j
    cdef uint64_t s0 = step0
    cdef uint64_t base
    cdef double xk, yk, Fk, Gk
    z1_arr = np.empty(n)
    z2_arr = np.empty(n)
    cdef double[::1] z1 = z1_arr
    cdef double[::1] z2 = z2_arr
    if n == 0 or M == 0:
        return
    with nogil:
        for m in range(M):
            for j in range(nsteps):
                base = (s0 + <uint64_t>j) * <uint64_t>n
                _fill(&k1[m, 0], base, n, &z1[0])
                if coupled:
                    _fill(&k2[m, 0], base, n, &z2[0])
                    for k in range(n):
                        xk = x[m, k]
                        yk = y[m, k]
                        Fk = cf[6, k] * xk + cf[7, k] * yk + cf[8, k]
                        Gk = cf[9, k] * xk - cf[10, k] * yk + cf[11, k]
                        x[m, k] = cf[0, k] * xk + cf[1, k] * Fk + cf[2, k] * z1[k]
                        y[m, k] = cf[3, k] * yk + cf[4, k] * Gk + cf[5, k] * z2[k]
                if averaged:
                    for k in range(n):
                        xk = xbar[m, k]
                        xbar[m, k] = cf[0, k] * xk + cf[1, k] * (cf[12, k] * xk + cf[13, k]) + cf[2, k] * z1[k]


cdef inline void _rhs(const double* b, const double* f, const double* d, const double* z, double* out) noexcept nogil:
    out[0] = b[0] * z[0] + b[1] * z[1] + f[0]
    out[1] = b[2] * z[0] + b[3] * z[1] + f[1]
    out[2] = 2.0 * (b[0] * z[2] + b[1] * z[3]) + d[0]
    out[3] = b[2] * z[2] + (b[0] + b[3]) * z[3] + b[1] * z[4]
    out[4] = 2.0 * (b[2] * z[3] + b[3] * z[4]) + d[1]


def rk4_moments(B, f, D, m0, nsteps, double T):
    cdef double[:, ::1] Bv = np.ascontiguousarray(B, dtype=np.float64)
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef double[:, ::1] Dv = np.ascontiguousarray(D, dtype=np.float64)
    cdef double[:, ::1] mv = np.ascontiguousarray(m0, dtype=np.float64)
    cdef long[::1] Nv = np.ascontiguousarray(nsteps, dtype=np.int_)
    cdef Py_ssize_t nm = Bv.shape[0]
    out = np.empty((nm, 5))
    cdef double[:, ::1] ov = out
    cdef double z[5]
    cdef double s[5]
    cdef double k1[5]
    cdef double k2[5]
    cdef double k3[5]
    cdef double k4[5]
    cdef double h
    cdef Py_ssize_t k, i
    cdef long j
    with nogil:
        for k in range(nm):
            h = T / Nv[k]
            z[0] = mv[k, 0]
            z[1] = mv[k, 1]
            z[2] = 0.0
            z[3] = 0.0
            z[4] = 0.0
            for j in range(Nv[k]):
                _rhs(&Bv[k, 0], &fv[k, 0], &Dv[k, 0], z, k1)
                for i in range(5):
                    s[i] = z[i] + 0.5 * h * k1[i]
                _rhs(&Bv[k, 0], &fv[k, 0], &Dv[k, 0], s, k2)
                for i in range(5):
                    s[i] = z[i] + 0.5 * h * k2[i]
                _rhs(&Bv[k, 0], &fv[k, 0], &Dv[k, 0], s, k3)
                for i in range(5):
                    s[i] = z[i] + h * k3[i]
                _rhs(&Bv[k, 0], &fv[k, 0], &Dv[k, 0], s, k4)
                for i in range(5):
                    z[i] = z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(5):
                ov[k, i] = z[i]
    return out
