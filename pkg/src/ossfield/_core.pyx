# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every function here has a numpy twin in :mod:`ossfield._fallback` with the
same signature and semantics; :mod:`ossfield.kernels` picks one at import.
"""

import numpy as np

from libc.math cimport (cos, exp, fabs, frexp, log, pow, sin, sqrt, tan,
                        isfinite, M_PI)
from libc.stdlib cimport free, malloc
from libc.stdint cimport uint64_t

cdef double THETA13 = 5.371920351148152
cdef double[14] B13 = [64764752532480000.0, 32382376266240000.0,
                       7771770303897600.0, 1187353796428800.0,
                       129060195264000.0, 10559470521600.0, 670442572800.0,
                       33522128640.0, 1323241920.0, 40840800.0, 960960.0,
                       16380.0, 182.0, 1.0]
cdef double ANGLE_GUARD = 1e-12
cdef double TWO_M52 = 1.0 / 4503599627370496.0


cdef inline void _matmul(int n, double* a, double* b, double* out) noexcept nogil:
    cdef int i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc = acc + a[i * n + k] * b[k * n + j]
            out[i * n + j] = acc


cdef int _solve(int n, double* lhs, double* rhs, int* piv) noexcept nogil:
    """In-place LU with partial pivoting; rhs (n x n) is overwritten by lhs^-1 rhs."""
    cdef int i, j, k, p
    cdef double best, tmp, f
    for k in range(n):
        p = k
        best = fabs(lhs[k * n + k])
        for i in range(k + 1, n):
            if fabs(lhs[i * n + k]) > best:
                best = fabs(lhs[i * n + k])
                p = i
        if best == 0.0:
            return -1
        if p != k:
            for j in range(n):
                tmp = lhs[k * n + j]
                lhs[k * n + j] = lhs[p * n + j]
                lhs[p * n + j] = tmp
                tmp = rhs[k * n + j]
                rhs[k * n + j] = rhs[p * n + j]
                rhs[p * n + j] = tmp
        for i in range(k + 1, n):
            f = lhs[i * n + k] / lhs[k * n + k]
            if f != 0.0:
                for j in range(k, n):
                    lhs[i * n + j] = lhs[i * n + j] - f * lhs[k * n + j]
                for j in range(n):
                    rhs[i * n + j] = rhs[i * n + j] - f * rhs[k * n + j]
    for k in range(n - 1, -1, -1):
        for j in range(n):
            tmp = rhs[k * n + j]
            for i in range(k + 1, n):
                tmp = tmp - lhs[k * n + i] * rhs[i * n + j]
            rhs[k * n + j] = tmp / lhs[k * n + k]
    return 0


cdef int _expm_one(int n, const double* a, double* out, double* work,
                   int* piv) noexcept nogil:
    cdef int nn = n * n
    cdef double* A = work
    cdef double* A2 = work + nn
    cdef double* A4 = work + 2 * nn
    cdef double* A6 = work + 3 * nn
    cdef double* U = work + 4 * nn
    cdef double* V = work + 5 * nn
    cdef double* T = work + 6 * nn
    cdef double* L = work + 7 * nn
    cdef int i, j, s, e
    cdef double norm1, col, scale
    norm1 = 0.0
    for j in range(n):
        col = 0.0
        for i in range(n):
            col = col + fabs(a[i * n + j])
        if col > norm1:
            norm1 = col
    s = 0
    if norm1 > THETA13:
        frexp(norm1 / THETA13, &e)
        s = e
    scale = 1.0
    for i in range(s):
        scale = scale * 0.5
    for i in range(nn):
        A[i] = a[i] * scale
    _matmul(n, A, A, A2)
    _matmul(n, A2, A2, A4)
    _matmul(n, A4, A2, A6)
    for i in range(nn):
        T[i] = B13[13] * A6[i] + B13[11] * A4[i] + B13[9] * A2[i]
    _matmul(n, A6, T, U)
    for i in range(nn):
        U[i] = U[i] + B13[7] * A6[i] + B13[5] * A4[i] + B13[3] * A2[i]
    for i in range(n):
        U[i * n + i] = U[i * n + i] + B13[1]
    _matmul(n, A, U, T)
    for i in range(nn):
        U[i] = T[i]
    for i in range(nn):
        T[i] = B13[12] * A6[i] + B13[10] * A4[i] + B13[8] * A2[i]
    _matmul(n, A6, T, V)
    for i in range(nn):
        V[i] = V[i] + B13[6] * A6[i] + B13[4] * A4[i] + B13[2] * A2[i]
    for i in range(n):
        V[i * n + i] = V[i * n + i] + B13[0]
    for i in range(nn):
        L[i] = V[i] - U[i]
        out[i] = V[i] + U[i]
    if _solve(n, L, out, piv) != 0:
        return -1
    for j in range(s):
        _matmul(n, out, out, T)
        for i in range(nn):
            out[i] = T[i]
    for i in range(nn):
        if not isfinite(out[i]):
            return -2
    return 0


def expm_batch(const double[:, :, ::1] a):
    """exp of each matrix in a C-contiguous (N, n, n) stack; Pade-13 with scaling and squaring."""
    cdef Py_ssize_t N = a.shape[0]
    cdef int n = <int>a.shape[1]
    out_arr = np.empty((N, n, n), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double* work = <double*>malloc(8 * n * n * sizeof(double))
    cdef int* piv = <int*>malloc(n * sizeof(int))
    cdef Py_ssize_t k
    cdef int status = 0
    try:
        with nogil:
            for k in range(N):
                status = _expm_one(n, &a[k, 0, 0], &out[k, 0, 0], work, piv)
                if status != 0:
                    break
    finally:
        free(work)
        free(piv)
    if status == -2:
        raise OverflowError("exp overflow")
    if status == -1:
        raise FloatingPointError("singular Pade denominator")
    return out_arr


def radial_norm_batch(const double[:, :, ::1] mats, const double[::1] weights,
                      const double[:, ::1] x):
    """sum_k weights[k] * |mats[k] @ x_i| for every row x_i."""
    cdef Py_ssize_t K = mats.shape[0]
    cdef int d = <int>mats.shape[1]
    cdef Py_ssize_t N = x.shape[0]
    out_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef int r, c
    cdef double acc, comp, sq
    with nogil:
        for i in range(N):
            acc = 0.0
            for k in range(K):
                sq = 0.0
                for r in range(d):
                    comp = 0.0
                    for c in range(d):
                        comp = comp + mats[k, r, c] * x[i, c]
                    sq = sq + comp * comp
                acc = acc + weights[k] * sqrt(sq)
            out[i] = acc
    return out_arr


cdef inline double _unit(uint64_t raw) noexcept nogil:
    return (<double>(raw >> 12) + 0.5) * TWO_M52


def symmetric_stable_from_raw(double alpha, const uint64_t[:, ::1] raw):
    """Chambers-Mallows-Stuck draws with CF exp(-|t|^alpha) from raw[:, 0:2]."""
    cdef Py_ssize_t N = raw.shape[0]
    out_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double v, w, u1, u2
    cdef double lo = -M_PI / 2 + ANGLE_GUARD
    cdef double hi = M_PI / 2 - ANGLE_GUARD
    with nogil:
        for i in range(N):
            u1 = _unit(raw[i, 0])
            u2 = _unit(raw[i, 1])
            if alpha == 2.0:
                out[i] = 2.0 * sqrt(-log(u1)) * sin(2.0 * M_PI * u2)
                continue
            v = M_PI * (u1 - 0.5)
            if v < lo:
                v = lo
            elif v > hi:
                v = hi
            if alpha == 1.0:
                out[i] = tan(v)
                continue
            w = -log(u2)
            out[i] = (sin(alpha * v) / pow(cos(v), 1.0 / alpha)
                      * pow(cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha))
    return out_arr


cdef inline double _kanter(double a, double u, double w) noexcept nogil:
    cdef double pu
    if u < ANGLE_GUARD:
        u = ANGLE_GUARD
    elif u > 1.0 - ANGLE_GUARD:
        u = 1.0 - ANGLE_GUARD
    pu = M_PI * u
    return (sin(a * pu) / pow(sin(pu), 1.0 / a)
            * pow(sin((1.0 - a) * pu) / w, (1.0 - a) / a))


def positive_stable_from_raw(double a, const uint64_t[:, ::1] raw):
    """Kanter draws with Laplace transform exp(-s^a), 0 < a < 1, from raw[:, 0:2]."""
    cdef Py_ssize_t N = raw.shape[0]
    out_arr = np.empty(N, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(N):
            out[i] = _kanter(a, _unit(raw[i, 0]), -log(_unit(raw[i, 1])))
    return out_arr


def isotropic_from_raw(double alpha, double kappa, const uint64_t[:, ::1] raw,
                       const double[::1] scales, int m):
    """Isotropic SaS vectors, CF exp(-scale^alpha |t|^alpha), one per row of raw.

    Row layout: for alpha < 2 the first two words drive the positive
    (alpha/2)-stable mixing variable; the following 2*ceil(m/2) words feed
    Box-Muller pairs.
    """
    cdef Py_ssize_t N = raw.shape[0]
    out_arr = np.empty((N, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i
    cdef int j, off
    cdef double mix, rad, ang, u1, u2
    cdef double a = alpha / 2.0
    off = 0 if alpha == 2.0 else 2
    with nogil:
        for i in range(N):
            if alpha == 2.0:
                mix = kappa * scales[i]
            else:
                mix = kappa * scales[i] * sqrt(
                    _kanter(a, _unit(raw[i, 0]), -log(_unit(raw[i, 1]))))
            j = 0
            while j < m:
                u1 = _unit(raw[i, off + j])
                u2 = _unit(raw[i, off + j + 1])
                rad = sqrt(-2.0 * log(u1)) * mix
                ang = 2.0 * M_PI * u2
                out[i, j] = rad * cos(ang)
                if j + 1 < m:
                    out[i, j + 1] = rad * sin(ang)
                j = j + 2
    return out_arr
