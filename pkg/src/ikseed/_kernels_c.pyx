# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contract as ``ikseed._kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt

cnp.import_array()

DEF MAXJ = 64

cdef double ROOT_FLOOR = 1e-150


cdef inline void _rodrigues(double x, double y, double z, double a, double[3][3] R) noexcept nogil:
    cdef double c = cos(a)
    cdef double s = sin(a)
    cdef double C = 1.0 - c
    R[0][0] = c + x * x * C
    R[0][1] = x * y * C - z * s
    R[0][2] = x * z * C + y * s
    R[1][0] = y * x * C + z * s
    R[1][1] = c + y * y * C
    R[1][2] = y * z * C - x * s
    R[2][0] = z * x * C - y * s
    R[2][1] = z * y * C + x * s
    R[2][2] = c + z * z * C


cdef inline void _matmul3(double[3][3] A, double[3][3] B, double[3][3] out) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[i][j] = A[i][0] * B[0][j] + A[i][1] * B[1][j] + A[i][2] * B[2][j]


cdef void _walk(const double[:, :, ::1] origins, const int[::1] kinds, const double[:, ::1] axes,
                const double[::1] q, double[3][3] R, double[3] p,
                double[:, ::1] zs, double[:, ::1] ps, bint record) noexcept nogil:
    """Run the chain; leaves the last joint frame in (R, p)."""
    cdef int n = origins.shape[0]
    cdef int j, a, b
    cdef double tmp[3][3]
    cdef double M[3][3]
    cdef double z[3]
    cdef double v
    for a in range(3):
        p[a] = 0.0
        for b in range(3):
            R[a][b] = 1.0 if a == b else 0.0
    for j in range(n):
        for a in range(3):
            v = 0.0
            for b in range(3):
                v = v + R[a][b] * origins[j, b, 3]
            p[a] = p[a] + v
        for a in range(3):
            for b in range(3):
                M[a][b] = origins[j, a, b]
        _matmul3(R, M, tmp)
        for a in range(3):
            for b in range(3):
                R[a][b] = tmp[a][b]
        for a in range(3):
            z[a] = R[a][0] * axes[j, 0] + R[a][1] * axes[j, 1] + R[a][2] * axes[j, 2]
        if record:
            for a in range(3):
                zs[j, a] = z[a]
                ps[j, a] = p[a]
        if kinds[j] == 0:
            _rodrigues(axes[j, 0], axes[j, 1], axes[j, 2], q[j], M)
            _matmul3(R, M, tmp)
            for a in range(3):
                for b in range(3):
                    R[a][b] = tmp[a][b]
        else:
            for a in range(3):
                p[a] = p[a] + z[a] * q[j]


cdef double _qr_root_det(double[MAXJ][6] A, int n) noexcept nogil:
    """Product of |R_kk| from Householder QR of the n x 6 matrix A (destroyed)."""
    cdef double norm, alpha, v0, vv, t, prod = 1.0
    cdef int c, r, j
    for c in range(6):
        norm = 0.0
        for r in range(c, n):
            norm = norm + A[r][c] * A[r][c]
        norm = sqrt(norm)
        if norm == 0.0:
            return 0.0
        alpha = -norm if A[c][c] >= 0.0 else norm
        v0 = A[c][c] - alpha
        vv = v0 * v0
        for r in range(c + 1, n):
            vv = vv + A[r][c] * A[r][c]
        prod = prod * norm
        if vv == 0.0:
            continue
        for j in range(c + 1, 6):
            t = v0 * A[c][j]
            for r in range(c + 1, n):
                t = t + A[r][c] * A[r][j]
            t = 2.0 * t / vv
            A[c][j] = A[c][j] - t * v0
            for r in range(c + 1, n):
                A[r][j] = A[r][j] - t * A[r][c]
    if prod < ROOT_FLOOR:
        return 0.0
    return prod


def serial_fk(origins, kinds, axes, tail, Q):
    cdef const double[:, :, ::1] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef const int[::1] kd = np.ascontiguousarray(kinds, dtype=np.int32)
    cdef const double[:, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef const double[:, ::1] tl = np.ascontiguousarray(tail, dtype=np.float64)
    cdef const double[:, ::1] qq = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
    cdef Py_ssize_t m = qq.shape[0]
    out_arr = np.zeros((m, 4, 4))
    cdef double[:, :, ::1] out = out_arr
    cdef double R[3][3]
    cdef double p[3]
    cdef double[:, ::1] dummy = np.zeros((1, 3))
    cdef Py_ssize_t i
    cdef int a, b
    if o.shape[0] > 0 and qq.shape[1] != o.shape[0]:
        raise ValueError("joint count mismatch")
    with nogil:
        for i in range(m):
            _walk(o, kd, ax, qq[i], R, p, dummy, dummy, False)
            for a in range(3):
                for b in range(3):
                    out[i, a, b] = R[a][0] * tl[0, b] + R[a][1] * tl[1, b] + R[a][2] * tl[2, b]
                out[i, a, 3] = p[a] + R[a][0] * tl[0, 3] + R[a][1] * tl[1, 3] + R[a][2] * tl[2, 3]
            out[i, 3, 3] = 1.0
    return out_arr


def serial_jacobian(origins, kinds, axes, tail, q):
    cdef const double[:, :, ::1] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef const int[::1] kd = np.ascontiguousarray(kinds, dtype=np.int32)
    cdef const double[:, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef const double[:, ::1] tl = np.ascontiguousarray(tail, dtype=np.float64)
    cdef const double[::1] qv = np.ascontiguousarray(q, dtype=np.float64).reshape(-1)
    cdef int n = o.shape[0]
    cdef int j, a, b
    zs_arr = np.zeros((max(n, 1), 3))
    ps_arr = np.zeros((max(n, 1), 3))
    cdef double[:, ::1] zs = zs_arr
    cdef double[:, ::1] ps = ps_arr
    T_arr = np.eye(4)
    J_arr = np.zeros((6, n))
    cdef double[:, ::1] T = T_arr
    cdef double[:, ::1] J = J_arr
    cdef double R[3][3]
    cdef double p[3]
    cdef double d[3]
    if qv.shape[0] != n:
        raise ValueError("joint count mismatch")
    with nogil:
        _walk(o, kd, ax, qv, R, p, zs, ps, True)
        for a in range(3):
            for b in range(3):
                T[a, b] = R[a][0] * tl[0, b] + R[a][1] * tl[1, b] + R[a][2] * tl[2, b]
            T[a, 3] = p[a] + R[a][0] * tl[0, 3] + R[a][1] * tl[1, 3] + R[a][2] * tl[2, 3]
        for j in range(n):
            if kd[j] == 0:
                for a in range(3):
                    d[a] = T[a, 3] - ps[j, a]
                J[0, j] = zs[j, 1] * d[2] - zs[j, 2] * d[1]
                J[1, j] = zs[j, 2] * d[0] - zs[j, 0] * d[2]
                J[2, j] = zs[j, 0] * d[1] - zs[j, 1] * d[0]
                for a in range(3):
                    J[3 + a, j] = zs[j, a]
            else:
                for a in range(3):
                    J[a, j] = zs[j, a]
    return T_arr, J_arr


def gram_root_det(J):
    """sqrt(det(J J^T)) for one 6 x n matrix or a stack of them."""
    arr = np.asarray(J, dtype=np.float64)
    single = arr.ndim == 2
    cdef const double[:, :, ::1] a3 = np.ascontiguousarray(arr[None] if single else arr)
    cdef Py_ssize_t m = a3.shape[0]
    cdef int n = a3.shape[2]
    if a3.shape[1] != 6:
        raise ValueError("expected 6 rows")
    if n > MAXJ:
        raise ValueError("more than %d columns" % MAXJ)
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    cdef double M[MAXJ][6]
    cdef Py_ssize_t i
    cdef int r, c
    if n < 6:
        return out_arr[0] if single else out_arr
    with nogil:
        for i in range(m):
            for r in range(6):
                for c in range(n):
                    M[c][r] = a3[i, r, c]
            out[i] = _qr_root_det(M, n)
    return out_arr[0] if single else out_arr


def serial_goodness(origins, kinds, axes, tail, Q, D, double w):
    cdef const double[:, :, ::1] o = np.ascontiguousarray(origins, dtype=np.float64)
    cdef const int[::1] kd = np.ascontiguousarray(kinds, dtype=np.int32)
    cdef const double[:, ::1] ax = np.ascontiguousarray(axes, dtype=np.float64)
    cdef const double[:, ::1] tl = np.ascontiguousarray(tail, dtype=np.float64)
    cdef const double[:, ::1] qq = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
    cdef const double[:, ::1] dd = np.ascontiguousarray(np.atleast_2d(D), dtype=np.float64)
    cdef Py_ssize_t m = qq.shape[0]
    cdef int n = o.shape[0]
    if n > MAXJ:
        raise ValueError("path longer than %d joints" % MAXJ)
    if qq.shape[1] != n or dd.shape[1] != n or dd.shape[0] != m:
        raise ValueError("shape mismatch")
    out_arr = np.zeros(m)
    cdef double[::1] out = out_arr
    zs_arr = np.zeros((max(n, 1), 3))
    ps_arr = np.zeros((max(n, 1), 3))
    cdef double[:, ::1] zs = zs_arr
    cdef double[:, ::1] ps = ps_arr
    cdef double R[3][3]
    cdef double p[3]
    cdef double pe[3]
    cdef double A[MAXJ][6]
    cdef double dv, inv_w = 1.0 / w
    cdef Py_ssize_t i
    cdef int j, a, b, live, turning
    with nogil:
        for i in range(m):
            live = 0
            turning = 0
            for j in range(n):
                if dd[i, j] != 0.0:
                    live = live + 1
                    if kd[j] == 0:
                        turning = turning + 1
            # prismatic columns have no angular part: rank needs 3 revolute ones
            if live < 6 or turning < 3:
                out[i] = 0.0
                continue
            _walk(o, kd, ax, qq[i], R, p, zs, ps, True)
            for a in range(3):
                pe[a] = p[a] + R[a][0] * tl[0, 3] + R[a][1] * tl[1, 3] + R[a][2] * tl[2, 3]
            # rows of A are the live columns of the scaled Jacobian
            live = 0
            for j in range(n):
                dv = dd[i, j]
                if dv == 0.0:
                    continue
                if kd[j] == 0:
                    A[live][0] = (zs[j, 1] * (pe[2] - ps[j, 2]) - zs[j, 2] * (pe[1] - ps[j, 1])) * dv
                    A[live][1] = (zs[j, 2] * (pe[0] - ps[j, 0]) - zs[j, 0] * (pe[2] - ps[j, 2])) * dv
                    A[live][2] = (zs[j, 0] * (pe[1] - ps[j, 1]) - zs[j, 1] * (pe[0] - ps[j, 0])) * dv
                    for a in range(3):
                        A[live][3 + a] = zs[j, a] * inv_w * dv
                else:
                    for a in range(3):
                        A[live][a] = zs[j, a] * dv
                        A[live][3 + a] = 0.0
                live = live + 1
            out[i] = _qr_root_det(A, live)
    return out_arr
