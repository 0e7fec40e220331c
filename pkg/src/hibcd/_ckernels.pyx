# cython: language_level=3
"""Compiled inner loops: sparse column gather and column-wise simplex projection."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport ddot, dgemv, dscal
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


cdef inline void _sort_desc(double* buf, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t r, q
    cdef double key
    if n > 32:
        qsort(buf, n, sizeof(double), _cmp_desc)
        return
    # insertion sort; N (number of materials) is small in practice
    for r in range(1, n):
        key = buf[r]
        q = r - 1
        while q >= 0 and buf[q] < key:
            buf[q + 1] = buf[q]
            q = q - 1
        buf[q + 1] = key


def csr_gather(const double[:, ::1] X, const cnp.int64_t[::1] indptr,
               const cnp.int64_t[::1] indices, const double[::1] weights):
    """Return ``Y`` with ``Y[m, i] = sum_p X[m, indices[p]] * weights[p]``.

    ``p`` runs over ``indptr[i]:indptr[i + 1]``.
    """
    cdef Py_ssize_t rows = X.shape[0]
    cdef Py_ssize_t n_out = indptr.shape[0] - 1
    cdef Py_ssize_t m, i, p
    cdef double acc
    out = np.empty((rows, n_out), dtype=np.float64)
    cdef double[:, ::1] Y = out
    with nogil:
        for m in range(rows):
            for i in range(n_out):
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    acc = acc + X[m, indices[p]] * weights[p]
                Y[m, i] = acc
    return out


def project_simplex_columns(const double[:, ::1] V):
    """Euclidean projection of every column of ``V`` onto the unit simplex."""
    cdef Py_ssize_t n = V.shape[0]
    cdef Py_ssize_t cols = V.shape[1]
    cdef Py_ssize_t j, r, rho
    cdef double csum, theta, t
    out = np.empty((n, cols), dtype=np.float64)
    cdef double[:, ::1] P = out
    cdef double* buf = <double*>malloc(n * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for j in range(cols):
                for r in range(n):
                    buf[r] = V[r, j]
                _sort_desc(buf, n)
                csum = 0.0
                theta = 0.0
                rho = 0
                for r in range(n):
                    csum = csum + buf[r]
                    t = (csum - 1.0) / (r + 1)
                    if buf[r] - t > 0.0:
                        rho = r
                        theta = t
                for r in range(n):
                    t = V[r, j] - theta
                    P[r, j] = t if t > 0.0 else 0.0
    finally:
        free(buf)
    return out


def power_pair(const double[:, ::1] M, const double[::1] v0, double tol, Py_ssize_t max_iter):
    """Alternating power iterations for the principal singular triplet.

    Returns ``(sigma, u, v, iterations, converged)``. The loop stops once
    ``||M^T u - sigma v|| <= tol * sigma``. Products go through BLAS dgemv;
    a C-ordered ``M`` is the column-major ``M^T``.
    """
    cdef int m = <int>M.shape[0]
    cdef int n = <int>M.shape[1]
    cdef int one = 1
    cdef double d_one = 1.0, d_zero = 0.0
    cdef char trans_t = b"T"
    cdef char trans_n = b"N"
    cdef Py_ssize_t j, it = 0
    cdef double nrm, s2, resid, d, inv
    cdef bint converged = False
    Mc = np.ascontiguousarray(M)
    cdef double[:, ::1] A = Mc
    u_arr = np.zeros(m, dtype=np.float64)
    v_arr = np.array(v0, dtype=np.float64)
    z_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] z = z_arr
    cdef double* pA = &A[0, 0]
    cdef double sigma = 0.0
    with nogil:
        nrm = sqrt(ddot(&n, &v[0], &one, &v[0], &one))
        if nrm > 0.0:
            for j in range(n):
                v[j] = v[j] / nrm
        while it < max_iter and nrm > 0.0:
            it = it + 1
            # u = M v
            dgemv(&trans_t, &n, &m, &d_one, pA, &n, &v[0], &one, &d_zero, &u[0], &one)
            sigma = sqrt(ddot(&m, &u[0], &one, &u[0], &one))
            if sigma == 0.0:
                break
            inv = 1.0 / sigma
            dscal(&m, &inv, &u[0], &one)
            # z = M^T u
            dgemv(&trans_n, &n, &m, &d_one, pA, &n, &u[0], &one, &d_zero, &z[0], &one)
            s2 = 0.0
            resid = 0.0
            for j in range(n):
                s2 = s2 + z[j] * z[j]
                d = z[j] - sigma * v[j]
                resid = resid + d * d
            s2 = sqrt(s2)
            if s2 == 0.0:
                sigma = 0.0
                break
            for j in range(n):
                v[j] = z[j] / s2
            sigma = s2
            if sqrt(resid) <= tol * sigma:
                converged = True
                break
    return sigma, u_arr, v_arr, it, converged
