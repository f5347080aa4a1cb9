# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot-loop kernels.

GELU uses the exact Gaussian-CDF definition. erf and exp(-z^2) are
evaluated from precomputed cubic Hermite tables (4096 intervals on
[0, 6], built from libm at import); the interpolation error is below
5e-14, comfortably inside the 1e-12 contract checked by the tests.
Scatter accumulates in edge order, matching the numpy reference
bitwise.
"""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport copysign, erf as c_erf, exp as c_exp, fabs, fmin

cnp.import_array()

cdef enum:
    TABLE_N = 4096

cdef double Z_MAX = 6.0
cdef double H_STEP = 6.0 / TABLE_N
cdef double INV_H = TABLE_N / 6.0
cdef double INV_SQRT2 = 0.7071067811865475244
cdef double INV_SQRT_2PI = 0.3989422804014326779

cdef double[TABLE_N + 2] ERF_Y
cdef double[TABLE_N + 2] ERF_M
cdef double[TABLE_N + 2] GAUSS_Y
cdef double[TABLE_N + 2] GAUSS_M

cdef void _build_tables():
    cdef int i
    cdef double z
    cdef double two_over_sqrt_pi = 1.1283791670955125739
    for i in range(TABLE_N + 2):
        z = i * H_STEP
        ERF_Y[i] = c_erf(z)
        ERF_M[i] = two_over_sqrt_pi * c_exp(-z * z)
        GAUSS_Y[i] = c_exp(-z * z)
        GAUSS_M[i] = -2.0 * z * c_exp(-z * z)
    # flat pad: fmin clamps u to Z_MAX*INV_H = TABLE_N, whose interval is
    # [TABLE_N, TABLE_N+1]; keep it exactly constant out there
    ERF_Y[TABLE_N] = 1.0
    ERF_M[TABLE_N] = 0.0
    ERF_Y[TABLE_N + 1] = 1.0
    ERF_M[TABLE_N + 1] = 0.0
    GAUSS_Y[TABLE_N] = 0.0
    GAUSS_M[TABLE_N] = 0.0
    GAUSS_Y[TABLE_N + 1] = 0.0
    GAUSS_M[TABLE_N + 1] = 0.0

_build_tables()


cdef inline double _hermite(const double* ys, const double* ms,
                            double az) nogil:
    # az is pre-clamped to [0, Z_MAX]; the table has a flat pad entry so
    # index TABLE_N is safe. Branch-free for pipeline friendliness.
    cdef double u = fmin(az, Z_MAX) * INV_H
    cdef int i = <int>u
    cdef double t = u - i
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    return ((2.0 * t3 - 3.0 * t2 + 1.0) * ys[i]
            + (t3 - 2.0 * t2 + t) * H_STEP * ms[i]
            + (-2.0 * t3 + 3.0 * t2) * ys[i + 1]
            + (t3 - t2) * H_STEP * ms[i + 1])


cdef inline double _erf_table(double z) nogil:
    return copysign(_hermite(&ERF_Y[0], &ERF_M[0], fabs(z)), z)


cdef inline double _gauss_table(double z) nogil:
    return _hermite(&GAUSS_Y[0], &GAUSS_M[0], fabs(z))


def gelu(object x):
    """x * Phi(x) with Phi the standard normal CDF."""
    cdef cnp.ndarray[double, ndim=1] flat = \
        np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t size = flat.shape[0]
    cdef cnp.ndarray[double, ndim=1] out = np.empty(size, dtype=np.float64)
    cdef double* xp = <double*>flat.data
    cdef double* op = <double*>out.data
    cdef Py_ssize_t k
    cdef double z
    with nogil:
        for k in range(size):
            z = xp[k] * INV_SQRT2
            op[k] = 0.5 * xp[k] * (1.0 + _erf_table(z))
    return out.reshape(np.shape(x))


def gelu_grad(object x, object gy):
    """Chain rule through GELU: gy * (Phi(x) + x * phi(x))."""
    cdef cnp.ndarray[double, ndim=1] flat = \
        np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] gflat = \
        np.ascontiguousarray(gy, dtype=np.float64).ravel()
    cdef Py_ssize_t size = flat.shape[0]
    if gflat.shape[0] != size:
        raise ValueError("gelu_grad: shape mismatch")
    cdef cnp.ndarray[double, ndim=1] out = np.empty(size, dtype=np.float64)
    cdef double* xp = <double*>flat.data
    cdef double* gp = <double*>gflat.data
    cdef double* op = <double*>out.data
    cdef Py_ssize_t k
    cdef double z, cdf, pdf
    with nogil:
        for k in range(size):
            z = xp[k] * INV_SQRT2
            cdf = 0.5 * (1.0 + _erf_table(z))
            pdf = INV_SQRT_2PI * _gauss_table(z)
            op[k] = gp[k] * (cdf + xp[k] * pdf)
    return out.reshape(np.shape(x))


def scatter_add(Py_ssize_t n_rows, object index, object src):
    """out[index[e], :] += src[e, :] accumulated in edge order."""
    cdef cnp.ndarray[cnp.int64_t, ndim=1] idx = \
        np.ascontiguousarray(index, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] s = \
        np.ascontiguousarray(src, dtype=np.float64)
    cdef Py_ssize_t rows = s.shape[0]
    cdef Py_ssize_t cols = s.shape[1]
    if idx.shape[0] != rows:
        raise ValueError("scatter_add: index/src mismatch")
    cdef cnp.ndarray[double, ndim=2] out = \
        np.zeros((n_rows, cols), dtype=np.float64)
    cdef double* op = <double*>out.data
    cdef double* sp = <double*>s.data
    cdef cnp.int64_t* ip = <cnp.int64_t*>idx.data
    cdef Py_ssize_t e, c
    cdef cnp.int64_t r
    with nogil:
        for e in range(rows):
            r = ip[e]
            if r < 0 or r >= n_rows:
                with gil:
                    raise IndexError("scatter_add: index out of range")
            for c in range(cols):
                op[r * cols + c] += sp[e * cols + c]
    return out


def gather_concat(object e, object v, object src, object tgt):
    """[e | v[src] | v[tgt]] over directed edges, one fused pass."""
    cdef cnp.ndarray[double, ndim=2] ea = \
        np.ascontiguousarray(e, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] va = \
        np.ascontiguousarray(v, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sa = \
        np.ascontiguousarray(src, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ta = \
        np.ascontiguousarray(tgt, dtype=np.int64)
    cdef Py_ssize_t rows = ea.shape[0]
    cdef Py_ssize_t le = ea.shape[1]
    cdef Py_ssize_t lv = va.shape[1]
    cdef Py_ssize_t n = va.shape[0]
    if sa.shape[0] != rows or ta.shape[0] != rows:
        raise ValueError("gather_concat: edge count mismatch")
    cdef cnp.ndarray[double, ndim=2] out = \
        np.empty((rows, le + 2 * lv), dtype=np.float64)
    cdef double* op = <double*>out.data
    cdef double* ep = <double*>ea.data
    cdef double* vp = <double*>va.data
    cdef cnp.int64_t* sp = <cnp.int64_t*>sa.data
    cdef cnp.int64_t* tp = <cnp.int64_t*>ta.data
    cdef Py_ssize_t k, c, width
    cdef cnp.int64_t si, ti
    width = le + 2 * lv
    with nogil:
        for k in range(rows):
            si = sp[k]
            ti = tp[k]
            if si < 0 or si >= n or ti < 0 or ti >= n:
                with gil:
                    raise IndexError("gather_concat: index out of range")
            for c in range(le):
                op[k * width + c] = ep[k * le + c]
            for c in range(lv):
                op[k * width + le + c] = vp[si * lv + c]
                op[k * width + le + lv + c] = vp[ti * lv + c]
    return out


from scipy.linalg.cython_blas cimport dgemm


def linear_bias(object x, object w, object b):
    """Fused y = x @ w + b for C-contiguous row-major inputs."""
    cdef cnp.ndarray[double, ndim=2] xa = \
        np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] wa = \
        np.ascontiguousarray(w, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ba = \
        np.ascontiguousarray(b, dtype=np.float64)
    cdef int m = xa.shape[0]
    cdef int k = xa.shape[1]
    cdef int n = wa.shape[1]
    if wa.shape[0] != k or ba.shape[0] != n:
        raise ValueError("linear_bias: shape mismatch")
    cdef cnp.ndarray[double, ndim=2] out = np.empty((m, n), dtype=np.float64)
    cdef double* op = <double*>out.data
    cdef double* bp = <double*>ba.data
    cdef Py_ssize_t r, c
    with nogil:
        for r in range(m):
            for c in range(n):
                op[r * n + c] = bp[c]
    cdef double alpha = 1.0
    cdef double beta = 1.0
    # Row-major product via the transposed column-major identity.
    with nogil:
        dgemm("N", "N", &n, &m, &k, &alpha, <double*>wa.data, &n,
              <double*>xa.data, &k, &beta, op, &n)
    return out


def edge_update(object e, object w_cat, object b, object p_src, object p_tgt,
                object src, object tgt):
    """Fused first layer of the edge block:

        out = e @ w_cat[:le] + p_src[src] + p_tgt[tgt] + b

    where ``p_src``/``p_tgt`` are the endpoint-state projections
    (node rows), exploiting linearity to avoid materializing the
    (edges, 3*latent) concatenation.
    """
    cdef cnp.ndarray[double, ndim=2] ea = \
        np.ascontiguousarray(e, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] wa = \
        np.ascontiguousarray(w_cat, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] ba = \
        np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] ps = \
        np.ascontiguousarray(p_src, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] pt = \
        np.ascontiguousarray(p_tgt, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] sa = \
        np.ascontiguousarray(src, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ta = \
        np.ascontiguousarray(tgt, dtype=np.int64)
    cdef int rows = ea.shape[0]
    cdef int le = ea.shape[1]
    cdef int lo = wa.shape[1]
    cdef Py_ssize_t n = ps.shape[0]
    if wa.shape[0] != le or ba.shape[0] != lo or pt.shape[0] != n or \
            ps.shape[1] != lo or pt.shape[1] != lo or \
            sa.shape[0] != rows or ta.shape[0] != rows:
        raise ValueError("edge_update: shape mismatch")
    cdef cnp.ndarray[double, ndim=2] out = np.empty((rows, lo),
                                                    dtype=np.float64)
    cdef double* op = <double*>out.data
    cdef double* bp = <double*>ba.data
    cdef double* psp = <double*>ps.data
    cdef double* ptp = <double*>pt.data
    cdef cnp.int64_t* sp = <cnp.int64_t*>sa.data
    cdef cnp.int64_t* tp = <cnp.int64_t*>ta.data
    cdef Py_ssize_t r, c
    cdef cnp.int64_t si, ti
    cdef double alpha = 1.0
    cdef double beta = 1.0
    with nogil:
        for r in range(rows):
            si = sp[r]
            ti = tp[r]
            if si < 0 or si >= n or ti < 0 or ti >= n:
                with gil:
                    raise IndexError("edge_update: index out of range")
            for c in range(lo):
                op[r * lo + c] = bp[c] + psp[si * lo + c] + ptp[ti * lo + c]
        dgemm("N", "N", &lo, &rows, &le, &alpha, <double*>wa.data, &lo,
              <double*>ea.data, &le, &beta, op, &lo)
    return out
