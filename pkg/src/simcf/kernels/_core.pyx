# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel backend. Same contracts as simcf.kernels._numpy; the
matrices involved are small (N up to a few hundred), so plain typed loops
beat numpy's per-call overhead here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

ctypedef double complex dcomplex


cdef void _scale_rows_inplace(dcomplex[:, ::1] x, const double[::1] phases) noexcept:
    cdef Py_ssize_t i, j
    cdef dcomplex f
    for i in range(x.shape[0]):
        f = cos(phases[i]) + 1j * sin(phases[i])
        for j in range(x.shape[1]):
            x[i, j] = f * x[i, j]


cdef void _matmul(const dcomplex[:, ::1] a, const dcomplex[:, ::1] b,
                  dcomplex[:, ::1] out) noexcept:
    cdef Py_ssize_t i, j, k
    cdef dcomplex acc
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0
            for k in range(a.shape[1]):
                acc = acc + a[i, k] * b[k, j]
            out[i, j] = acc


def cascade(phases, w_inter):
    """See simcf.kernels._numpy.cascade."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] ph = np.ascontiguousarray(phases, dtype=np.float64)
    cdef cnp.ndarray[dcomplex, ndim=3, mode="c"] w = np.ascontiguousarray(w_inter, dtype=np.complex128)
    cdef Py_ssize_t m_layers = ph.shape[0]
    cdef Py_ssize_t n = ph.shape[1]
    cdef cnp.ndarray[dcomplex, ndim=2, mode="c"] cur = np.zeros((n, n), dtype=np.complex128)
    cdef cnp.ndarray[dcomplex, ndim=2, mode="c"] nxt = np.empty((n, n), dtype=np.complex128)
    cdef Py_ssize_t i, m
    for i in range(n):
        cur[i, i] = cos(ph[0, i]) + 1j * sin(ph[0, i])
    for m in range(1, m_layers):
        _matmul(w[m - 1], cur, nxt)
        cur, nxt = nxt, cur
        _scale_rows_inplace(cur, ph[m])
    return np.asarray(cur)


def cascade_apply(phases, w_inter, w_first):
    """See simcf.kernels._numpy.cascade_apply."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] ph = np.ascontiguousarray(phases, dtype=np.float64)
    cdef cnp.ndarray[dcomplex, ndim=3, mode="c"] w = np.ascontiguousarray(w_inter, dtype=np.complex128)
    cdef cnp.ndarray[dcomplex, ndim=2, mode="c"] cur = np.array(w_first, dtype=np.complex128, copy=True, order="C")
    cdef cnp.ndarray[dcomplex, ndim=2, mode="c"] nxt = np.empty_like(cur)
    cdef Py_ssize_t m_layers = ph.shape[0]
    cdef Py_ssize_t m
    _scale_rows_inplace(cur, ph[0])
    for m in range(1, m_layers):
        _matmul(w[m - 1], cur, nxt)
        cur, nxt = nxt, cur
        _scale_rows_inplace(cur, ph[m])
    return np.asarray(cur)


def effective_gains(h_hat, forward):
    """See simcf.kernels._numpy.effective_gains."""
    cdef cnp.ndarray[dcomplex, ndim=3, mode="c"] h = np.ascontiguousarray(h_hat, dtype=np.complex128)
    cdef cnp.ndarray[dcomplex, ndim=3, mode="c"] f = np.ascontiguousarray(forward, dtype=np.complex128)
    cdef Py_ssize_t L = h.shape[0], K = h.shape[1], N = h.shape[2], M = f.shape[2]
    cdef cnp.ndarray[dcomplex, ndim=3, mode="c"] g = np.empty((L, K, M), dtype=np.complex128)
    cdef Py_ssize_t l, k, m, n
    cdef dcomplex acc
    for l in range(L):
        for k in range(K):
            for m in range(M):
                acc = 0
                for n in range(N):
                    acc = acc + h[l, k, n].conjugate() * f[l, n, m]
                g[l, k, m] = acc
    return g


def sinr_from_gains(g, p, double sigma2):
    """See simcf.kernels._numpy.sinr_from_gains."""
    cdef cnp.ndarray[dcomplex, ndim=3, mode="c"] gg = np.ascontiguousarray(g, dtype=np.complex128)
    cdef cnp.ndarray[double, ndim=3, mode="c"] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef Py_ssize_t L = gg.shape[0], K = gg.shape[1], M = gg.shape[2]
    cdef cnp.ndarray[double, ndim=1, mode="c"] gamma = np.empty(K, dtype=np.float64)
    cdef Py_ssize_t k, j, l, m
    cdef dcomplex amp
    cdef double signal, interference, pw
    for k in range(K):
        signal = 0.0
        interference = 0.0
        for j in range(K):
            amp = 0
            for l in range(L):
                for m in range(M):
                    amp = amp + gg[l, k, m] * pp[l, j, m]
            pw = amp.real * amp.real + amp.imag * amp.imag
            if j == k:
                signal = pw
            else:
                interference = interference + pw
        gamma[k] = signal / (interference + sigma2)
    return gamma
