# cython: boundscheck=False, wraparound=False, cdivision=True
"""C implementations of the hot kernels.

Single-sample network passes, fused optimizer steps, and sum-tree walks are
the inner loop of training; this module keeps them out of the interpreter.
Signatures and semantics mirror kernels_numpy exactly (that file is the
reference; parity is pinned by tests/test_kernels.py).
"""

from libc.math cimport sqrt, exp, pow

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

cdef double ONE = 1.0
cdef double ZERO = 0.0


cdef void _gemm_xwt(double[:, ::1] X, double[:, ::1] W, double[:, ::1] out) nogil:
    # row-major out(B,n_out) = X(B,n_in) @ W(n_out,n_in).T via Fortran dgemm
    cdef int m = <int> W.shape[0], n = <int> X.shape[0], k = <int> X.shape[1]
    dgemm("T", "N", &m, &n, &k, &ONE, &W[0, 0], &k, &X[0, 0], &k, &ZERO,
          &out[0, 0], &m)


def affine_forward(double[:, ::1] X, double[:, ::1] W, double[::1] b,
                   double[:, ::1] out, bint relu):
    cdef Py_ssize_t B = X.shape[0], n_out = W.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        _gemm_xwt(X, W, out)
        for i in range(B):
            for j in range(n_out):
                acc = out[i, j] + b[j]
                if relu and acc < 0.0:
                    acc = 0.0
                out[i, j] = acc


def affine_backward(double[:, ::1] X, double[:, ::1] W, double[:, ::1] act,
                    double[:, ::1] d_out, bint relu,
                    double[:, ::1] dW, double[::1] db, object dX=None):
    cdef Py_ssize_t B = X.shape[0], n_in = X.shape[1], n_out = W.shape[0]
    cdef int mi, ni, ki
    cdef Py_ssize_t i, j
    cdef bint has_dx = dX is not None
    cdef double[:, ::1] dX_v
    if has_dx:
        dX_v = dX
    with nogil:
        if relu:
            for i in range(B):
                for j in range(n_out):
                    if act[i, j] <= 0.0:
                        d_out[i, j] = 0.0
        for j in range(n_out):
            db[j] = 0.0
        for i in range(B):
            for j in range(n_out):
                db[j] += d_out[i, j]
        # dW(n_out,n_in) = d_out(B,n_out).T @ X(B,n_in)
        mi = <int> n_in; ni = <int> n_out; ki = <int> B
        dgemm("N", "T", &mi, &ni, &ki, &ONE, &X[0, 0], &mi, &d_out[0, 0], &ni,
              &ZERO, &dW[0, 0], &mi)
        if has_dx:
            # dX(B,n_in) = d_out(B,n_out) @ W(n_out,n_in)
            mi = <int> n_in; ni = <int> B; ki = <int> n_out
            dgemm("N", "N", &mi, &ni, &ki, &ONE, &W[0, 0], &mi, &d_out[0, 0],
                  &ki, &ZERO, &dX_v[0, 0], &mi)


def softmax_rows(double[:, ::1] logits, double[:, ::1] out):
    cdef Py_ssize_t B = logits.shape[0], n = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, total
    with nogil:
        for i in range(B):
            mx = logits[i, 0]
            for j in range(1, n):
                if logits[i, j] > mx:
                    mx = logits[i, j]
            total = 0.0
            for j in range(n):
                out[i, j] = exp(logits[i, j] - mx)
                total += out[i, j]
            for j in range(n):
                out[i, j] /= total


def adam_step(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
              long t, double eta, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    cdef double g
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            param[i] -= eta * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


def sgd_step(double[::1] param, double[::1] grad, double eta):
    cdef Py_ssize_t n = param.shape[0]
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            param[i] -= eta * grad[i]


cdef void _tree_update(double[::1] nodes, Py_ssize_t capacity,
                       Py_ssize_t data_idx, double value) nogil:
    cdef Py_ssize_t idx = data_idx + capacity - 1
    cdef double change = value - nodes[idx]
    nodes[idx] = value
    while idx > 0:
        idx = (idx - 1) // 2
        nodes[idx] += change


def sumtree_update(double[::1] nodes, Py_ssize_t capacity, Py_ssize_t data_idx,
                   double value):
    _tree_update(nodes, capacity, data_idx, value)


def sumtree_update_batch(double[::1] nodes, Py_ssize_t capacity,
                         long[::1] data_idx, double[::1] values):
    cdef Py_ssize_t i
    with nogil:
        for i in range(data_idx.shape[0]):
            _tree_update(nodes, capacity, data_idx[i], values[i])


cdef Py_ssize_t _tree_query(double[::1] nodes, Py_ssize_t capacity, double r) nogil:
    cdef Py_ssize_t idx = 0
    cdef Py_ssize_t n = 2 * capacity - 1
    cdef Py_ssize_t left, right
    while 2 * idx + 1 < n:
        left = 2 * idx + 1
        right = left + 1
        if r <= nodes[left] or nodes[right] == 0.0:
            idx = left
        else:
            r -= nodes[left]
            idx = right
    return idx - (capacity - 1)


def sumtree_query(double[::1] nodes, Py_ssize_t capacity, double r):
    return _tree_query(nodes, capacity, r)


def sumtree_query_batch(double[::1] nodes, Py_ssize_t capacity, double[::1] rs,
                        long[::1] out_idx):
    cdef Py_ssize_t i
    with nogil:
        for i in range(rs.shape[0]):
            out_idx[i] = _tree_query(nodes, capacity, rs[i])
