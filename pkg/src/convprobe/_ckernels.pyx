# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled 1-D convolution and max-pooling kernels.

All arrays are C-contiguous with layout (batch, channels, time). Reductions
run in a fixed loop order so results do not depend on scheduling.
"""

import numpy as np
cimport numpy as cnp

from scipy.linalg.cython_blas cimport sgemm, dgemm

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline void _gemm_rm(char ta, char tb, int M, int N, int K, real alpha,
                          const real* A, int lda, const real* B, int ldb,
                          real beta, real* C, int ldc) noexcept nogil:
    # row-major C[M,N] = alpha * op(A)[M,K] @ op(B)[K,N] + beta * C, expressed
    # as the column-major product C^T = op(B)^T op(A)^T
    if real is float:
        sgemm(&tb, &ta, &N, &M, &K, &alpha, <float*>B, &ldb, <float*>A, &lda,
              &beta, C, &ldc)
    else:
        dgemm(&tb, &ta, &N, &M, &K, &alpha, <double*>B, &ldb, <double*>A, &lda,
              &beta, C, &ldc)


def conv1d_forward(const real[:, :, ::1] x, const real[:, :, ::1] w, const real[::1] b):
    cdef Py_ssize_t B = x.shape[0], Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t Cout = w.shape[0], K = w.shape[2]
    cdef Py_ssize_t Tout = T - K + 1
    cdef Py_ssize_t bi, co, k, t
    if w.shape[1] != Cin or b.shape[0] != Cout or Tout < 1:
        raise ValueError("incompatible shapes for conv1d_forward")
    dtype = np.float32 if real is float else np.float64
    # per-tap weight matrices W_k[co, ci] = w[co, ci, k]
    wk_arr = np.ascontiguousarray(np.transpose(np.asarray(w), (2, 0, 1)))
    cdef const real[:, :, ::1] wk = wk_arr
    out = np.empty((B, Cout, Tout), dtype=dtype)
    cdef real[:, :, ::1] o = out
    with nogil:
        for bi in range(B):
            for co in range(Cout):
                for t in range(Tout):
                    o[bi, co, t] = b[co]
            for k in range(K):
                # O[b] += W_k @ X[b][:, k:k+Tout]  (row stride T)
                _gemm_rm(c'N', c'N', <int>Cout, <int>Tout, <int>Cin, 1,
                         &wk[k, 0, 0], <int>Cin, &x[bi, 0, k], <int>T,
                         1, &o[bi, 0, 0], <int>Tout)
    return out


def conv1d_backward_input(const real[:, :, ::1] go, const real[:, :, ::1] w, Py_ssize_t T):
    cdef Py_ssize_t B = go.shape[0], Cout = go.shape[1], Tout = go.shape[2]
    cdef Py_ssize_t Cin = w.shape[1], K = w.shape[2]
    cdef Py_ssize_t bi, k
    if w.shape[0] != Cout or Tout != T - K + 1:
        raise ValueError("incompatible shapes for conv1d_backward_input")
    wk_arr = np.ascontiguousarray(np.transpose(np.asarray(w), (2, 0, 1)))
    cdef const real[:, :, ::1] wk = wk_arr
    gx = np.zeros((B, Cin, T), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] g = gx
    with nogil:
        for bi in range(B):
            for k in range(K):
                # GX[b][:, k:k+Tout] += W_k^T @ GO[b]
                _gemm_rm(c'T', c'N', <int>Cin, <int>Tout, <int>Cout, 1,
                         &wk[k, 0, 0], <int>Cin, &go[bi, 0, 0], <int>Tout,
                         1, &g[bi, 0, k], <int>T)
    return gx


def conv1d_backward_weight(const real[:, :, ::1] go, const real[:, :, ::1] x, Py_ssize_t K):
    cdef Py_ssize_t B = go.shape[0], Cout = go.shape[1], Tout = go.shape[2]
    cdef Py_ssize_t Cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t bi, co, k, t
    cdef real acc
    if x.shape[0] != B or Tout != T - K + 1:
        raise ValueError("incompatible shapes for conv1d_backward_weight")
    dtype = np.float32 if real is float else np.float64
    gwk = np.zeros((K, Cout, Cin), dtype=dtype)
    gb = np.zeros(Cout, dtype=dtype)
    cdef real[:, :, ::1] gwv = gwk
    cdef real[::1] gbv = gb
    with nogil:
        for bi in range(B):
            for co in range(Cout):
                acc = 0
                for t in range(Tout):
                    acc = acc + go[bi, co, t]
                gbv[co] += acc
            for k in range(K):
                # GW_k += GO[b] @ X[b][:, k:k+Tout]^T
                _gemm_rm(c'N', c'T', <int>Cout, <int>Cin, <int>Tout, 1,
                         &go[bi, 0, 0], <int>Tout, &x[bi, 0, k], <int>T,
                         1, &gwv[k, 0, 0], <int>Cin)
    return np.ascontiguousarray(np.transpose(gwk, (1, 2, 0))), gb


def maxpool1d_forward(const real[:, :, ::1] x, Py_ssize_t size, Py_ssize_t stride):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t P = (T - size) // stride + 1
    cdef Py_ssize_t bi, c, p, q, start, best
    cdef real m
    if size < 1 or stride < 1 or T < size:
        raise ValueError("incompatible shapes for maxpool1d_forward")
    out = np.empty((B, C, P), dtype=np.float32 if real is float else np.float64)
    idx = np.empty((B, C, P), dtype=np.intp)
    cdef real[:, :, ::1] o = out
    cdef Py_ssize_t[:, :, ::1] iv = idx
    with nogil:
        for bi in range(B):
            for c in range(C):
                for p in range(P):
                    start = p * stride
                    best = start
                    m = x[bi, c, start]
                    for q in range(start + 1, start + size):
                        # strict comparison keeps the earliest maximum
                        if x[bi, c, q] > m:
                            m = x[bi, c, q]
                            best = q
                    o[bi, c, p] = m
                    iv[bi, c, p] = best
    return out, idx


def maxpool1d_backward(const real[:, :, ::1] go, const Py_ssize_t[:, :, ::1] idx, Py_ssize_t T):
    cdef Py_ssize_t B = go.shape[0], C = go.shape[1], P = go.shape[2]
    cdef Py_ssize_t bi, c, p
    gx = np.zeros((B, C, T), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] g = gx
    with nogil:
        for bi in range(B):
            for c in range(C):
                for p in range(P):
                    g[bi, c, idx[bi, c, p]] += go[bi, c, p]
    return gx
