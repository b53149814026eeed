# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_reference``; same signatures."""

import numpy as np

from libc.math cimport exp, log, sqrt, pow


# above this many weights per row the BLAS matmul behind numpy wins
DENSE_LOOP_MAX = 32


def dense_forward(x, w, b):
    if np.shape(w)[0] * np.shape(w)[1] > DENSE_LOOP_MAX:
        out = np.asarray(x, dtype=np.float64) @ np.asarray(w, dtype=np.float64).T
        if out.shape[1] != np.shape(b)[0]:
            raise ValueError("dense_forward: shape mismatch")
        return out + b
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], d_in = xv.shape[1], d_out = wv.shape[0]
    if wv.shape[1] != d_in or bv.shape[0] != d_out:
        raise ValueError("dense_forward: shape mismatch")
    out = np.empty((n, d_out))
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, l
    cdef double acc
    with nogil:
        for i in range(n):
            for j in range(d_out):
                acc = 0.0
                for l in range(d_in):
                    acc = acc + xv[i, l] * wv[j, l]
                ov[i, j] = acc + bv[j]
    return out


cdef void _softmax_row(const double[:, ::1] logits, Py_ssize_t i, double[:, ::1] probs,
                       double* log_denom, double* row_max) noexcept nogil:
    cdef Py_ssize_t r, k = logits.shape[1]
    cdef double mx = logits[i, 0], s = 0.0, e
    for r in range(1, k):
        if logits[i, r] > mx:
            mx = logits[i, r]
    for r in range(k):
        e = exp(logits[i, r] - mx)
        probs[i, r] = e
        s = s + e
    for r in range(k):
        probs[i, r] = probs[i, r] / s
    log_denom[0] = log(s)
    row_max[0] = mx


def softmax_xent(logits, y):
    cdef const double[:, ::1] lv = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const long long[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef Py_ssize_t n = lv.shape[0], k = lv.shape[1], i
    losses = np.empty(n)
    probs = np.empty((n, k))
    cdef double[::1] loss_v = losses
    cdef double[:, ::1] pv = probs
    cdef double ld, mx
    with nogil:
        for i in range(n):
            _softmax_row(lv, i, pv, &ld, &mx)
            loss_v[i] = ld - (lv[i, yv[i]] - mx)
    return losses, probs


def group_center(x, labels, Py_ssize_t n_groups):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const long long[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = xv.shape[0], p = xv.shape[1], i, j, g
    sums_arr = np.zeros((n_groups, p))
    counts_arr = np.zeros(n_groups)
    out = np.empty((n, p))
    cdef double[:, ::1] sums = sums_arr
    cdef double[::1] counts = counts_arr
    cdef double[:, ::1] ov = out
    with nogil:
        for i in range(n):
            g = lab[i]
            counts[g] = counts[g] + 1.0
            for j in range(p):
                sums[g, j] = sums[g, j] + xv[i, j]
        for g in range(n_groups):
            if counts[g] == 0.0:
                counts[g] = 1.0
            for j in range(p):
                sums[g, j] = sums[g, j] / counts[g]
        for i in range(n):
            g = lab[i]
            for j in range(p):
                ov[i, j] = xv[i, j] - sums[g, j]
    return out


def finetune_head(features, y, w0, Py_ssize_t steps, double lr,
                  double beta1=0.9, double beta2=0.999, double eps=1e-8):
    cdef const double[:, ::1] fv = np.ascontiguousarray(features, dtype=np.float64)
    cdef const long long[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    w_arr = np.array(w0, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] w = w_arr
    cdef Py_ssize_t n = fv.shape[0], p = fv.shape[1], k = w.shape[0]
    if w.shape[1] != p:
        raise ValueError("finetune_head: head width does not match features")
    m_arr = np.zeros((k, p))
    v_arr = np.zeros((k, p))
    g_arr = np.zeros((k, p))
    logit_arr = np.zeros((n, k))
    prob_arr = np.zeros((n, k))
    cdef double[:, ::1] m = m_arr, v = v_arr, grad = g_arr, logits = logit_arr, probs = prob_arr
    cdef Py_ssize_t t, i, r, j
    cdef double acc, ld, mx, mhat, vhat, c1, c2
    with nogil:
        for t in range(1, steps + 1):
            for i in range(n):
                for r in range(k):
                    acc = 0.0
                    for j in range(p):
                        acc = acc + fv[i, j] * w[r, j]
                    logits[i, r] = acc
                _softmax_row(logits, i, probs, &ld, &mx)
                probs[i, yv[i]] = probs[i, yv[i]] - 1.0
            for r in range(k):
                for j in range(p):
                    acc = 0.0
                    for i in range(n):
                        acc = acc + probs[i, r] * fv[i, j]
                    grad[r, j] = acc / n
            c1 = 1.0 - pow(beta1, <double>t)
            c2 = 1.0 - pow(beta2, <double>t)
            for r in range(k):
                for j in range(p):
                    m[r, j] = beta1 * m[r, j] + (1.0 - beta1) * grad[r, j]
                    v[r, j] = beta2 * v[r, j] + (1.0 - beta2) * grad[r, j] * grad[r, j]
                    mhat = m[r, j] / c1
                    vhat = v[r, j] / c2
                    w[r, j] = w[r, j] - lr * mhat / (sqrt(vhat) + eps)
    return w_arr
