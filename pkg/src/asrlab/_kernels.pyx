# cython: language_level=3
"""Compiled inner loops.

Same signatures and semantics as ``asrlab._fallback``; ``asrlab.kernels``
picks whichever is importable.
"""

import numpy as np

from libc.math cimport exp, log, INFINITY

ctypedef double f64


cdef inline f64 _sigmoid(f64 z) nogil:
    cdef f64 e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def som_train_epoch(f64[:, ::1] W, const f64[:, ::1] X, const Py_ssize_t[::1] order,
                    const f64[:, ::1] grid_d2, f64 lr, f64 sigma):
    cdef Py_ssize_t K = W.shape[0], D = W.shape[1], N = order.shape[0]
    cdef Py_ssize_t i, n, k, d, bmu
    cdef f64 best, dist, diff, h, inv2s2 = 1.0 / (2.0 * sigma * sigma)
    with nogil:
        for i in range(N):
            n = order[i]
            bmu = 0
            best = INFINITY
            for k in range(K):
                dist = 0.0
                for d in range(D):
                    diff = X[n, d] - W[k, d]
                    dist = dist + diff * diff
                if dist < best:
                    best = dist
                    bmu = k
            for k in range(K):
                h = lr * exp(-grid_d2[bmu, k] * inv2s2)
                for d in range(D):
                    W[k, d] = W[k, d] + h * (X[n, d] - W[k, d])


def mlp_sgd_epoch(f64[:, ::1] W1, f64[::1] b1, f64[:, ::1] W2, f64[::1] b2,
                  const f64[:, ::1] X, const Py_ssize_t[::1] labels,
                  const Py_ssize_t[::1] order, f64 lr):
    cdef Py_ssize_t H = W1.shape[0], I = W1.shape[1], V = W2.shape[0]
    cdef Py_ssize_t N = order.shape[0]
    cdef Py_ssize_t s, n, i, j, v
    cdef f64 acc, zmax, total
    cdef f64[::1] h = np.empty(H)
    cdef f64[::1] y = np.empty(V)
    cdef f64[::1] d1 = np.empty(H)
    with nogil:
        for s in range(N):
            n = order[s]
            for j in range(H):
                acc = b1[j]
                for i in range(I):
                    acc = acc + W1[j, i] * X[n, i]
                h[j] = _sigmoid(acc)
            zmax = -INFINITY
            for v in range(V):
                acc = b2[v]
                for j in range(H):
                    acc = acc + W2[v, j] * h[j]
                y[v] = acc
                if acc > zmax:
                    zmax = acc
            total = 0.0
            for v in range(V):
                y[v] = exp(y[v] - zmax)
                total = total + y[v]
            for v in range(V):
                y[v] = y[v] / total
            y[labels[n]] = y[labels[n]] - 1.0
            # hidden deltas use W2 before its update
            for j in range(H):
                acc = 0.0
                for v in range(V):
                    acc = acc + W2[v, j] * y[v]
                d1[j] = acc * h[j] * (1.0 - h[j])
            for v in range(V):
                for j in range(H):
                    W2[v, j] = W2[v, j] - lr * y[v] * h[j]
                b2[v] = b2[v] - lr * y[v]
            for j in range(H):
                for i in range(I):
                    W1[j, i] = W1[j, i] - lr * d1[j] * X[n, i]
                b1[j] = b1[j] - lr * d1[j]


def mlp_forward_rows(const f64[:, ::1] W1, const f64[::1] b1, const f64[:, ::1] W2,
                     const f64[::1] b2, const f64[:, ::1] X):
    cdef Py_ssize_t H = W1.shape[0], I = W1.shape[1], V = W2.shape[0]
    cdef Py_ssize_t N = X.shape[0]
    cdef Py_ssize_t n, i, j, v
    cdef f64 acc, zmax, total
    out = np.empty((N, V))
    cdef f64[:, ::1] Y = out
    cdef f64[::1] h = np.empty(H)
    with nogil:
        for n in range(N):
            for j in range(H):
                acc = b1[j]
                for i in range(I):
                    acc = acc + W1[j, i] * X[n, i]
                h[j] = _sigmoid(acc)
            zmax = -INFINITY
            for v in range(V):
                acc = b2[v]
                for j in range(H):
                    acc = acc + W2[v, j] * h[j]
                Y[n, v] = acc
                if acc > zmax:
                    zmax = acc
            total = 0.0
            for v in range(V):
                Y[n, v] = exp(Y[n, v] - zmax)
                total = total + Y[n, v]
            for v in range(V):
                Y[n, v] = Y[n, v] / total
    return out


def viterbi_log(const f64[::1] log_pi, const f64[:, ::1] log_A, const f64[:, ::1] log_L):
    cdef Py_ssize_t T = log_L.shape[0], V = log_L.shape[1]
    cdef Py_ssize_t t, q, r, best_r
    cdef f64 best, cand
    delta_arr = np.empty((T, V))
    psi_arr = np.zeros((T, V), dtype=np.intp)
    path_arr = np.empty(T, dtype=np.intp)
    cdef f64[:, ::1] delta = delta_arr
    cdef Py_ssize_t[:, ::1] psi = psi_arr
    cdef Py_ssize_t[::1] path = path_arr
    with nogil:
        for q in range(V):
            delta[0, q] = log_pi[q] + log_L[0, q]
        for t in range(1, T):
            for q in range(V):
                best = -INFINITY
                best_r = 0
                for r in range(V):
                    cand = delta[t - 1, r] + log_A[r, q]
                    if cand > best:
                        best = cand
                        best_r = r
                delta[t, q] = best + log_L[t, q]
                psi[t, q] = best_r
        best = -INFINITY
        best_r = 0
        for q in range(V):
            if delta[T - 1, q] > best:
                best = delta[T - 1, q]
                best_r = q
        path[T - 1] = best_r
        for t in range(T - 1, 0, -1):
            path[t - 1] = psi[t, path[t]]
    return path_arr, delta_arr


def forward_scaled(const f64[::1] pi, const f64[:, ::1] A, const f64[:, ::1] L):
    """Returns (normalized alphas, total log-likelihood); -inf marks a dead lattice."""
    cdef Py_ssize_t T = L.shape[0], V = L.shape[1]
    cdef Py_ssize_t t, q, r
    cdef f64 acc, c, loglik = 0.0
    alpha_arr = np.zeros((T, V))
    cdef f64[:, ::1] alpha = alpha_arr
    with nogil:
        c = 0.0
        for q in range(V):
            alpha[0, q] = pi[q] * L[0, q]
            c = c + alpha[0, q]
        if c <= 0.0:
            loglik = -INFINITY
        else:
            for q in range(V):
                alpha[0, q] = alpha[0, q] / c
            loglik = log(c)
            for t in range(1, T):
                c = 0.0
                for q in range(V):
                    acc = 0.0
                    for r in range(V):
                        acc = acc + alpha[t - 1, r] * A[r, q]
                    alpha[t, q] = acc * L[t, q]
                    c = c + alpha[t, q]
                if c <= 0.0:
                    loglik = -INFINITY
                    break
                for q in range(V):
                    alpha[t, q] = alpha[t, q] / c
                loglik = loglik + log(c)
    return alpha_arr, loglik
