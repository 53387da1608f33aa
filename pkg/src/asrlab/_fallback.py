"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``.

Signatures and in-place conventions match the Cython module exactly. Results
agree to rounding, not bit-for-bit (numpy's pairwise summation differs from
the compiled left-to-right loops).
"""

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def som_train_epoch(W, X, order, grid_d2, lr, sigma):
    inv2s2 = 1.0 / (2.0 * sigma * sigma)
    for n in order:
        x = X[n]
        bmu = int(np.argmin(((x - W) ** 2).sum(axis=1)))
        h = lr * np.exp(-grid_d2[bmu] * inv2s2)
        W += h[:, None] * (x - W)


def mlp_sgd_epoch(W1, b1, W2, b2, X, labels, order, lr):
    for n in order:
        x = X[n]
        h = _sigmoid(W1 @ x + b1)
        y = _softmax(W2 @ h + b2)
        y[labels[n]] -= 1.0
        d1 = (W2.T @ y) * h * (1.0 - h)
        W2 -= lr * np.outer(y, h)
        b2 -= lr * y
        W1 -= lr * np.outer(d1, x)
        b1 -= lr * d1


def mlp_forward_rows(W1, b1, W2, b2, X):
    out = np.empty((X.shape[0], W2.shape[0]))
    # row loop keeps a batch bit-identical to single forward calls
    for n in range(X.shape[0]):
        h = _sigmoid(W1 @ X[n] + b1)
        out[n] = _softmax(W2 @ h + b2)
    return out


def viterbi_log(log_pi, log_A, log_L):
    T, V = log_L.shape
    delta = np.empty((T, V))
    psi = np.zeros((T, V), dtype=np.intp)
    delta[0] = log_pi + log_L[0]
    for t in range(1, T):
        cand = delta[t - 1][:, None] + log_A
        psi[t] = np.argmax(cand, axis=0)
        delta[t] = cand[psi[t], np.arange(V)] + log_L[t]
    path = np.empty(T, dtype=np.intp)
    path[-1] = int(np.argmax(delta[-1]))
    for t in range(T - 1, 0, -1):
        path[t - 1] = psi[t, path[t]]
    return path, delta


def forward_scaled(pi, A, L):
    T, V = L.shape
    alpha = np.zeros((T, V))
    a = pi * L[0]
    loglik = 0.0
    for t in range(T):
        if t > 0:
            a = (alpha[t - 1] @ A) * L[t]
        c = a.sum()
        if c <= 0.0:
            return alpha, -np.inf
        alpha[t] = a / c
        loglik += np.log(c)
    return alpha, float(loglik)
