"""Numpy implementations of the hot kernels.

Always importable; used when the compiled extension is missing or when
``ACCENTLAB_PURE=1`` is set. Signatures match ``_ckernels`` exactly.
"""

import numpy as np


def _valid_rows(offset, stride, t_out, t_in):
    """Range [lo, hi) of output rows t with 0 <= t*stride + offset < t_in."""
    lo = -(offset // stride) if offset < 0 else 0
    hi = min(t_out, (t_in - 1 - offset) // stride + 1) if t_in - 1 - offset >= 0 else 0
    return lo, max(lo, hi)


def unfold1d(x, k, pad, stride, t_out):
    n, t_in, c = x.shape
    cols = np.zeros((n, t_out, k, c), dtype=x.dtype)
    for j in range(k):
        lo, hi = _valid_rows(j - pad, stride, t_out, t_in)
        if hi <= lo:
            continue
        start = lo * stride + j - pad
        stop = (hi - 1) * stride + j - pad + 1
        cols[:, lo:hi, j, :] = x[:, start:stop:stride, :]
    return cols


def fold1d(cols, t_in, pad, stride):
    n, t_out, k, c = cols.shape
    out = np.zeros((n, t_in, c), dtype=cols.dtype)
    for j in range(k):
        lo, hi = _valid_rows(j - pad, stride, t_out, t_in)
        if hi <= lo:
            continue
        start = lo * stride + j - pad
        stop = (hi - 1) * stride + j - pad + 1
        out[:, start:stop:stride, :] += cols[:, lo:hi, j, :]
    return out


def maxpool1d_forward(x, k, stride):
    n, t_in, c = x.shape
    t_out = (t_in - k) // stride + 1
    windows = np.stack([x[:, j:j + stride * (t_out - 1) + 1:stride, :] for j in range(k)], axis=2)
    # argmax returns the first maximal index on ties
    arg = np.argmax(windows, axis=2)
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    idx = arg + (np.arange(t_out) * stride)[None, :, None]
    return out, idx.astype(np.int64)


def maxpool1d_backward(grad, idx, t_in):
    n, t_out, c = grad.shape
    out = np.zeros((n, t_in, c), dtype=grad.dtype)
    nn = np.arange(n)[:, None, None]
    cc = np.arange(c)[None, None, :]
    np.add.at(out, (np.broadcast_to(nn, idx.shape), idx, np.broadcast_to(cc, idx.shape)), grad)
    return out


def conditional_affinities(d2, perplexity, tol=1e-5, max_iter=100):
    """Row-wise Gaussian conditionals P(j|i) whose entropy matches log(perplexity)."""
    n = d2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        beta, lo, hi = 1.0, -np.inf, np.inf
        row = np.delete(d2[i], i)
        for _ in range(max_iter):
            shifted = row - row.min()
            w = np.exp(-shifted * beta)
            s = w.sum()
            p = w / s
            # entropy in nats
            h = beta * np.dot(p, shifted) + np.log(s)
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -np.inf else (beta + lo) / 2.0
        P[i, np.arange(n) != i] = p
        betas[i] = beta
    return P, betas


def tsne_gradient(Y, P, exaggeration):
    diff = Y[:, None, :] - Y[None, :, :]
    num = 1.0 / (1.0 + np.sum(diff * diff, axis=2))
    np.fill_diagonal(num, 0.0)
    z = num.sum()
    Q = np.maximum(num / z, 1e-12)
    W = (exaggeration * P - Q) * num
    grad = 4.0 * np.einsum("ij,ijd->id", W, diff)
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))
    return grad, kl
