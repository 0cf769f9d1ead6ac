"""Differentiable operations.

Sequence tensors are laid out (batch, time, channels); the unbatched
(time, channels) form is accepted wherever a layer takes a sequence.
Each op computes its forward value with numpy and registers a closure
returning one gradient per parent.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from .tensor import Tensor, as_tensor, make_result

PROB_FLOOR = 1e-12


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# -- elementwise and structural ---------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    """(..., m) @ (m, p) with a 2-D right operand."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if b.requires_grad else None
        return ga, gb

    return make_result(a.data @ b.data, (a, b), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, key) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g) if _is_advanced(key) else out.__setitem__(key, g)
        return (out,)

    return make_result(a.data[key], (a,), backward)


def _is_advanced(key):
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def concat(tensors, axis=-1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(np.concatenate([t.data for t in ts], axis=axis), ts, backward)


def repeat_time(x, steps: int) -> Tensor:
    """(n, C) -> (n, steps, C) by repetition along a new time axis."""
    x = as_tensor(x)
    return make_result(
        np.repeat(x.data[:, None, :], steps, axis=1), (x,),
        lambda g: (g.sum(axis=1),),
    )


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    a = as_tensor(a)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return make_result(np.sum(a.data, axis=axis), (a,), backward)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / n)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return make_result(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))  # NaN propagates


def tanh(x) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),))


# -- layers -----------------------------------------------------------------

def dense(x, W, b) -> Tensor:
    """y = xW + b."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.ndim != 2 or x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ValueError(f"dense shape mismatch: x{x.shape} W{W.shape} b{b.shape}")
    return add(matmul(x, W), b)


def _batched(x):
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 3:
        raise ValueError(f"expected (T, C) or (n, T, C), got {x.shape}")
    return x, False


def _unbatch(y, squeeze):
    return reshape(y, y.shape[1:]) if squeeze else y


def conv1d(x, K, b, stride: int = 1) -> Tensor:
    """Temporal cross-correlation with zero 'same' padding.

    x (n, T, C_in), K (k, C_in, C_out), b (C_out,) -> (n, ceil(T/stride), C_out).
    """
    x, K, b = as_tensor(x), as_tensor(K), as_tensor(b)
    x, squeeze = _batched(x)
    k, cin, cout = K.shape
    if k % 2 == 0:
        raise ValueError("same padding needs an odd kernel size")
    if x.shape[2] != cin or b.shape != (cout,):
        raise ValueError(f"conv1d shape mismatch: x{x.shape} K{K.shape} b{b.shape}")
    n, T, _ = x.shape
    pad = (k - 1) // 2
    t_out = -(-T // stride)
    cols = _kernels.unfold1d(x.data, k, pad, stride, t_out).reshape(n * t_out, k * cin)
    K2 = K.data.reshape(k * cin, cout)
    y = (cols @ K2 + b.data).reshape(n, t_out, cout)

    def backward(g):
        g2 = g.reshape(n * t_out, cout)
        gx = None
        if x.requires_grad:
            gx = _kernels.fold1d((g2 @ K2.T).reshape(n, t_out, k, cin), T, pad, stride)
        gK = (cols.T @ g2).reshape(k, cin, cout)
        return gx, gK, g2.sum(axis=0)

    return _unbatch(make_result(y, (x, K, b), backward), squeeze)


def conv1d_transpose(x, K, b, stride: int = 2) -> Tensor:
    """Adjoint of a strided 'same' conv1d: (n, T, C_in) -> (n, T*stride, C_out).

    K has shape (k, C_in, C_out); contributions falling outside the output
    range are trimmed.
    """
    x, K, b = as_tensor(x), as_tensor(K), as_tensor(b)
    x, squeeze = _batched(x)
    k, cin, cout = K.shape
    if k % 2 == 0:
        raise ValueError("conv1d_transpose needs an odd kernel size")
    if x.shape[2] != cin or b.shape != (cout,):
        raise ValueError(f"conv1d_transpose shape mismatch: x{x.shape} K{K.shape} b{b.shape}")
    n, T, _ = x.shape
    pad = (k - 1) // 2
    L = T * stride
    Kp = K.data.transpose(1, 0, 2).reshape(cin, k * cout)
    x2 = x.data.reshape(n * T, cin)
    Z = (x2 @ Kp).reshape(n, T, k, cout)
    y = _kernels.fold1d(Z, L, pad, stride) + b.data

    def backward(g):
        gZ = _kernels.unfold1d(g, k, pad, stride, T).reshape(n * T, k * cout)
        gx = (gZ @ Kp.T).reshape(n, T, cin) if x.requires_grad else None
        gK = (x2.T @ gZ).reshape(cin, k, cout).transpose(1, 0, 2)
        return gx, np.ascontiguousarray(gK), g.sum(axis=(0, 1))

    return _unbatch(make_result(y, (x, K, b), backward), squeeze)


def maxpool1d(x, k: int = 2, stride: int = 2) -> Tensor:
    """Windowed max along time; ties send the gradient to the first index."""
    x = as_tensor(x)
    x, squeeze = _batched(x)
    T = x.shape[1]
    if T < k:
        raise ValueError(f"sequence of length {T} shorter than pool size {k}")
    out, idx = _kernels.maxpool1d_forward(x.data, k, stride)
    return _unbatch(
        make_result(out, (x,), lambda g: (_kernels.maxpool1d_backward(g, idx, T),)),
        squeeze,
    )


def lstm_step(x, h, c, Wx, Wh, b):
    """One LSTM cell step; gates laid out (input, forget, candidate, output).

    x (n, d), h and c (n, u), Wx (d, 4u), Wh (u, 4u), b (4u,).
    """
    x, h, c = as_tensor(x), as_tensor(h), as_tensor(c)
    u = h.shape[-1]
    if Wx.shape != (x.shape[-1], 4 * u) or Wh.shape != (u, 4 * u) or b.shape != (4 * u,):
        raise ValueError("lstm_step parameter shapes do not match the state size")
    z = add(add(matmul(x, Wx), matmul(h, Wh)), b)
    i = sigmoid(z[:, 0:u])
    f = sigmoid(z[:, u:2 * u])
    g = tanh(z[:, 2 * u:3 * u])
    o = sigmoid(z[:, 3 * u:4 * u])
    c2 = add(mul(f, c), mul(i, g))
    h2 = mul(o, tanh(c2))
    return h2, c2


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if np.isnan(x.data).any():
        raise ValueError("softmax input contains NaN")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result(s, (x,), backward)


def attention_1d(x, w, beta):
    """One softmax distribution over time shared by every channel.

    x (n, T, C), w (C,), beta (1,) -> y (n, C), scores (n, T).
    """
    x = as_tensor(x)
    x, squeeze = _batched(x)
    C = x.shape[2]
    if w.shape != (C,) or beta.shape != (1,):
        raise ValueError(f"attention_1d parameter shapes {w.shape}, {beta.shape} for {C} channels")
    e = add(matmul(x, reshape(w, (C, 1))), beta)  # (n, T, 1)
    s = softmax(e, axis=1)
    y = sum(mul(s, x), axis=1)
    scores = reshape(s, s.shape[:2])
    if squeeze:
        return reshape(y, (C,)), reshape(scores, scores.shape[1:])
    return y, scores


def attention_2d(x, w, beta):
    """A separate softmax over time for every channel.

    x (n, T, C), w (C,), beta (C,) -> y (n, C), scores (n, T, C).
    """
    x = as_tensor(x)
    x, squeeze = _batched(x)
    C = x.shape[2]
    if w.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"attention_2d parameter shapes {w.shape}, {beta.shape} for {C} channels")
    s = softmax(add(mul(x, w), beta), axis=1)
    y = sum(mul(s, x), axis=1)
    if squeeze:
        return reshape(y, (C,)), reshape(s, s.shape[1:])
    return y, s


def dropout(x, p: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout; identity in eval mode."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, mask)


# -- losses -----------------------------------------------------------------

def _check_labels(labels, n, k):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"label out of range for {k} classes")
    return labels


def cross_entropy(probs, labels) -> Tensor:
    """Mean negative log-probability of the true class, probabilities floored at 1e-12."""
    probs = as_tensor(probs)
    n, k = probs.shape
    labels = _check_labels(labels, n, k)
    picked = probs.data[np.arange(n), labels]
    clamped = np.maximum(picked, PROB_FLOOR)
    loss = -np.mean(np.log(clamped))

    def backward(g):
        gp = np.zeros_like(probs.data)
        gp[np.arange(n), labels] = np.where(picked > PROB_FLOOR, -1.0 / (n * clamped), 0.0)
        return (gp * g,)

    return make_result(np.asarray(loss), (probs,), backward)


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Fused softmax + cross-entropy; the logit gradient is (probs - onehot) / n."""
    logits = as_tensor(logits)
    n, k = logits.shape
    labels = _check_labels(labels, n, k)
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    probs = np.exp(logp)
    picked = np.maximum(probs[np.arange(n), labels], PROB_FLOOR)
    loss = -np.mean(np.log(picked))

    def backward(g):
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        return (d * (g / n),)

    return make_result(np.asarray(loss), (logits,), backward)


def mse(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    d = a.data - b.data
    scale = 2.0 / d.size

    return make_result(
        np.asarray(np.mean(d * d)), (a, b),
        lambda g: (g * scale * d, -g * scale * d),
    )


def stack(tensors, axis: int = 1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(ts)))

    return make_result(np.stack([t.data for t in ts], axis=axis), ts, backward)


def _sig(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_sequence(x, Wx, Wh, b) -> Tensor:
    """Run an LSTM layer over a whole sequence from a zero state.

    Equivalent to chaining :func:`lstm_step` over time but recorded as a
    single op with a hand-written backward-through-time.
    x (n, T, d) -> hidden states (n, T, u).
    """
    x, Wx, Wh, b = as_tensor(x), as_tensor(Wx), as_tensor(Wh), as_tensor(b)
    n, T, d = x.shape
    u = Wh.shape[0]
    if Wx.shape != (d, 4 * u) or Wh.shape != (u, 4 * u) or b.shape != (4 * u,):
        raise ValueError("lstm_sequence parameter shapes do not match")
    proj = x.data @ Wx.data + b.data  # (n, T, 4u)
    H = np.zeros((n, T, u))
    C = np.zeros((n, T, u))
    gates = np.zeros((n, T, 4 * u))
    h = np.zeros((n, u))
    c = np.zeros((n, u))
    for t in range(T):
        z = proj[:, t] + h @ Wh.data
        i, f, o = _sig(z[:, :u]), _sig(z[:, u:2 * u]), _sig(z[:, 3 * u:])
        g = np.tanh(z[:, 2 * u:3 * u])
        c = f * c + i * g
        h = o * np.tanh(c)
        gates[:, t, :u], gates[:, t, u:2 * u], gates[:, t, 2 * u:3 * u], gates[:, t, 3 * u:] = i, f, g, o
        H[:, t], C[:, t] = h, c

    def backward(gH):
        dz = np.zeros_like(gates)
        dh_next = np.zeros((n, u))
        dc_next = np.zeros((n, u))
        for t in range(T - 1, -1, -1):
            i, f, g, o = (gates[:, t, k * u:(k + 1) * u] for k in range(4))
            c_prev = C[:, t - 1] if t > 0 else np.zeros((n, u))
            tc = np.tanh(C[:, t])
            dh = gH[:, t] + dh_next
            dc = dc_next + dh * o * (1 - tc * tc)
            dz[:, t, :u] = dc * g * i * (1 - i)
            dz[:, t, u:2 * u] = dc * c_prev * f * (1 - f)
            dz[:, t, 2 * u:3 * u] = dc * i * (1 - g * g)
            dz[:, t, 3 * u:] = dh * tc * o * (1 - o)
            dh_next = dz[:, t] @ Wh.data.T
            dc_next = dc * f
        H_prev = np.concatenate([np.zeros((n, 1, u)), H[:, :-1]], axis=1)
        dz2 = dz.reshape(n * T, 4 * u)
        gx = dz @ Wx.data.T if x.requires_grad else None
        gWx = x.data.reshape(n * T, d).T @ dz2
        gWh = H_prev.reshape(n * T, u).T @ dz2
        return gx, gWx, gWh, dz2.sum(axis=0)

    return make_result(H, (x, Wx, Wh, b), backward)


def add_noise(x, std: float, rng) -> Tensor:
    """Additive Gaussian corruption; gradient passes straight through."""
    x = as_tensor(x)
    if std <= 0:
        return x
    return add(x, rng.normal(0.0, std, size=x.shape))
