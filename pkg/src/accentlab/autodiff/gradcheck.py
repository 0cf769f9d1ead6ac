from __future__ import annotations

import numpy as np

from .tensor import Tape


def _relative_error(a, n) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numerical_gradient(fn, inputs, eps: float = 1e-3) -> list[np.ndarray]:
    """Central-difference gradient of the scalar ``fn(*inputs)`` for every input."""
    grads = []
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        g = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(fn(*inputs).data)
            flat[i] = orig - eps
            down = float(fn(*inputs).data)
            flat[i] = orig
            g[i] = (up - down) / (2 * eps)
        grads.append(g.reshape(t.data.shape))
    return grads


def analytic_gradient(fn, inputs) -> list[np.ndarray]:
    for t in inputs:
        t.grad = None
    with Tape() as tape:
        out = fn(*inputs)
    tape.backward(out)
    grads = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    for t in inputs:
        t.grad = None
    return grads


def grad_check(fn, inputs, eps: float = 1e-3) -> float:
    """Largest elementwise relative error between tape and central-difference gradients.

    ``fn(*inputs)`` must return a scalar tensor. The relative error of one
    element is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    analytic = analytic_gradient(fn, inputs)
    numeric = numerical_gradient(fn, inputs, eps)
    return max((float(_relative_error(a, n).max()) for a, n in zip(analytic, numeric) if a.size),
               default=0.0)


def fd_converged(fn, inputs, eps: float = 1e-3, tol: float = 1e-5) -> bool:
    """Whether central differences at ``eps`` have converged for this instance.

    Compares the estimates at ``eps`` and ``eps / 10`` with the same
    elementwise relative error. Truncation error shrinks a hundredfold over
    that step, so agreement within ``tol`` bounds the error of the ``eps``
    estimate. Steps across a kink, and components too small to resolve in
    float64, both fail. The tape is never consulted.
    """
    coarse = numerical_gradient(fn, inputs, eps)
    fine = numerical_gradient(fn, inputs, eps / 10)
    return all(float(_relative_error(c, f).max()) <= tol for c, f in zip(coarse, fine) if c.size)
