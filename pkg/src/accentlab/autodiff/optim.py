"""Adam and RMSProp. ``step`` consumes the gradients and clears them."""

from __future__ import annotations

import numpy as np


class Optimizer:
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr

    def _grads(self):
        for p in self.params:
            if p.grad is None:
                raise ValueError(f"parameter {getattr(p, 'name', p)!r} has no gradient")
        return [p.grad for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam(Optimizer):
    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step(self):
        for p, g in zip(self.params, self._grads()):
            st = p.state
            if "m" not in st:
                st["m"] = np.zeros_like(p.data)
                st["v"] = np.zeros_like(p.data)
                st["t"] = 0
            st["t"] += 1
            t = st["t"]
            st["m"] = self.beta1 * st["m"] + (1 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1 - self.beta2) * g * g
            m_hat = st["m"] / (1 - self.beta1 ** t)
            v_hat = st["v"] / (1 - self.beta2 ** t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.zero_grad()


class RMSProp(Optimizer):
    def __init__(self, params, lr=0.001, rho=0.9, eps=1e-8):
        super().__init__(params, lr)
        self.rho, self.eps = rho, eps

    def step(self):
        for p, g in zip(self.params, self._grads()):
            st = p.state
            if "v" not in st:
                st["v"] = np.zeros_like(p.data)
                st["t"] = 0
            st["t"] += 1
            st["v"] = self.rho * st["v"] + (1 - self.rho) * g * g
            p.data = p.data - self.lr * g / (np.sqrt(st["v"]) + self.eps)
        self.zero_grad()


def make_optimizer(name: str, params, lr=0.001):
    name = name.lower()
    if name == "adam":
        return Adam(params, lr=lr)
    if name == "rmsprop":
        return RMSProp(params, lr=lr)
    raise ValueError(f"unknown optimizer {name!r}")
