"""Adadelta parameter updates.

Keeps running averages of squared gradients and squared updates and
scales each step by their RMS ratio; the learning rate multiplies the
final delta.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .tensor import Tensor


def adadelta_step(params, grads, state, rho=0.95, eps=1e-6, lr=1.0):
    """One in-place update over parallel lists of arrays.

    ``state`` is a list of (avg_sq_grad, avg_sq_delta) pairs matching
    ``params``; pass ``None`` entries to initialise at zero.  Returns the
    state for chaining.
    """
    if len(params) != len(grads) or len(params) != len(state):
        raise ShapeMismatch("adadelta_step", (len(params),), (len(grads),), (len(state),))
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeMismatch("adadelta_step", p.shape, g.shape)
        if state[i] is None:
            state[i] = (np.zeros_like(p), np.zeros_like(p))
        avg_g2, avg_d2 = state[i]
        if avg_g2.shape != p.shape:
            raise ShapeMismatch("adadelta_step", avg_g2.shape, p.shape)
        avg_g2 *= rho
        avg_g2 += (1.0 - rho) * g * g
        delta = -np.sqrt(avg_d2 + eps) / np.sqrt(avg_g2 + eps) * g
        avg_d2 *= rho
        avg_d2 += (1.0 - rho) * delta * delta
        p += lr * delta
    return state


class Adadelta:
    """Stateful wrapper over :func:`adadelta_step` for named tensors."""

    def __init__(self, params: dict[str, Tensor], rho=0.95, eps=1e-6, lr=1.0):
        self.params = params
        self.rho = rho
        self.eps = eps
        self.lr = lr
        self.state = {name: None for name in params}

    def step(self) -> None:
        names = list(self.params)
        tensors = [self.params[n] for n in names]
        arrays = [t.data for t in tensors]
        grads = [t.grad_or_zeros() for t in tensors]
        state = [self.state[n] for n in names]
        state = adadelta_step(
            arrays, grads, state, rho=self.rho, eps=self.eps, lr=self.lr
        )
        for n, s in zip(names, state):
            self.state[n] = s

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()
