"""Optimizers: SGD with Nesterov momentum, and LARS.

Nesterov uses the lookahead form: b <- mu*b + g, step direction g + mu*b.
LARS scales each parameter's learning rate by
trust_coefficient * ||w|| / (||g|| + weight_decay * ||w||); the ratio is
forced to 1 when either norm is zero.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import AutodiffError, Tensor


class OptimizerState:
    """Per-parameter momentum buffers plus hyperparameters."""

    def __init__(self, params: Sequence[Tensor], lr: float, momentum: float = 0.0,
                 trust_coefficient: float = 0.001, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.trust_coefficient = trust_coefficient
        self.weight_decay = weight_decay
        self.buffers = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def _check(self, grads):
        if len(grads) != len(self.params):
            raise AutodiffError(
                f"got {len(grads)} gradients for {len(self.params)} parameters"
            )
        for p, g in zip(self.params, grads):
            if g.shape != p.data.shape:
                raise AutodiffError(
                    f"gradient shape {g.shape} does not match parameter shape {p.data.shape}"
                )


def sgd_nesterov_step(state: OptimizerState, grads: Sequence[np.ndarray]):
    """One Nesterov-accelerated SGD step, updating parameters in place."""
    state._check(grads)
    mu, lr = state.momentum, state.lr
    for p, b, g in zip(state.params, state.buffers, grads):
        b *= mu
        b += g
        p.data -= lr * (g + mu * b) if mu else lr * g


def lars_step(state: OptimizerState, grads: Sequence[np.ndarray]):
    """One LARS step: layer-wise trust-ratio lr scaling, then momentum update."""
    state._check(grads)
    mu, lr = state.momentum, state.lr
    eta, wd = state.trust_coefficient, state.weight_decay
    for p, b, g in zip(state.params, state.buffers, grads):
        if wd:
            g = g + wd * p.data
        w_norm = float(np.linalg.norm(p.data))
        g_norm = float(np.linalg.norm(g))
        # degenerate norms: trust ratio defined as 1
        if w_norm == 0.0 or g_norm == 0.0:
            ratio = eta
        else:
            ratio = eta * w_norm / (g_norm + wd * w_norm)
        b *= mu
        b += lr * ratio * g
        p.data -= b


class SGDNesterov:
    def __init__(self, params, lr, momentum=0.9):
        self.state = OptimizerState(params, lr, momentum=momentum)

    def zero_grad(self):
        self.state.zero_grad()

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.state.params]
        sgd_nesterov_step(self.state, grads)


class LARS:
    def __init__(self, params, lr, momentum=0.9, trust_coefficient=0.001,
                 weight_decay=0.0):
        self.state = OptimizerState(params, lr, momentum=momentum,
                                    trust_coefficient=trust_coefficient,
                                    weight_decay=weight_decay)

    def zero_grad(self):
        self.state.zero_grad()

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.state.params]
        lars_step(self.state, grads)
