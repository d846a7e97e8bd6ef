"""Adam-style adaptive gradient steps."""

from __future__ import annotations

import numpy as np


class Adam:
    """Per-coordinate adaptive steps with bias-corrected moment estimates.

    ``step`` takes a gradient of an objective to *minimise*. The learning rate
    at iteration ``t`` is ``lr * (1 + t / decay) ** -power`` when ``decay`` is set.
    """

    def __init__(self, size, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, decay=None,
                 power=0.5):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay = decay
        self.power = power
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        lr = self.lr if not self.decay else self.lr * (1.0 + self.t / self.decay) ** -self.power
        return -lr * m_hat / (np.sqrt(v_hat) + self.eps)
