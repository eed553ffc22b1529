"""Adam with global gradient-norm clipping.

Clipping happens first: if the L2 norm over all update targets exceeds
``clip_norm``, every gradient is scaled by ``clip_norm / norm``. The
Adam update then runs with bias correction (β₁=0.9, β₂=0.999, ε=1e-8).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericError


class Adam:
    """Owns moment state for a fixed list of (name, tensor) targets.

    Tensors whose ``grad`` is None are treated as having exactly zero
    gradient: their moments stay zero and their values do not move.
    """

    def __init__(
        self,
        targets,
        learning_rate: float = 0.001,
        clip_norm: float = 2.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.targets = list(targets)
        self.learning_rate = learning_rate
        self.clip_norm = clip_norm
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._m = {}
        self._v = {}

    def _grad_norm(self) -> float:
        total = 0.0
        for _, t in self.targets:
            if t.grad is not None:
                total += float((t.grad.astype(np.float64) ** 2).sum())
        return math.sqrt(total)

    def step(self) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        for name, t in self.targets:
            if t.grad is not None and not np.all(np.isfinite(t.grad)):
                raise NumericError(f"non-finite gradient for {name!r}; step aborted")

        norm = self._grad_norm()
        scale = 1.0
        if self.clip_norm > 0 and norm > self.clip_norm:
            scale = self.clip_norm / norm

        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for name, t in self.targets:
            if t.grad is None:
                continue
            g = t.grad * scale
            m = self._m.get(name)
            if m is None:
                m = np.zeros_like(t.data)
                v = np.zeros_like(t.data)
            else:
                v = self._v[name]
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            m_hat = m / bc1
            v_hat = v / bc2
            t.data = t.data - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
        return norm


def clip_gradients(tensors, clip_norm: float) -> float:
    """Standalone global-norm clip (in place); returns the pre-clip norm."""
    total = 0.0
    for t in tensors:
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
    norm = math.sqrt(total)
    if clip_norm > 0 and norm > clip_norm:
        factor = clip_norm / norm
        for t in tensors:
            if t.grad is not None:
                t.grad = t.grad * factor
    return norm
