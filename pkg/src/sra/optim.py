"""Adam with per-group learning rates, global-norm clipping and a cosine schedule."""

from __future__ import annotations

import math

import numpy as np

from .tensor import GradientMap, Parameter


class Adam:
    def __init__(self, groups: list[tuple[list[Parameter], float]], betas=(0.9, 0.999), eps=1e-8,
                 grad_clip: float | None = None, total_steps: int | None = None, schedule: str = "constant"):
        if schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown schedule {schedule!r}")
        self.groups = [(list(params), float(lr)) for params, lr in groups]
        self.b1, self.b2 = betas
        self.eps = eps
        self.grad_clip = grad_clip
        self.total_steps = total_steps
        self.schedule = schedule
        self.t = 0
        self._m = {id(p): np.zeros_like(p.data) for ps, _ in self.groups for p in ps}
        self._v = {id(p): np.zeros_like(p.data) for ps, _ in self.groups for p in ps}

    @property
    def params(self) -> list[Parameter]:
        return [p for ps, _ in self.groups for p in ps]

    def lr_scale(self) -> float:
        if self.schedule == "constant" or not self.total_steps:
            return 1.0
        frac = min(self.t / self.total_steps, 1.0)
        return 0.5 * (1.0 + math.cos(math.pi * frac))

    def step(self, grads: GradientMap) -> float:
        """Apply one update; returns the pre-clip global gradient norm."""
        norm = math.sqrt(sum(float((grads[p].data ** 2).sum()) for p in self.params))
        if not math.isfinite(norm):
            raise FloatingPointError("non-finite gradient norm")
        clip = 1.0
        if self.grad_clip and norm > self.grad_clip:
            clip = self.grad_clip / norm
        scale = self.lr_scale()
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for params, lr in self.groups:
            for p in params:
                g = grads[p].data * clip
                m = self._m[id(p)]
                v = self._v[id(p)]
                m *= self.b1
                m += (1.0 - self.b1) * g
                v *= self.b2
                v += (1.0 - self.b2) * g * g
                p.data -= lr * scale * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm
