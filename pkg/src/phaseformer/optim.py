"""First-order training machinery: bias-corrected Adam and the cosine
learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, NumericalAbort, UsageError


def cosine_lr(step, total_steps, lr0=3e-4, lr_min=1e-6):
    """Cosine annealing from lr0 (step 0) to lr_min (step == total_steps).

    Steps beyond the schedule clamp to lr_min.
    """
    if total_steps < 1:
        raise ConfigurationError(f"total_steps must be >= 1, got {total_steps}")
    if step < 0:
        raise UsageError(f"step must be >= 0, got {step}")
    if step >= total_steps:
        return lr_min
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


class Adam:
    """Standard Adam over a name->Parameter mapping.

    Moments live per parameter name in the parameter's dtype; missing
    gradients count as zero. A non-finite gradient aborts, naming the
    parameter.
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr):
        self.step_count += 1
        t = self.step_count
        correct1 = 1.0 - self.beta1**t
        correct2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            elif not np.isfinite(grad).all():
                raise NumericalAbort(f"non-finite gradient in parameter {name!r}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            p.data -= lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
