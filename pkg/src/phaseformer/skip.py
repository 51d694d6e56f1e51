"""Channel gating for encoder skip features.

The gate pools the phase-only reconstruction of the skip features, runs an
adaptively sized 1-d convolution across channels and squashes through a
sigmoid; the result scales each channel of the skip. Because the phase-only
reconstruction ignores positive rescaling, so does the gate.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigurationError, DomainError
from .module import Module, glorot_uniform
from .ops import conv1d, global_avg_pool2d, sigmoid
from .spectral import pem
from .tensor import Parameter


def adaptive_kernel_size(c_prime, gamma=2, b=1):
    """Odd 1-d kernel length derived from the channel count.

    t = log2(c')/gamma + b/gamma; the result is floor(t) bumped up to the
    next odd number when floor(t) is even, never below 1.
    """
    if c_prime < 1:
        raise DomainError(f"channel count must be >= 1, got {c_prime}")
    t = math.log2(c_prime) / gamma + b / gamma
    k = math.floor(t)
    if k < 1 or k % 2 == 0:
        k += 1
    return k


def _gate(u, kernel, use_phase, pem_differentiable=True):
    n, c = u.shape[0], u.shape[1]
    k = kernel.shape[-1]
    expected = adaptive_kernel_size(c)
    if k != expected:
        raise ConfigurationError(
            f"gate kernel length {k} does not match adaptive size {expected} for {c} channels"
        )
    feats = pem(u, differentiable=pem_differentiable) if use_phase else u
    pooled = global_avg_pool2d(feats).reshape(n, 1, c)
    gate = sigmoid(conv1d(pooled, kernel)).reshape(n, c, 1, 1)
    return u * gate


def opab(u, kernel, pem_differentiable=True):
    """Phase-attentive channel gate: u * sigmoid(conv1d(GAP(pem(u))))."""
    return _gate(u, kernel, use_phase=True, pem_differentiable=pem_differentiable)


def oa_ablation(u, kernel):
    """Same gate computed from the raw features (no phase extraction)."""
    return _gate(u, kernel, use_phase=False)


class PhaseGate(Module):
    """Module wrapper owning the adaptive 1-d kernel for one skip level."""

    def __init__(self, channels, rng, use_phase=True, pem_differentiable=True,
                 dtype=np.float32):
        k = adaptive_kernel_size(channels)
        self.use_phase = use_phase
        self.pem_differentiable = pem_differentiable
        self.kernel = Parameter(glorot_uniform(rng, (1, 1, k), k, 1, dtype))

    def forward(self, u):
        return _gate(u, self.kernel, self.use_phase, self.pem_differentiable)
