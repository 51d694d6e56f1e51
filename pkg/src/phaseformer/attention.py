"""Phase-based multi-head transposed attention, the gated feed-forward
network, and the transformer block combining them.

Queries and keys are projected from the phase-only reconstruction of the
block input, so the attention map is invariant to positive rescaling of
the input; values are projected from the input directly. Attention is
computed channel-against-channel (a C'xC' map per head), never touching a
pixel-by-pixel map.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .module import Module, conv_weight, depthwise_weight
from .ops import conv2d, depthwise_conv2d, gelu, layer_norm, softmax
from .spectral import pem
from .tensor import Parameter, matmul
from . import tensor as T


class Pmsa(Module):
    """Multi-head attention over channels with phase-derived queries/keys.

    `alpha` is one learnable temperature per head, initialized to
    sqrt(channels/heads).
    """

    def __init__(self, channels, heads, rng, attention_kind="phase",
                 pem_differentiable=True, dtype=np.float32):
        if channels % heads:
            raise ConfigurationError(
                f"channel count {channels} not divisible by head count {heads}"
            )
        self.heads = heads
        self.attention_kind = attention_kind
        self.pem_differentiable = pem_differentiable
        self.q_point = conv_weight(rng, channels, channels, 1, dtype)
        self.q_depth = depthwise_weight(rng, channels, 3, dtype)
        self.k_point = conv_weight(rng, channels, channels, 1, dtype)
        self.k_depth = depthwise_weight(rng, channels, 3, dtype)
        self.v_point = conv_weight(rng, channels, channels, 1, dtype)
        self.v_depth = depthwise_weight(rng, channels, 3, dtype)
        self.out_point = conv_weight(rng, channels, channels, 1, dtype)
        self.alpha = Parameter(np.full(heads, np.sqrt(channels / heads), dtype=dtype))

    def forward(self, y, residual=None, return_map=False):
        n, c, h, w = y.shape
        heads = self.heads
        per_head = c // heads
        hw = h * w

        if self.attention_kind == "phase":
            base = pem(y, differentiable=self.pem_differentiable)
        else:
            base = y
        q = depthwise_conv2d(conv2d(base, self.q_point), self.q_depth)
        k = depthwise_conv2d(conv2d(base, self.k_point), self.k_depth)
        v = depthwise_conv2d(conv2d(y, self.v_point), self.v_depth)

        q_mat = q.reshape(n, heads, per_head, hw).transpose(0, 1, 3, 2)  # HW x C/h
        k_mat = k.reshape(n, heads, per_head, hw)                        # C/h x HW
        v_mat = v.reshape(n, heads, per_head, hw).transpose(0, 1, 3, 2)  # HW x C/h

        logits = matmul(k_mat, q_mat) / self.alpha.reshape(1, heads, 1, 1)
        attn = softmax(logits, axis=3)
        mixed = matmul(v_mat, attn).transpose(0, 1, 3, 2).reshape(n, c, h, w)

        out = conv2d(mixed, self.out_point) + (y if residual is None else residual)
        if return_map:
            return out, attn
        return out


class FeedForward(Module):
    """Gated feed-forward unit: expand, depthwise mix, gelu-gate, project."""

    def __init__(self, channels, rng, expansion=2.0, dtype=np.float32):
        expanded = 2.0 * expansion * channels
        if expanded != int(expanded) or int(expanded) % 2:
            raise ConfigurationError(
                f"expansion {expansion} of {channels} channels gives odd width {expanded}"
            )
        self.hidden = int(expanded) // 2
        self.expand_point = conv_weight(rng, int(expanded), channels, 1, dtype)
        self.expand_depth = depthwise_weight(rng, int(expanded), 3, dtype)
        self.project_point = conv_weight(rng, channels, self.hidden, 1, dtype)

    def forward(self, z, residual=None):
        x = depthwise_conv2d(conv2d(z, self.expand_point), self.expand_depth)
        a = x[:, : self.hidden]
        b = x[:, self.hidden :]
        out = conv2d(gelu(a) * b, self.project_point)
        return out + (z if residual is None else residual)


class TransformerBlock(Module):
    """norm -> attention (residual) -> norm -> feed-forward (residual).

    With `residual_kind="normalized"` the residual targets are the
    normalized tensors (the literal composition); "pre_norm" residuals add
    the un-normalized inputs instead.
    """

    def __init__(self, channels, heads, rng, expansion=2.0, attention_kind="phase",
                 residual_kind="normalized", pem_differentiable=True, dtype=np.float32):
        if residual_kind not in ("normalized", "pre_norm"):
            raise ConfigurationError(f"unknown residual kind: {residual_kind}")
        self.residual_kind = residual_kind
        self.norm1 = Parameter(np.ones(channels, dtype=dtype))
        self.attn = Pmsa(channels, heads, rng, attention_kind, pem_differentiable, dtype)
        self.norm2 = Parameter(np.ones(channels, dtype=dtype))
        self.ffn = FeedForward(channels, rng, expansion, dtype)

    def forward(self, x):
        pre = self.residual_kind == "pre_norm"
        y = layer_norm(x, self.norm1)
        z = self.attn.forward(y, residual=x if pre else None)
        y2 = layer_norm(z, self.norm2)
        return self.ffn.forward(y2, residual=z if pre else None)
