"""The full restoration network: input projection, per-level transformer
stacks with downsampling, a bottleneck, gated skip connections into a
mirrored decoder, and dual-resolution output heads.

Also provides exact parameter accounting and a FLOP estimator that counts
2 ops per multiply-accumulate for convolutions/matmuls and a
2*5*HW*log2(HW) real-op estimate per 2-d transform per channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .attention import TransformerBlock
from .config import ModelConfig
from .errors import ConfigurationError, DimensionError
from .module import Module, conv_weight
from .ops import conv2d, transposed_conv2d
from .skip import PhaseGate, adaptive_kernel_size
from .tensor import Parameter, Tensor, concat


@dataclass
class ModelOutput:
    full_res: Tensor
    double_res: Tensor


class Stack(Module):
    def __init__(self, blocks):
        self.blocks = blocks

    def forward(self, x):
        for block in self.blocks:
            x = block.forward(x)
        return x


class Phaseformer(Module):
    """Encoder-decoder restoration transformer (see ModelConfig for shape)."""

    def __init__(self, config: ModelConfig, seed=0, dtype=np.float32):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        c = config.base_channels
        levels = config.levels
        block_kwargs = dict(
            expansion=config.ffn_expansion,
            attention_kind=config.attention_kind,
            residual_kind=config.residual_kind,
            pem_differentiable=config.pem_differentiable,
            dtype=dtype,
        )

        def stack(width, heads, count):
            return Stack([TransformerBlock(width, heads, rng, **block_kwargs)
                          for _ in range(count)])

        self.input_proj = conv_weight(rng, c, 3, 3, dtype)

        self.encoder_stacks = []
        self.down_convs = []
        for level in range(1, levels + 1):
            width = config.channels_at(level)
            self.encoder_stacks.append(
                stack(width, config.heads_per_level[level - 1],
                      config.blocks_per_level[level - 1])
            )
            self.down_convs.append(conv_weight(rng, 2 * width, width, 3, dtype))

        self.bottleneck = stack(config.bottleneck_channels, config.bottleneck_heads,
                                config.bottleneck_blocks)

        up_convs, gates, reduces, dec_stacks = [], [], [], []
        for level in range(levels, 0, -1):
            width = config.channels_at(level)
            k = config.upsample_kernel
            up_convs.append(self._up_weight(rng, 2 * width, width, k, dtype))
            if config.skip_kind == "opab":
                gates.append(PhaseGate(width, rng, use_phase=True,
                                       pem_differentiable=config.pem_differentiable,
                                       dtype=dtype))
            elif config.skip_kind == "oa":
                gates.append(PhaseGate(width, rng, use_phase=False, dtype=dtype))
            reduces.append(conv_weight(rng, width, 2 * width, 1, dtype))
            dec_stacks.append(
                stack(width, config.heads_per_level[level - 1],
                      config.decoder_blocks_per_level[level - 1])
            )
        # store in level order (index 0 = level 1)
        self.up_convs = up_convs[::-1]
        self.skip_gates = gates[::-1]
        self.reduce_convs = reduces[::-1]
        self.decoder_stacks = dec_stacks[::-1]

        self.head_full = conv_weight(rng, 3, c, 3, dtype)
        self.head_up = self._up_weight(rng, c, c, config.upsample_kernel, dtype)
        self.head_double = conv_weight(rng, 3, c, 3, dtype)

    @staticmethod
    def _up_weight(rng, cin, cout, k, dtype):
        from .module import glorot_uniform

        return Parameter(glorot_uniform(rng, (cin, cout, k, k), cin * k * k,
                                        cout * k * k, dtype))

    def _upsample(self, x, weight):
        out = transposed_conv2d(x, weight, stride=2)
        k = weight.shape[-1]
        if k > 2:
            crop = (k - 2) // 2
            h, w = x.shape[2] * 2, x.shape[3] * 2
            out = out[:, :, crop : crop + h, crop : crop + w]
        return out

    def forward(self, x):
        config = self.config
        if x.ndim != 4 or x.shape[1] != 3:
            raise DimensionError(f"expected (N,3,H,W) input, got {x.shape}")
        h, w = x.shape[2], x.shape[3]
        divisor = 2**config.levels
        if h % divisor or w % divisor:
            raise ConfigurationError(
                f"spatial dims {h}x{w} must be divisible by 2^levels = {divisor}"
            )

        feat = conv2d(x, self.input_proj)
        skips = []
        for level in range(1, config.levels + 1):
            feat = self.encoder_stacks[level - 1].forward(feat)
            skips.append(feat)
            feat = conv2d(feat, self.down_convs[level - 1], stride=2)

        feat = self.bottleneck.forward(feat)

        for level in range(config.levels, 0, -1):
            feat = self._upsample(feat, self.up_convs[level - 1])
            skip = skips[level - 1]
            if config.skip_kind != "identity":
                skip = self.skip_gates[level - 1].forward(skip)
            feat = conv2d(concat([skip, feat], axis=1), self.reduce_convs[level - 1])
            feat = self.decoder_stacks[level - 1].forward(feat)

        full = conv2d(feat, self.head_full)
        doubled = conv2d(self._upsample(feat, self.head_up), self.head_double)
        return ModelOutput(full_res=full, double_res=doubled)


# -- accounting ----------------------------------------------------------------------


def count_parameters(config: ModelConfig, breakdown_depth=2):
    """Exact trainable-scalar count with a per-module-path breakdown."""
    model = Phaseformer(config, seed=0)
    total = 0
    breakdown = {}
    for name, p in model.named_parameters():
        total += p.size
        key = ".".join(name.split(".")[:breakdown_depth])
        breakdown[key] = breakdown.get(key, 0) + p.size
    return total, breakdown


def _fft_flops(channels, h, w):
    return channels * 2.0 * 5.0 * h * w * math.log2(h * w)


def estimate_flops(config: ModelConfig, input_size=None):
    """Symbolic FLOP walk for a single image of `input_size`.

    Returns a dict with `total` and a breakdown into `conv` (all conv and
    matmul work outside attention), `attention` (the channel-attention
    matmuls) and `fft` (every forward/inverse transform).
    """
    config.validate()
    h, w = input_size if input_size is not None else config.input_size
    e = config.ffn_expansion
    conv = 0.0
    attention = 0.0
    fft = 0.0

    def block_cost(width, heads, hh, ww, phase):
        nonlocal conv, attention, fft
        hw = hh * ww
        if phase:
            fft += 2.0 * _fft_flops(width, hh, ww)  # forward + inverse in pem
        conv += 4.0 * 2.0 * width * width * hw  # q/k/v/out point projections
        conv += 3.0 * 2.0 * 9.0 * width * hw  # q/k/v depthwise
        attention += 2.0 * 2.0 * width * width * hw / heads  # two C'xC' matmuls
        expanded = 2.0 * e * width
        conv += 2.0 * width * expanded * hw  # ffn expand
        conv += 2.0 * 9.0 * expanded * hw  # ffn depthwise
        conv += 2.0 * (e * width) * width * hw  # ffn project

    phase = config.attention_kind == "phase"
    c = config.base_channels
    conv += 2.0 * 3.0 * c * 9.0 * h * w  # input projection

    hh, ww = h, w
    for level in range(1, config.levels + 1):
        width = config.channels_at(level)
        for _ in range(config.blocks_per_level[level - 1]):
            block_cost(width, config.heads_per_level[level - 1], hh, ww, phase)
        conv += 2.0 * width * (2 * width) * 9.0 * (hh // 2) * (ww // 2)  # downsample
        hh, ww = hh // 2, ww // 2

    for _ in range(config.bottleneck_blocks):
        block_cost(config.bottleneck_channels, config.bottleneck_heads, hh, ww, phase)

    for level in range(config.levels, 0, -1):
        width = config.channels_at(level)
        hh, ww = hh * 2, ww * 2
        k = config.upsample_kernel
        conv += 2.0 * (2 * width) * width * k * k * (hh // 2) * (ww // 2)  # upsample
        if config.skip_kind == "opab":
            fft += 2.0 * _fft_flops(width, hh, ww)
            conv += 2.0 * adaptive_kernel_size(width) * width  # 1-d gate conv
        elif config.skip_kind == "oa":
            conv += 2.0 * adaptive_kernel_size(width) * width
        conv += 2.0 * (2 * width) * width * hh * ww  # concat reduction (1x1)
        for _ in range(config.decoder_blocks_per_level[level - 1]):
            block_cost(width, config.heads_per_level[level - 1], hh, ww, phase)

    conv += 2.0 * c * 3.0 * 9.0 * h * w  # full-res head
    k = config.upsample_kernel
    conv += 2.0 * c * c * k * k * h * w  # x2 upsampling head
    conv += 2.0 * c * 3.0 * 9.0 * (2 * h) * (2 * w)  # x2 head conv

    total = conv + attention + fft
    return {"total": total, "conv": conv, "attention": attention, "fft": fft}


def ablation_variants(config: ModelConfig):
    """The five study configurations: (name, model config, loss weight mode)."""
    return [
        ("plain-attention", replace(config, attention_kind="plain", skip_kind="identity"),
         "learnable"),
        ("phase-attention", replace(config, attention_kind="phase", skip_kind="identity"),
         "learnable"),
        ("phase+oa-fixed", replace(config, attention_kind="phase", skip_kind="oa"),
         "fixed"),
        ("phase+opab-fixed", replace(config, attention_kind="phase", skip_kind="opab"),
         "fixed"),
        ("full", replace(config, attention_kind="phase", skip_kind="opab"),
         "learnable"),
    ]
