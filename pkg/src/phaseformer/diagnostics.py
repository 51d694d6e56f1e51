"""Self-checks and the amplitude-vs-phase degradation study.

`diagnose_phase` quantifies how much a degradation moved the spectral
amplitude versus the spectral phase of each pair: amplitude distance is
the relative L2 change of the magnitude grid, phase distance the L2 norm
of the wrapped phase difference scaled by its maximum possible value
(pi per bin).

`run_gradient_checks` drives every differentiable building block and a
micro end-to-end model through central finite differences; the CLI wires
it to the grad-check subcommand. Its fault-injection hook corrupts one
analytic gradient so the failure path is testable.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .errors import UsageError
from .losses import FeatureExtractor, charbonnier, gradient_loss, ms_ssim_loss, perceptual_loss
from .model import Phaseformer
from .ops import (
    conv1d,
    conv2d,
    depthwise_conv2d,
    gelu,
    layer_norm,
    sigmoid,
    softmax,
    transposed_conv2d,
)
from .skip import adaptive_kernel_size, opab
from .spectral import _fft2_core, pem
from .tensor import Tensor, backward, matmul

_LUMA = (0.299, 0.587, 0.114)


def _luma(img):
    return _LUMA[0] * img[0] + _LUMA[1] * img[1] + _LUMA[2] * img[2]


def _wrap(angle):
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def diagnose_phase(dataset):
    """Per-pair spectral amplitude/phase distances and their summary."""
    if len(dataset) == 0:
        raise UsageError("diagnose_phase needs a non-empty paired dataset")
    amp_distances = []
    phase_distances = []
    for i in range(len(dataset)):
        degraded, clean = dataset.pair(i)
        spec_clean = _fft2_core(_luma(clean.astype(np.float64)))
        spec_deg = _fft2_core(_luma(degraded.astype(np.float64)))
        mag_clean = np.abs(spec_clean)
        mag_deg = np.abs(spec_deg)
        denom = np.linalg.norm(mag_clean)
        amp = float(np.linalg.norm(mag_clean - mag_deg) / denom) if denom else 0.0
        delta = _wrap(np.angle(spec_clean) - np.angle(spec_deg))
        h, w = delta.shape
        phase = float(np.linalg.norm(delta) / (np.pi * np.sqrt(h * w)))
        amp_distances.append(amp)
        phase_distances.append(phase)
    amp_arr = np.asarray(amp_distances)
    phase_arr = np.asarray(phase_distances)
    return {
        "pairs": len(dataset),
        "amplitude_distances": amp_distances,
        "phase_distances": phase_distances,
        "mean_amplitude_distance": float(amp_arr.mean()),
        "mean_phase_distance": float(phase_arr.mean()),
        "fraction_amplitude_dominant": float((amp_arr > phase_arr).mean()),
    }


# -- finite-difference self-check ------------------------------------------------


def _numeric_grad(fn, arrays, index, h=1e-5):
    arrays = [a.astype(np.float64, copy=True) for a in arrays]
    flat = arrays[index].reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = fn(arrays)
        flat[i] = orig - h
        lo = fn(arrays)
        flat[i] = orig
        grad[i] = (hi - lo) / (2.0 * h)
    return grad.reshape(arrays[index].shape)


def _check_case(name, build, rng, tolerance, fault=False):
    """build(arrays) -> scalar Tensor given float64 input arrays."""
    shapes, fn = build
    arrays = [rng.standard_normal(s) for s in shapes]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    backward(fn(tensors))
    worst = 0.0
    for i, t in enumerate(tensors):
        analytic = t.grad.copy()
        if fault:
            analytic *= 1.001
        numeric = _numeric_grad(lambda arrs: float(fn([Tensor(a) for a in arrs]).data),
                                arrays, i)
        scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-12)
        worst = max(worst, float(np.abs(analytic - numeric).max(initial=0.0) / scale))
    return worst


def _op_cases(rng):
    fx = FeatureExtractor(dtype=np.float64)
    k_gate = adaptive_kernel_size(8)
    weight_field = rng.standard_normal((1, 4, 6, 6))

    return [
        ("conv2d", ([(1, 2, 5, 5), (3, 2, 3, 3)],
                    lambda ts: (conv2d(ts[0], ts[1]) * 0.3).sum())),
        ("conv2d_stride2", ([(1, 2, 5, 5), (2, 2, 3, 3)],
                            lambda ts: conv2d(ts[0], ts[1], stride=2).sum())),
        ("depthwise_conv2d", ([(1, 3, 4, 4), (3, 1, 3, 3)],
                              lambda ts: (depthwise_conv2d(ts[0], ts[1]) ** 2.0).sum())),
        ("conv1d", ([(1, 1, 8), (1, 1, 3)],
                    lambda ts: (conv1d(ts[0], ts[1]) ** 2.0).sum())),
        ("transposed_conv2d", ([(1, 2, 3, 3), (2, 2, 2, 2)],
                               lambda ts: (transposed_conv2d(ts[0], ts[1]) ** 2.0).sum())),
        ("matmul", ([(3, 4), (4, 2)],
                    lambda ts: (matmul(ts[0], ts[1]) ** 2.0).sum())),
        ("softmax", ([(2, 5)],
                     lambda ts: (softmax(ts[0], axis=1) ** 2.0).sum())),
        ("sigmoid", ([(2, 6)], lambda ts: (sigmoid(ts[0]) ** 2.0).sum())),
        ("gelu", ([(2, 6)], lambda ts: (gelu(ts[0]) ** 2.0).sum())),
        ("layer_norm", ([(1, 4, 3, 3), (4,)],
                        lambda ts: (layer_norm(ts[0], ts[1]) ** 2.0).sum())),
        ("pem", ([(1, 1, 4, 4)],
                 lambda ts: (pem(ts[0]) * Tensor(weight_field[:, :1, :4, :4])).sum())),
        ("opab", ([(1, 8, 4, 4), (1, 1, k_gate)],
                  lambda ts: (opab(ts[0], ts[1]) ** 2.0).sum())),
        ("charbonnier", ([(1, 2, 6, 6), (1, 2, 6, 6)],
                         lambda ts: charbonnier(ts[0], ts[1]))),
        ("gradient_loss", ([(1, 2, 6, 6), (1, 2, 6, 6)],
                           lambda ts: gradient_loss(ts[0], ts[1]))),
        # correlated pair keeps the contrast term well inside its clamp
        ("ms_ssim", ([(1, 1, 16, 16), (1, 1, 16, 16)],
                     lambda ts: ms_ssim_loss(ts[0] * 0.2 + 0.5,
                                             ts[0] * 0.14 + ts[1] * 0.05 + 0.5))),
        ("perceptual", ([(1, 3, 8, 8), (1, 3, 8, 8)],
                        lambda ts: perceptual_loss(ts[0], ts[1], fx))),
    ]


def micro_model_check(sample_count=20, seed=0, tolerance=1e-3):
    """Finite differences through the full network on a random parameter sample."""
    config = ModelConfig(
        base_channels=4,
        blocks_per_level=(1, 1, 1),
        bottleneck_blocks=1,
        decoder_blocks_per_level=(1, 1, 1),
        heads_per_level=(1, 2, 4),
        bottleneck_heads=8,
        input_size=(16, 16),
    )
    model = Phaseformer(config, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed)
    x = rng.random((1, 3, 16, 16))
    weight_full = rng.standard_normal((1, 3, 16, 16))
    weight_double = rng.standard_normal((1, 3, 32, 32))

    def forward_value():
        out = model.forward(Tensor(x))
        return (out.full_res * Tensor(weight_full)).sum() + (
            out.double_res * Tensor(weight_double)
        ).sum()

    model.zero_grad()
    backward(forward_value())

    named = list(model.named_parameters())
    h = 1e-5
    worst = 0.0
    for _ in range(sample_count):
        pname, param = named[rng.integers(len(named))]
        flat_index = int(rng.integers(param.size))
        flat = param.data.reshape(-1)
        orig = flat[flat_index]
        flat[flat_index] = orig + h
        hi = float(forward_value().data)
        flat[flat_index] = orig - h
        lo = float(forward_value().data)
        flat[flat_index] = orig
        numeric = (hi - lo) / (2.0 * h)
        analytic = param.grad.reshape(-1)[flat_index]
        scale = max(abs(analytic), abs(numeric), 1e-10)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def run_gradient_checks(fault_injection=False, log=print, op_tolerance=1e-4,
                        model_tolerance=1e-3):
    """Run the finite-difference suite; returns True when everything passes."""
    rng = np.random.default_rng(2024)
    ok = True
    for index, (name, build) in enumerate(_op_cases(rng)):
        fault = fault_injection and index == 0
        worst = _check_case(name, build, rng, op_tolerance, fault=fault)
        passed = worst < op_tolerance
        ok = ok and passed
        log(f"grad-check {name}: max relative error {worst:.3e} "
            f"{'PASS' if passed else 'FAIL'}")
    worst = micro_model_check()
    passed = worst < model_tolerance
    ok = ok and passed
    log(f"grad-check micro-model: max relative error {worst:.3e} "
        f"{'PASS' if passed else 'FAIL'}")
    return ok
