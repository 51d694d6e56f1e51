"""Training losses and their adaptive weighting.

Four per-resolution losses (Charbonnier, gradient, multi-scale structural
similarity, deep-feature perceptual) are combined with weights realized on
a simplex, then the full-resolution and x2-resolution terms are mixed with
fixed coefficients.
"""

from __future__ import annotations

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError
from .module import Module
from .ops import avg_pool2d, conv2d, gelu, softmax
from .tensor import Parameter, Tensor, _node, clamp, square, tsqrt

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _check_same_shape(x, y, what):
    if x.shape != y.shape:
        raise DimensionError(f"{what} shapes differ: {x.shape} vs {y.shape}")


def charbonnier(x, y, eps=1e-3):
    """mean(sqrt((x-y)^2 + eps^2)); smooth everywhere, floor value eps."""
    _check_same_shape(x, y, "charbonnier")
    diff = x - y
    return tsqrt(square(diff) + eps * eps).mean()


def gradient_loss(x, y):
    """Mean absolute difference of forward-difference image gradients.

    Horizontal and vertical contributions are averaged, so a constant
    offset between x and y costs nothing.
    """
    _check_same_shape(x, y, "gradient_loss")
    dh = x[:, :, :, 1:] - x[:, :, :, :-1]
    dv = x[:, :, 1:, :] - x[:, :, :-1, :]
    gh = y[:, :, :, 1:] - y[:, :, :, :-1]
    gv = y[:, :, 1:, :] - y[:, :, :-1, :]
    return ((dh - gh).abs().mean() + (dv - gv).abs().mean()) * 0.5


def _gaussian_taps():
    half = (_SSIM_WINDOW - 1) / 2.0
    coords = np.arange(_SSIM_WINDOW) - half
    g = np.exp(-(coords**2) / (2.0 * _SSIM_SIGMA**2))
    return g / g.sum()


_GAUSS_TAPS = _gaussian_taps()


def _corr1d_valid(arr, taps, axis):
    windows = sliding_window_view(arr, taps.size, axis=axis)
    return np.tensordot(windows, taps, axes=([arr.ndim], [0]))


def _corr1d_full(arr, taps, axis):
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (taps.size - 1, taps.size - 1)
    return _corr1d_valid(np.pad(arr, pad), taps, axis)


def gaussian_filter_valid(x):
    """Separable 11-tap Gaussian filter, valid padding, as one tape node.

    The kernel is symmetric, so the adjoint is a full-extent correlation
    with the same taps on each axis.
    """
    taps = _GAUSS_TAPS.astype(np.float64 if x.dtype == np.float64 else np.float32)
    data = _corr1d_valid(_corr1d_valid(x.data, taps, x.ndim - 1), taps, x.ndim - 2)

    def vjp(g):
        back = _corr1d_full(_corr1d_full(g, taps, g.ndim - 2), taps, g.ndim - 1)
        return (back,)

    return _node(np.ascontiguousarray(data), (x,), vjp)


def ms_ssim_scales(height, width):
    return min(5, int(np.floor(np.log2(min(height, width) / _SSIM_WINDOW))) + 1)


def _ssim_maps(x, y):
    mu_x = gaussian_filter_valid(x)
    mu_y = gaussian_filter_valid(y)
    var_x = gaussian_filter_valid(x * x) - square(mu_x)
    var_y = gaussian_filter_valid(y * y) - square(mu_y)
    cov = gaussian_filter_valid(x * y) - mu_x * mu_y
    luminance = (2.0 * mu_x * mu_y + _SSIM_C1) / (square(mu_x) + square(mu_y) + _SSIM_C1)
    contrast = (2.0 * cov + _SSIM_C2) / (var_x + var_y + _SSIM_C2)
    return luminance, contrast


def ms_ssim_loss(x, y):
    """1 - MS-SSIM with an 11-tap Gaussian window.

    The scale count adapts to the image (min 1, max 5); the standard
    per-scale weights are renormalized over the scales actually used.
    Contrast means are clamped into (0, 1] before exponentiation.
    """
    _check_same_shape(x, y, "ms_ssim_loss")
    h, w = x.shape[2], x.shape[3]
    if min(h, w) < _SSIM_WINDOW:
        raise ConfigurationError(
            f"ms_ssim needs min(H,W) >= {_SSIM_WINDOW}, got {h}x{w}"
        )
    scales = ms_ssim_scales(h, w)
    weights = np.asarray(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()

    score = None
    for j in range(scales):
        luminance, contrast = _ssim_maps(x, y)
        cs = clamp(contrast.mean(), 1e-6, 1.0)
        term = cs ** float(weights[j])
        if j == scales - 1:
            lum = clamp(luminance.mean(), 1e-6, 1.0)
            term = term * lum ** float(weights[j])
        score = term if score is None else score * term
        if j != scales - 1:
            x = avg_pool2d(x)
            y = avg_pool2d(y)
    return 1.0 - score


class FeatureExtractor(Module):
    """Frozen three-stage conv stack (stride 2, widths 16/32/64).

    Weights come from a fixed-seed normal distribution, so runs with the
    same seed see bit-identical features; `load_weights` accepts an .npz
    with externally exported stage weights instead.
    """

    STAGE_WIDTHS = (16, 32, 64)

    def __init__(self, seed=1905, dtype=np.float32):
        rng = np.random.default_rng(seed)
        widths = (3,) + self.STAGE_WIDTHS
        self.stage_weights = []
        for cin, cout in zip(widths[:-1], widths[1:]):
            scale = np.sqrt(2.0 / (cin * 9))
            w = rng.standard_normal((cout, cin, 3, 3)).astype(dtype) * scale
            self.stage_weights.append(Tensor(w))

    def named_parameters(self, prefix=""):
        return iter(())  # frozen: exposes no trainable parameters

    def load_weights(self, path):
        data = np.load(path)
        weights = [data[k] for k in sorted(data.files)]
        if len(weights) != len(self.stage_weights):
            raise ConfigurationError(
                f"expected {len(self.stage_weights)} stages in {path}, got {len(weights)}"
            )
        for i, (slot, arr) in enumerate(zip(self.stage_weights, weights)):
            if arr.shape != slot.shape:
                raise ConfigurationError(
                    f"stage {i} weight shape {arr.shape} != expected {slot.shape}"
                )
            slot.data = arr.astype(slot.dtype)

    def save_weights(self, path):
        np.savez(path, **{f"stage{i}": w.data for i, w in enumerate(self.stage_weights)})

    def features(self, x):
        feats = []
        for w in self.stage_weights:
            x = gelu(conv2d(x, w, stride=2))
            feats.append(x)
        return feats


def perceptual_loss(x, y, extractor):
    """Sum over stages of the mean squared feature difference."""
    _check_same_shape(x, y, "perceptual_loss")
    total = None
    for fx, fy in zip(extractor.features(x), extractor.features(y)):
        term = square(fx - fy).mean()
        total = term if total is None else total + term
    return total


class LossWeights(Module):
    """Four combination weights plus the fixed resolution mix.

    In learnable mode the weights are the softmax of four trainable
    logits, so they stay positive and sum to one by construction. In
    fixed mode the supplied values are used directly (they must already
    lie on the simplex).
    """

    def __init__(self, mode="learnable", fixed=(0.25, 0.25, 0.25, 0.25),
                 omega_high=0.4, omega_low=0.6):
        if mode not in ("learnable", "fixed"):
            raise ConfigurationError(f"unknown loss-weight mode: {mode}")
        fixed = np.asarray(fixed, dtype=np.float64)
        if fixed.shape != (4,) or (fixed <= 0).any():
            raise ConfigurationError("fixed weights must be 4 positive values")
        if abs(fixed.sum() - 1.0) > 1e-6:
            raise ConfigurationError(f"fixed weights must sum to 1, got {fixed.sum()}")
        if abs(omega_high + omega_low - 1.0) > 1e-9:
            raise ConfigurationError("omega_high + omega_low must equal 1")
        self.mode = mode
        self.fixed = fixed
        self.omega_high = float(omega_high)
        self.omega_low = float(omega_low)
        self.logits = Parameter(np.zeros(4, dtype=np.float32))

    def realized(self):
        """Current combination weights as a length-4 tensor."""
        if self.mode == "learnable":
            return softmax(self.logits.reshape(1, 4), axis=1).reshape(4)
        return Tensor(self.fixed)

    def trainable_parameters(self):
        if self.mode == "learnable":
            yield "loss_weights.logits", self.logits


def resolution_loss(pred, gt, weights, extractor, eps=1e-3):
    """Weighted sum of the four losses at one resolution."""
    omega = weights.realized()
    value = omega[0] * charbonnier(pred, gt, eps)
    value = value + omega[1] * gradient_loss(pred, gt)
    value = value + omega[2] * ms_ssim_loss(pred, gt)
    value = value + omega[3] * perceptual_loss(pred, gt, extractor)
    return value


def total_loss(output, gt_full, gt_double, weights, extractor, eps=1e-3):
    """Fixed mix of the x2-resolution and full-resolution weighted losses."""
    fh, fw = gt_full.shape[2], gt_full.shape[3]
    dh, dw = gt_double.shape[2], gt_double.shape[3]
    if (dh, dw) != (2 * fh, 2 * fw):
        raise DimensionError(
            f"x2 ground truth must be exactly double: got {dh}x{dw} vs {fh}x{fw}"
        )
    low = resolution_loss(output.full_res, gt_full, weights, extractor, eps)
    high = resolution_loss(output.double_res, gt_double, weights, extractor, eps)
    return weights.omega_high * high + weights.omega_low * low
