"""Network-level operations on tensors: convolutions, pooling, softmax,
channel layer-norm and activations.

All convolutions are bias-free. Forward passes are vectorized with
stride-tricks windows plus tensordot; backward passes use the matching
scatter loops over the (small) kernel footprint.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, _node, tmean, square, tsqrt

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _check4d(x, name):
    if x.ndim != 4:
        raise DimensionError(f"{name} must be 4-d (N,C,H,W), got shape {x.shape}")


def conv2d(x, weight, stride=1, padding=None):
    """Bias-free 2-d cross-correlation over N,C,H,W input.

    `padding` defaults to (k-1)//2 so odd kernels preserve spatial size at
    stride 1.
    """
    _check4d(x, "conv2d input")
    _check4d(weight, "conv2d weight")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError(f"conv2d kernel must be square and odd, got {kh}x{kw}")
    if cin_w != cin:
        raise DimensionError(
            f"conv2d channel mismatch: input axis 1 has {cin}, weight axis 1 has {cin_w}"
        )
    p = (kh - 1) // 2 if padding is None else int(padding)
    s = int(stride)

    if kh == 1 and p == 0:
        return _conv2d_pointwise(x, weight, s)

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    ho, wo = out.shape[2], out.shape[3]

    def vjp(g):
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gx_full = np.tensordot(g, weight.data, axes=([1], [0]))  # N,Ho,Wo,Cin,kh,kw
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u : u + s * ho : s, v : v + s * wo : s] += gx_full[
                    :, :, :, :, u, v
                ].transpose(0, 3, 1, 2)
        gx = gxp[:, :, p : p + h, p : p + w] if p else gxp
        return gx, gw

    return _node(out, (x, weight), vjp)


def _conv2d_pointwise(x, weight, stride):
    """1x1 convolution as a plain channel contraction (no window tensor)."""
    xs = x.data[:, :, ::stride, ::stride] if stride > 1 else x.data
    mat = weight.data[:, :, 0, 0]
    out = np.ascontiguousarray(np.tensordot(mat, xs, axes=([1], [1])).transpose(1, 0, 2, 3))

    def vjp(g):
        gw = np.tensordot(g, xs, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
        gx_s = np.tensordot(mat, g, axes=([0], [1])).transpose(1, 0, 2, 3)
        if stride > 1:
            gx = np.zeros_like(x.data)
            gx[:, :, ::stride, ::stride] = gx_s
        else:
            gx = gx_s
        return gx, gw

    return _node(out, (x, weight), vjp)


def depthwise_conv2d(x, weight, padding=None):
    """Per-channel spatial convolution; default padding preserves spatial size."""
    _check4d(x, "depthwise input")
    _check4d(weight, "depthwise weight")
    n, c, h, w = x.shape
    cw, one, kh, kw = weight.shape
    if kh != kw or kh % 2 == 0:
        raise ConfigurationError(f"depthwise kernel must be square and odd, got {kh}x{kw}")
    if cw != c or one != 1:
        raise DimensionError(
            f"depthwise weight must be ({c},1,k,k) for {c}-channel input, got {weight.shape}"
        )
    p = (kh - 1) // 2 if padding is None else int(padding)
    ho, wo = h + 2 * p - kh + 1, w + 2 * p - kw + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    kernels = weight.data[:, 0]
    out = np.zeros((n, c, ho, wo), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            out += xp[:, :, u : u + ho, v : v + wo] * kernels[None, :, u, v, None, None]

    def vjp(g):
        gw = np.empty_like(weight.data)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                patch = xp[:, :, u : u + ho, v : v + wo]
                gw[:, 0, u, v] = (g * patch).sum(axis=(0, 2, 3))
                gxp[:, :, u : u + ho, v : v + wo] += g * kernels[None, :, u, v, None, None]
        gx = gxp[:, :, p : p + h, p : p + w] if p else gxp
        return gx, gw

    return _node(out, (x, weight), vjp)


def conv1d(x, weight):
    """Length-preserving 1-d convolution across the channel axis.

    Input is (N,1,C), weight (1,1,k) with odd k; zero padding of (k-1)//2.
    """
    if x.ndim != 3 or x.shape[1] != 1:
        raise DimensionError(f"conv1d input must be (N,1,C), got {x.shape}")
    if weight.ndim != 3 or weight.shape[:2] != (1, 1):
        raise DimensionError(f"conv1d weight must be (1,1,k), got {weight.shape}")
    k = weight.shape[2]
    if k % 2 == 0:
        raise ConfigurationError(f"conv1d kernel length must be odd, got {k}")
    p = (k - 1) // 2
    c = x.shape[2]

    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p))) if p else x.data
    windows = sliding_window_view(xp, k, axis=2)  # (N,1,C,k)
    out = np.tensordot(windows, weight.data[0, 0], axes=([3], [0]))

    def vjp(g):
        gw = np.tensordot(g, windows, axes=([0, 1, 2], [0, 1, 2]))[None, None]
        gxp = np.zeros_like(xp)
        for u in range(k):
            gxp[:, :, u : u + c] += g * weight.data[0, 0, u]
        gx = gxp[:, :, p : p + c] if p else gxp
        return gx, gw

    return _node(out, (x, weight), vjp)


def transposed_conv2d(x, weight, stride=2):
    """Stride-`s` transposed convolution; output spatial dims are (H-1)*s+k.

    Weight layout is (Cin, Cout, k, k). With the default k=2, s=2 the output
    is exactly 2H x 2W.
    """
    _check4d(x, "transposed_conv2d input")
    _check4d(weight, "transposed_conv2d weight")
    n, cin, h, w = x.shape
    cin_w, cout, kh, kw = weight.shape
    if cin_w != cin:
        raise DimensionError(
            f"transposed conv channel mismatch: input axis 1 has {cin}, weight axis 0 has {cin_w}"
        )
    s = int(stride)
    ho, wo = (h - 1) * s + kh, (w - 1) * s + kw

    spread = np.tensordot(x.data, weight.data, axes=([1], [0]))  # N,H,W,Cout,kh,kw
    out = np.zeros((n, cout, ho, wo), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            out[:, :, u : u + s * (h - 1) + 1 : s, v : v + s * (w - 1) + 1 : s] += spread[
                :, :, :, :, u, v
            ].transpose(0, 3, 1, 2)

    def vjp(g):
        windows = sliding_window_view(g, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
        gx = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
        gx = gx.transpose(0, 3, 1, 2)
        gw = np.tensordot(x.data, windows, axes=([0, 2, 3], [0, 2, 3]))
        return np.ascontiguousarray(gx), gw

    return _node(out, (x, weight), vjp)


def avg_pool2d(x, factor=2):
    """Non-overlapping mean pooling by an integer factor."""
    _check4d(x, "avg_pool2d input")
    n, c, h, w = x.shape
    f = int(factor)
    if h % f or w % f:
        raise DimensionError(f"avg_pool2d needs H,W divisible by {f}, got {h}x{w}")
    out = x.data.reshape(n, c, h // f, f, w // f, f).mean(axis=(3, 5))

    def vjp(g):
        g = np.repeat(np.repeat(g, f, axis=2), f, axis=3)
        return (g / (f * f),)

    return _node(out, (x,), vjp)


def global_avg_pool2d(x):
    """Spatial mean, N,C,H,W -> N,C,1,1."""
    _check4d(x, "global_avg_pool2d input")
    return tmean(x, axis=(2, 3), keepdims=True)


def softmax(x, axis):
    """Max-subtracted softmax along one named axis."""
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for {x.ndim}-d tensor")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _node(out, (x,), vjp)


def sigmoid(x):
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _node(out, (x,), lambda g: (g * out * (1.0 - out),))


def gelu(x):
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (cdf + x.data * pdf),)

    return _node(out, (x,), vjp)


def layer_norm(x, gamma, eps=1e-8):
    """Bias-free layer normalization over the channel axis of N,C,H,W.

    Each spatial position is normalized to zero mean / unit variance across
    channels, then scaled by the per-channel gamma.
    """
    _check4d(x, "layer_norm input")
    c = x.shape[1]
    if gamma.shape != (c,):
        raise DimensionError(f"layer_norm gamma must have shape ({c},), got {gamma.shape}")
    centered = x - tmean(x, axis=1, keepdims=True)
    var = tmean(square(centered), axis=1, keepdims=True)
    normed = centered / tsqrt(var + eps)
    return normed * gamma.reshape(1, c, 1, 1)
