"""2-d FFT/IFFT and phase-only feature extraction.

Convention: unnormalized forward transform (DC bin equals the sum of the
samples), inverse scaled by 1/(H*W). Spatial dims must be powers of two;
transforms run per channel of N,C,H,W tensors.

Transforms are computed internally in double-precision complex arithmetic
regardless of the tensor dtype; phase extraction casts its result back to
the input dtype.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .tensor import Tensor, _node, atan2, cast, tcos, tsin, tsqrt, square

_bitrev_cache = {}
_twiddle_cache = {}


def _bit_reverse(n):
    idx = _bitrev_cache.get(n)
    if idx is None:
        bits = int(np.log2(n))
        idx = np.zeros(n, dtype=np.intp)
        for i in range(n):
            r = 0
            v = i
            for _ in range(bits):
                r = (r << 1) | (v & 1)
                v >>= 1
            idx[i] = r
        _bitrev_cache[n] = idx
    return idx


def _twiddles(size, sign):
    key = (size, sign)
    tw = _twiddle_cache.get(key)
    if tw is None:
        tw = np.exp(sign * 2j * np.pi * np.arange(size // 2) / size)
        _twiddle_cache[key] = tw
    return tw


def _fft_axis(z, axis, inverse):
    """Iterative radix-2 Cooley-Tukey along one axis (length a power of two)."""
    axis = axis % z.ndim
    n = z.shape[axis]
    out = np.take(z, _bit_reverse(n), axis=axis)
    if out.dtype != np.complex128:
        out = out.astype(np.complex128)
    sign = 1.0 if inverse else -1.0
    trailing = z.ndim - axis - 1
    size = 2
    while size <= n:
        half = size // 2
        view = out.reshape(z.shape[:axis] + (n // size, size) + z.shape[axis + 1 :])
        lo = (slice(None),) * (axis + 1) + (slice(0, half),)
        hi = (slice(None),) * (axis + 1) + (slice(half, size),)
        if size == 2:
            odd = view[hi].copy()  # unit twiddle
        else:
            tw = _twiddles(size, sign).reshape((half,) + (1,) * trailing)
            odd = view[hi] * tw
        view[hi] = view[lo] - odd
        view[lo] += odd
        size *= 2
    return out


def _fft2_core(z, inverse=False):
    """Unnormalized 2-d transform over the last two axes."""
    return _fft_axis(_fft_axis(z, -1, inverse), -2, inverse)


def _require_pow2(x):
    h, w = x.shape[-2], x.shape[-1]
    for name, dim in (("H", h), ("W", w)):
        if dim < 1 or dim & (dim - 1):
            raise ConfigurationError(
                f"fft2 requires power-of-two spatial dims, got {name}={dim} (H={h}, W={w})"
            )


class ComplexSpectrum:
    """Per-channel complex frequency grid as a (real, imag) tensor pair."""

    def __init__(self, real, imag):
        if real.shape != imag.shape:
            raise ConfigurationError(
                f"spectrum real/imag shapes differ: {real.shape} vs {imag.shape}"
            )
        self.real = real
        self.imag = imag

    @property
    def shape(self):
        return self.real.shape


def fft2(x):
    """Forward 2-d FFT of a real N,C,H,W tensor, differentiable.

    Returns a ComplexSpectrum of float64 tensors. Real and imaginary parts
    share one tape node, so the backward pass runs a single inverse
    transform for both.
    """
    _require_pow2(x)
    spec = _fft2_core(x.data)
    packed_data = np.stack([spec.real, spec.imag])

    def vjp(g):
        # adjoint of the real-to-complex forward transform
        back = _fft2_core(g[0] + 1j * g[1], inverse=True)
        return (back.real,)

    packed = _node(packed_data, (x,), vjp)
    return ComplexSpectrum(packed[0], packed[1])


def ifft2(spectrum):
    """Inverse 2-d FFT scaled by 1/(H*W); returns the real part.

    The maximum absolute imaginary residue of the inverse is recorded on
    the returned tensor as ``imag_residue``.
    """
    real, imag = spectrum.real, spectrum.imag
    h, w = real.shape[-2], real.shape[-1]
    scale = 1.0 / (h * w)
    z = _fft2_core(real.data + 1j * imag.data, inverse=True)

    def vjp(g):
        fwd = _fft2_core(g) * scale
        return fwd.real.copy(), fwd.imag.copy()

    out = _node(np.ascontiguousarray(z.real) * scale, (real, imag), vjp)
    out.imag_residue = float(np.abs(z.imag).max() * scale) if z.size else 0.0
    return out


def decompose(spectrum):
    """Split a spectrum into (amplitude, phase); atan2(0, 0) is defined as 0."""
    amplitude = tsqrt(square(spectrum.real) + square(spectrum.imag))
    phase = atan2(spectrum.imag, spectrum.real)
    return amplitude, phase


def pem(x, differentiable=True):
    """Phase extraction: keep the phase, force unit amplitude, invert.

    Computes real(IFFT(exp(i * phase(FFT(x))))) in the input's dtype. The
    unit spectrum exp(i*phase) is formed by guarded normalization S/|S|
    (identical to (cos phase, sin phase); exactly-zero bins map to 1+0j,
    matching the atan2(0,0) := 0 convention), and the whole operation is a
    single tape node with a closed-form adjoint. With
    ``differentiable=False`` the result is detached and acts as a frozen
    feature extractor.
    """
    _require_pow2(x)
    h, w = x.shape[-2], x.shape[-1]
    scale = 1.0 / (h * w)
    spec = _fft2_core(x.data)
    mag = np.abs(spec)
    safe = np.where(mag == 0.0, 1.0, mag)
    unit = np.where(mag == 0.0, 1.0 + 0.0j, spec / safe)
    out_data = np.ascontiguousarray(_fft2_core(unit, inverse=True).real * scale)
    out_data = out_data.astype(x.dtype, copy=False)

    if not differentiable:
        return Tensor(out_data)

    def vjp(g):
        # chain: g -> unit spectrum -> spectrum -> input, staying complex
        g_unit = _fft2_core(g) * scale
        lever = (np.conj(spec) * g_unit).imag / (safe * safe * safe)
        lever[mag == 0.0] = 0.0
        g_spec = 1j * spec * lever
        return (_fft2_core(g_spec, inverse=True).real,)

    return _node(out_data, (x,), vjp)
