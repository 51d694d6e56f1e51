"""Image quality metrics: PSNR, SSIM and the no-reference underwater
measures (UIQM and its components).

All functions take float arrays in [0,1], channel-first (3,H,W) for color
or (H,W) for grayscale; leading singleton batch axes are squeezed so the
value depends only on the pixels. Constants for the underwater measures
follow the standard published definition (Panetta-style colorfulness /
sharpness / contrast composition); degenerate blocks contribute zero
instead of log(0).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, DomainError

PSNR_CAP_DB = 100.0

# UIQM composition and colorfulness coefficients
UIQM_C1 = 0.0282
UIQM_C2 = 0.2953
UIQM_C3 = 3.5753
UICM_MU_COEF = -0.0268
UICM_SIGMA_COEF = 0.1586
_TRIM_FRACTION = 0.1
_BLOCK = 8
_LUMA = (0.299, 0.587, 0.114)
_PLIP_GAMMA = 1026.0


def _squeeze_leading(x):
    x = np.asarray(x, dtype=np.float64)
    while x.ndim > 3 and x.shape[0] == 1:
        x = x[0]
    return x


def _to_luma(x):
    x = _squeeze_leading(x)
    if x.ndim == 2:
        return x
    if x.ndim == 3 and x.shape[0] == 3:
        r, g, b = x
        return _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b
    raise DimensionError(f"expected (H,W) or (3,H,W) image, got shape {x.shape}")


def psnr(x, y, peak=1.0):
    """10*log10(peak^2 / MSE), capped at 100 dB for identical images."""
    x = _squeeze_leading(x)
    y = _squeeze_leading(y)
    if x.shape != y.shape:
        raise DimensionError(f"psnr shapes differ: {x.shape} vs {y.shape}")
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def _gaussian_window(size=11, sigma=1.5):
    coords = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kern = np.outer(g, g)
    return kern / kern.sum()


def ssim(x, y):
    """Single-scale SSIM on luma, Gaussian window 11, sigma 1.5, peak 1."""
    lx = _to_luma(x)
    ly = _to_luma(y)
    if lx.shape != ly.shape:
        raise DimensionError(f"ssim shapes differ: {lx.shape} vs {ly.shape}")
    if min(lx.shape) < 11:
        raise DimensionError(f"ssim needs min dim >= 11, got {lx.shape}")
    win = _gaussian_window()

    def filt(img):
        patches = sliding_window_view(img, (11, 11))
        return np.einsum("hwuv,uv->hw", patches, win)

    c1, c2 = 0.01**2, 0.03**2
    mu_x, mu_y = filt(lx), filt(ly)
    var_x = filt(lx * lx) - mu_x**2
    var_y = filt(ly * ly) - mu_y**2
    cov = filt(lx * ly) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


# -- underwater measures -------------------------------------------------------


def _trimmed_stats(values):
    """Asymmetric alpha-trimmed mean and second moment about it."""
    flat = np.sort(values.reshape(-1))
    k = flat.size
    lo = math.ceil(_TRIM_FRACTION * k)
    hi = math.floor(_TRIM_FRACTION * k)
    mu = flat[lo : k - hi].mean()
    second = float(np.mean((values - mu) ** 2))
    return float(mu), second


def uicm(x):
    """Colorfulness from trimmed statistics of the RG / YB opponent planes."""
    x = _squeeze_leading(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise DomainError(f"uicm needs a color (3,H,W) image, got shape {x.shape}")
    r, g, b = x
    rg = r - g
    yb = (r + g) / 2.0 - b
    mu_rg, s_rg = _trimmed_stats(rg)
    mu_yb, s_yb = _trimmed_stats(yb)
    return UICM_MU_COEF * math.hypot(mu_rg, mu_yb) + UICM_SIGMA_COEF * math.sqrt(s_rg + s_yb)


def _sobel_magnitude(plane):
    padded = np.pad(plane, 1, mode="symmetric")  # edge-inclusive reflection
    kx = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    windows = sliding_window_view(padded, (3, 3))
    gx = np.einsum("hwuv,uv->hw", windows, kx)
    gy = np.einsum("hwuv,uv->hw", windows, kx.T)
    return np.hypot(gx, gy)


def _blocks(plane):
    h, w = plane.shape
    for i in range(0, h, _BLOCK):
        for j in range(0, w, _BLOCK):
            yield plane[i : i + _BLOCK, j : j + _BLOCK]


def _eme(plane):
    """Log max/min enhancement measure over blocks; degenerate blocks give 0."""
    total = 0.0
    count = 0
    for block in _blocks(plane):
        count += 1
        lo, hi = float(block.min()), float(block.max())
        if lo > 0.0 and hi > 0.0:
            total += math.log(hi / lo)
    return 2.0 / count * total if count else 0.0


def uism(x):
    """Sharpness: luma-weighted EME of per-channel Sobel magnitudes."""
    x = _squeeze_leading(x)
    if x.ndim != 3 or x.shape[0] != 3:
        raise DomainError(f"uism needs a color (3,H,W) image, got shape {x.shape}")
    return sum(w * _eme(_sobel_magnitude(plane)) for w, plane in zip(_LUMA, x))


def _plip_sub(a, b):
    return _PLIP_GAMMA * (a - b) / (_PLIP_GAMMA - b)


def _plip_sum(a, b):
    return a + b - a * b / _PLIP_GAMMA


def _plip_scale(c, value):
    return _PLIP_GAMMA - _PLIP_GAMMA * (1.0 - value / _PLIP_GAMMA) ** c


def uiconm(x):
    """Contrast: logarithmic Michelson-style measure over blocks (PLIP form)."""
    gray = _to_luma(x) * 255.0
    total = 0.0
    count = 0
    for block in _blocks(gray):
        count += 1
        lo, hi = float(block.min()), float(block.max())
        top = _plip_sub(hi, lo)
        bottom = _plip_sum(hi, lo)
        if bottom > 0.0 and top > 0.0:
            ratio = top / bottom
            total += ratio * math.log(ratio)
    return _plip_scale(1.0 / count, total) if count else 0.0


def uiqm(x):
    """Weighted combination of colorfulness, sharpness and contrast."""
    return UIQM_C1 * uicm(x) + UIQM_C2 * uism(x) + UIQM_C3 * uiconm(x)


class MetricReport:
    """Per-image metric rows plus their means, in psnr/ssim/uiqm/uism order."""

    COLUMNS = ("psnr", "ssim", "uiqm", "uism")

    def __init__(self):
        self.names = []
        self.rows = []

    def add(self, name, restored, reference):
        row = (
            psnr(restored, reference),
            ssim(restored, reference),
            uiqm(restored),
            uism(restored),
        )
        self.names.append(name)
        self.rows.append(row)
        return row

    def means(self):
        arr = np.asarray(self.rows)
        return tuple(arr.mean(axis=0)) if len(self.rows) else (float("nan"),) * 4

    def table(self, delimiter="\t"):
        lines = [delimiter.join(("image",) + self.COLUMNS)]
        for name, row in zip(self.names, self.rows):
            lines.append(delimiter.join([name] + [f"{v:.4f}" for v in row]))
        lines.append(delimiter.join(["mean"] + [f"{v:.4f}" for v in self.means()]))
        return "\n".join(lines)
