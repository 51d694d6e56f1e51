"""PSNR, SSIM and the underwater no-reference measures."""

import math

import numpy as np
import pytest
from scipy import ndimage

from phaseformer.errors import DimensionError, DomainError
from phaseformer.metrics import (
    MetricReport,
    psnr,
    ssim,
    uicm,
    uiconm,
    uiqm,
    uism,
)


class TestPsnr:
    def test_identical_capped_at_100(self, rng):
        x = rng.random((3, 16, 16))
        assert psnr(x, x) == 100.0

    def test_closed_form_half_gray(self):
        x = np.zeros((3, 8, 8))
        y = np.full((3, 8, 8), 0.5)
        assert psnr(x, y) == pytest.approx(6.0206, abs=1e-4)

    def test_halving_error_gains_6db(self, rng):
        x = rng.random((3, 8, 8))
        noise = 0.2 * rng.standard_normal((3, 8, 8))
        gain = psnr(x, x + 0.5 * noise) - psnr(x, x + noise)
        assert gain == pytest.approx(20 * math.log10(2), abs=1e-9)

    def test_symmetric(self, rng):
        x, y = rng.random((3, 8, 8)), rng.random((3, 8, 8))
        assert psnr(x, y) == psnr(y, x)

    def test_strictly_decreasing_in_noise(self, rng):
        x = rng.random((3, 16, 16))
        noise = rng.standard_normal((3, 16, 16))
        values = [psnr(x, x + a * noise) for a in (0.05, 0.1, 0.2)]
        assert values[0] > values[1] > values[2]

    def test_batch_shape_independent(self, rng):
        x, y = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        assert psnr(x, y) == psnr(x[None], y[None])

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            psnr(rng.random((3, 8, 8)), rng.random((3, 9, 8)))


def ssim_loop_reference(x, y):
    """Direct sliding-window SSIM on luma with explicit python loops."""
    luma = lambda img: 0.299 * img[0] + 0.587 * img[1] + 0.114 * img[2]
    lx, ly = luma(x), luma(y)
    g = np.exp(-((np.arange(11) - 5.0) ** 2) / (2 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = 1e-4, 9e-4
    h, w = lx.shape
    values = []
    for i in range(h - 10):
        for j in range(w - 10):
            px = lx[i : i + 11, j : j + 11]
            py = ly[i : i + 11, j : j + 11]
            mx, my = (win * px).sum(), (win * py).sum()
            vx = (win * px * px).sum() - mx * mx
            vy = (win * py * py).sum() - my * my
            cov = (win * px * py).sum() - mx * my
            values.append(
                ((2 * mx * my + c1) * (2 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2))
            )
    return float(np.mean(values))


class TestSsim:
    def test_identical_is_one(self, rng):
        x = rng.random((3, 16, 16))
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_inverted_checker_is_negative(self):
        checker = np.indices((16, 16)).sum(axis=0) % 2
        x = np.broadcast_to(checker, (3, 16, 16)).astype(float)
        assert ssim(x, 1.0 - x) < 0.0

    def test_matches_loop_reference(self, rng):
        x = rng.random((3, 16, 16))
        y = np.clip(x + 0.15 * rng.standard_normal((3, 16, 16)), 0, 1)
        assert ssim(x, y) == pytest.approx(ssim_loop_reference(x, y), abs=1e-6)

    def test_symmetric(self, rng):
        x, y = rng.random((3, 16, 16)), rng.random((3, 16, 16))
        assert ssim(x, y) == pytest.approx(ssim(y, x), abs=1e-12)

    def test_small_image_rejected(self, rng):
        with pytest.raises(DimensionError):
            ssim(rng.random((3, 8, 8)), rng.random((3, 8, 8)))


def eme_block_reference(plane, block=8):
    h, w = plane.shape
    vals = []
    for i in range(0, h, block):
        for j in range(0, w, block):
            b = plane[i : i + block, j : j + block]
            lo, hi = b.min(), b.max()
            vals.append(math.log(hi / lo) if lo > 0 and hi > 0 else 0.0)
    return 2.0 * sum(vals) / len(vals)


def uism_reference(x):
    lam = (0.299, 0.587, 0.114)
    total = 0.0
    for w, plane in zip(lam, x):
        gx = ndimage.sobel(plane, axis=1, mode="reflect")
        gy = ndimage.sobel(plane, axis=0, mode="reflect")
        mag = np.hypot(gx, gy)
        total += w * eme_block_reference(mag)
    return total


def uiconm_reference(x, gamma=1026.0):
    gray = (0.299 * x[0] + 0.587 * x[1] + 0.114 * x[2]) * 255.0
    h, w = gray.shape
    s = 0.0
    count = 0
    for i in range(0, h, 8):
        for j in range(0, w, 8):
            b = gray[i : i + 8, j : j + 8]
            lo, hi = float(b.min()), float(b.max())
            top = gamma * (hi - lo) / (gamma - lo)
            bottom = hi + lo - hi * lo / gamma
            count += 1
            if top > 0 and bottom > 0:
                m = top / bottom
                s += m * math.log(m)
    return gamma - gamma * (1 - s / gamma) ** (1.0 / count)


def uicm_reference(x):
    def trimmed(v):
        flat = np.sort(v.reshape(-1))
        k = flat.size
        lo, hi = math.ceil(0.1 * k), math.floor(0.1 * k)
        mu = flat[lo : k - hi].mean()
        return mu, np.mean((v - mu) ** 2)

    rg = x[0] - x[1]
    yb = (x[0] + x[1]) / 2 - x[2]
    mu_rg, s_rg = trimmed(rg)
    mu_yb, s_yb = trimmed(yb)
    return -0.0268 * math.sqrt(mu_rg**2 + mu_yb**2) + 0.1586 * math.sqrt(s_rg + s_yb)


class TestUnderwaterMeasures:
    def test_constant_image_has_zero_sharpness(self):
        x = np.full((3, 32, 32), 0.4)
        assert uism(x) == 0.0

    def test_uiqm_invariant_to_horizontal_flip(self, rng):
        x = rng.random((3, 64, 64))
        assert uiqm(x) == pytest.approx(uiqm(x[:, :, ::-1]), rel=1e-9)

    def test_uicm_matches_reference(self, rng):
        x = rng.random((3, 32, 32))
        assert uicm(x) == pytest.approx(uicm_reference(x), rel=1e-9)

    def test_uism_matches_reference(self, rng):
        x = rng.random((3, 32, 32))
        assert uism(x) == pytest.approx(uism_reference(x), rel=1e-6)

    def test_uiconm_matches_reference(self, rng):
        x = rng.random((3, 32, 32))
        assert uiconm(x) == pytest.approx(uiconm_reference(x), rel=1e-6)

    def test_uiqm_is_stated_combination(self, rng):
        x = rng.random((3, 32, 32))
        expected = 0.0282 * uicm(x) + 0.2953 * uism(x) + 3.5753 * uiconm(x)
        assert uiqm(x) == pytest.approx(expected, rel=1e-12)

    def test_grayscale_rejected_for_colorfulness(self, rng):
        with pytest.raises(DomainError):
            uicm(rng.random((32, 32)))

    def test_deterministic(self, rng):
        x = rng.random((3, 32, 32))
        assert uiqm(x) == uiqm(x.copy())


class TestMetricReport:
    def test_table_layout(self, rng):
        report = MetricReport()
        restored = rng.random((3, 32, 32))
        reference = rng.random((3, 32, 32))
        report.add("a.ppm", restored, reference)
        report.add("b.ppm", restored, restored)
        lines = report.table().splitlines()
        assert lines[0] == "image\tpsnr\tssim\tuiqm\tuism"
        assert len(lines) == 4
        assert lines[-1].startswith("mean\t")
        means = report.means()
        assert means[0] == pytest.approx((report.rows[0][0] + report.rows[1][0]) / 2)
