"""Paired degraded/clean datasets, augmentation, and synthetic pair
generation for desk-scale experiments.

Directory datasets expect `degraded/` and `clean/` subdirectories with
matching filenames. All images are decoded eagerly and resized to one
square target size; the PHFM_THREADS environment variable caps the decode
worker pool.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import IngestionError, UsageError
from .imageio import load_image


def _decode_pool_size():
    value = os.environ.get("PHFM_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


class PairedDataset:
    """In-memory degraded/clean image pairs at a single square size."""

    def __init__(self, degraded, clean, names=None, target_size=None):
        degraded = np.asarray(degraded, dtype=np.float32)
        clean = np.asarray(clean, dtype=np.float32)
        if degraded.shape != clean.shape:
            raise UsageError(
                f"degraded/clean stacks differ: {degraded.shape} vs {clean.shape}"
            )
        if degraded.ndim != 4 or degraded.shape[1] != 3:
            raise UsageError(f"expected (N,3,S,S) stacks, got {degraded.shape}")
        self.degraded = degraded
        self.clean = clean
        self.names = list(names) if names else [f"pair{i:03d}" for i in range(len(degraded))]
        self.target_size = target_size if target_size is not None else degraded.shape[-1]

    def __len__(self):
        return self.degraded.shape[0]

    def pair(self, index):
        return self.degraded[index], self.clean[index]

    @classmethod
    def from_dirs(cls, root, target_size=256):
        root = Path(root)
        deg_dir = root / "degraded"
        clean_dir = root / "clean"
        for d in (deg_dir, clean_dir):
            if not d.is_dir():
                raise IngestionError(
                    "data directory must contain degraded/ and clean/ subdirectories",
                    str(d),
                )
        names = sorted(p.name for p in deg_dir.iterdir() if p.is_file())
        if not names:
            raise IngestionError("no images found", str(deg_dir))
        for name in names:
            if not (clean_dir / name).is_file():
                raise IngestionError("missing clean counterpart", str(clean_dir / name))

        def decode(name):
            return (
                load_image(deg_dir / name, target_size),
                load_image(clean_dir / name, target_size),
            )

        workers = _decode_pool_size()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                decoded = list(pool.map(decode, names))
        else:
            decoded = [decode(n) for n in names]
        degraded = np.stack([d for d, _ in decoded])
        clean = np.stack([c for _, c in decoded])
        return cls(degraded, clean, names, target_size)


def flip_horizontal(img):
    return img[:, :, ::-1]


def flip_vertical(img):
    return img[:, ::-1, :]


def augment_pair(degraded, clean, rng, noise_sigma_max=0.02,
                 contrast_range=(0.8, 1.2)):
    """Random flips applied to both images; noise and contrast variation
    applied to the degraded image only, clamped to [0,1].

    The draw order is fixed (hflip, vflip, noise sigma, noise field,
    contrast), so a given generator state maps to exactly one augmentation.
    """
    if rng.random() < 0.5:
        degraded, clean = flip_horizontal(degraded), flip_horizontal(clean)
    if rng.random() < 0.5:
        degraded, clean = flip_vertical(degraded), flip_vertical(clean)
    sigma = rng.uniform(0.0, noise_sigma_max)
    noise = rng.standard_normal(degraded.shape).astype(np.float32) * sigma
    contrast = rng.uniform(*contrast_range)
    if sigma != 0.0 or contrast != 1.0:  # no-op draws leave pixels bit-identical
        degraded = np.clip((degraded - 0.5) * contrast + 0.5 + noise, 0.0, 1.0)
    return degraded.astype(np.float32), np.ascontiguousarray(clean, dtype=np.float32)


def _procedural_image(size, rng):
    """Smooth synthetic scene: oriented gradients plus soft blobs."""
    ys, xs = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    img = np.zeros((3, size, size))
    for ch in range(3):
        angle = rng.uniform(0, 2 * np.pi)
        plane = 0.5 + 0.3 * (np.cos(angle) * xs + np.sin(angle) * ys)
        plane = plane + 0.15 * np.sin(2 * np.pi * (rng.uniform(0.3, 1.0) * xs + rng.uniform()))
        for _ in range(3):
            cy, cx = rng.uniform(0, 1, 2)
            radius = rng.uniform(0.15, 0.45)
            plane = plane + rng.uniform(-0.4, 0.4) * np.exp(
                -((ys - cy) ** 2 + (xs - cx) ** 2) / (2 * radius**2)
            )
        img[ch] = plane
    lo, hi = img.min(), img.max()
    return (0.05 + 0.9 * (img - lo) / max(hi - lo, 1e-9)).astype(np.float32)


def make_synthetic_pairs(count, size, rng, beta_range=(0.55, 0.85),
                         ambient_range=(0.05, 0.2)):
    """Clean procedural scenes and per-channel attenuated/hazed versions."""
    clean = np.stack([_procedural_image(size, rng) for _ in range(count)])
    betas = rng.uniform(*beta_range, size=(count, 3, 1, 1)).astype(np.float32)
    ambient = rng.uniform(*ambient_range, size=(count, 3, 1, 1)).astype(np.float32)
    degraded = np.clip(clean * betas + ambient, 0.0, 1.0).astype(np.float32)
    return PairedDataset(degraded, clean)


def make_haze_pairs(count, size, rng, beta_range=(0.5, 0.8), ambient_range=(0.1, 0.3)):
    """Pairs degraded by the global haze model x*beta + A (scalar per image)."""
    clean = np.stack([_procedural_image(size, rng) for _ in range(count)])
    betas = rng.uniform(*beta_range, size=(count, 1, 1, 1)).astype(np.float32)
    ambient = rng.uniform(*ambient_range, size=(count, 1, 1, 1)).astype(np.float32)
    degraded = np.clip(clean * betas + ambient, 0.0, 1.0).astype(np.float32)
    return PairedDataset(degraded, clean)
