"""Scikit-learn style wrapper so the restorer composes with the wider
ecosystem: fit on paired arrays of degraded/clean images, transform or
predict to restore new ones, score with mean PSNR.

Hyperparameters mirror the architecture/training configs; get_params and
set_params come from BaseEstimator, so the wrapper drops into pipelines
and parameter searches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ModelConfig, TrainConfig
from .data import PairedDataset
from .errors import UsageError
from .imageio import bilinear_resize
from .metrics import psnr
from .train import Trainer


def check_image_batch(X, name="X"):
    """Validate and normalize an image batch to float32 (N,3,H,W) in [0,1].

    Accepts (N,3,H,W), (N,H,W,3), (3,H,W) or (H,W,3); values must be
    finite and inside [0,1].
    """
    arr = np.asarray(X, dtype=np.float32)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise UsageError(f"{name} must be a batch of color images, got shape {arr.shape}")
    if arr.shape[1] != 3 and arr.shape[-1] == 3:
        arr = arr.transpose(0, 3, 1, 2)
    if arr.shape[1] != 3:
        raise UsageError(f"{name} needs a 3-channel axis, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise UsageError(f"{name} contains non-finite values")
    if arr.min() < -1e-6 or arr.max() > 1.0 + 1e-6:
        raise UsageError(f"{name} values must lie in [0,1]")
    return np.clip(arr, 0.0, 1.0)


def check_paired_batches(X, y):
    """Validate a degraded/clean pair of batches of matching shape."""
    deg = check_image_batch(X, "X")
    clean = check_image_batch(y, "y")
    if deg.shape != clean.shape:
        raise UsageError(f"X and y shapes differ: {deg.shape} vs {clean.shape}")
    return deg, clean


def _resize_batch(batch, size):
    if batch.shape[-2:] == (size, size):
        return batch
    return np.stack([bilinear_resize(img, size, size) for img in batch])


class PhaseformerRestorer(BaseEstimator, TransformerMixin):
    """Underwater-image restorer with a fit/transform interface.

    `fit(X, y)` trains the network on degraded images X against clean
    targets y; `transform(X)` (alias `predict`) returns restored images as
    float32 (N,3,image_size,image_size) arrays. Inputs are resized to
    `image_size`, which must be a power of two.
    """

    def __init__(self, base_channels=8, blocks_per_level=(1, 1, 1),
                 bottleneck_blocks=1, decoder_blocks_per_level=(1, 1, 1),
                 heads_per_level=(1, 2, 4), bottleneck_heads=8,
                 ffn_expansion=2.0, attention_kind="phase", skip_kind="opab",
                 residual_kind="normalized", image_size=64, epochs=60,
                 batch_size=2, learning_rate=3e-4, loss_mode="learnable",
                 augment=False, seed=0):
        self.base_channels = base_channels
        self.blocks_per_level = blocks_per_level
        self.bottleneck_blocks = bottleneck_blocks
        self.decoder_blocks_per_level = decoder_blocks_per_level
        self.heads_per_level = heads_per_level
        self.bottleneck_heads = bottleneck_heads
        self.ffn_expansion = ffn_expansion
        self.attention_kind = attention_kind
        self.skip_kind = skip_kind
        self.residual_kind = residual_kind
        self.image_size = image_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.loss_mode = loss_mode
        self.augment = augment
        self.seed = seed

    def _configs(self):
        model_cfg = ModelConfig(
            base_channels=self.base_channels,
            blocks_per_level=tuple(self.blocks_per_level),
            bottleneck_blocks=self.bottleneck_blocks,
            decoder_blocks_per_level=tuple(self.decoder_blocks_per_level),
            heads_per_level=tuple(self.heads_per_level),
            bottleneck_heads=self.bottleneck_heads,
            ffn_expansion=self.ffn_expansion,
            attention_kind=self.attention_kind,
            skip_kind=self.skip_kind,
            residual_kind=self.residual_kind,
            input_size=(self.image_size, self.image_size),
        )
        train_cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
            data_size=self.image_size,
            augment=self.augment,
            loss_mode=self.loss_mode,
        )
        return model_cfg.validate(), train_cfg.validate()

    def fit(self, X, y):
        deg, clean = check_paired_batches(X, y)
        deg = _resize_batch(deg, self.image_size)
        clean = _resize_batch(clean, self.image_size)
        model_cfg, train_cfg = self._configs()
        dataset = PairedDataset(deg, clean, target_size=self.image_size)
        self.trainer_ = Trainer(model_cfg, train_cfg, dataset)
        self.trainer_.run(self.epochs)
        self.model_config_ = model_cfg
        self.n_parameters_ = self.trainer_.model.count_scalars()
        return self

    def transform(self, X):
        check_is_fitted(self, "trainer_")
        batch = _resize_batch(check_image_batch(X), self.image_size)
        return np.stack([self.trainer_.restore(img) for img in batch])

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Mean PSNR (dB) of restored X against clean y."""
        check_is_fitted(self, "trainer_")
        deg, clean = check_paired_batches(X, y)
        clean = _resize_batch(clean, self.image_size)
        restored = self.transform(deg)
        return float(np.mean([psnr(r, c) for r, c in zip(restored, clean)]))
