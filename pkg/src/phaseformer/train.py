"""Training loop: batching, augmentation, Adam with cosine annealing,
per-epoch checkpointing and deterministic resume.

Training is a pure function of (configs, dataset bytes, seed): the data
generator is the only RNG consumed during batching/augmentation, its state
is checkpointed, and every compute path is single-threaded and
deterministic, so an interrupted+resumed run matches an uninterrupted one
bit for bit.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig
from .data import augment_pair
from .errors import IngestionError, NumericalAbort
from .imageio import bilinear_resize
from .losses import FeatureExtractor, LossWeights, total_loss
from .metrics import psnr
from .model import Phaseformer
from .optim import Adam, cosine_lr
from .tensor import Tensor, backward, no_grad

LOG_COLUMNS = ("step", "lr", "loss", "omega1", "omega2", "omega3", "omega4")


def _rng_state_bytes(rng):
    return json.dumps(rng.bit_generator.state).encode("utf-8")


def _rng_from_state_bytes(blob):
    rng = np.random.default_rng(0)
    rng.bit_generator.state = json.loads(blob.decode("utf-8"))
    return rng


class Trainer:
    def __init__(self, model_cfg: ModelConfig, train_cfg: TrainConfig, dataset,
                 log=None, resume=None):
        model_cfg.validate()
        train_cfg.validate()
        self.model_cfg = model_cfg
        self.train_cfg = train_cfg
        self.dataset = dataset
        self.log = log if log is not None else lambda line: None

        self.model = Phaseformer(model_cfg, seed=train_cfg.seed)
        self.loss_weights = LossWeights(
            mode=train_cfg.loss_mode,
            fixed=train_cfg.fixed_weights,
            omega_high=train_cfg.omega_high,
            omega_low=train_cfg.omega_low,
        )
        self.extractor = FeatureExtractor(seed=train_cfg.perceptual_seed)

        trainables = dict(self.model.named_parameters())
        trainables.update(dict(self.loss_weights.trainable_parameters()))
        self.adam = Adam(trainables, train_cfg.adam_beta1, train_cfg.adam_beta2,
                         train_cfg.adam_eps)
        self.rng = np.random.default_rng(train_cfg.seed)
        self.epoch = 0
        self.step = 0
        if resume is not None:
            self._restore(resume)

    # -- state ------------------------------------------------------------

    def _restore(self, ckpt):
        own = dict(self.model.named_parameters())
        if set(own) != set(ckpt.params):
            missing = set(own) ^ set(ckpt.params)
            raise IngestionError(f"checkpoint parameters do not match model: {sorted(missing)[:4]}")
        for name, p in own.items():
            p.data = ckpt.params[name].astype(p.dtype).reshape(p.shape)
        self.loss_weights.logits.data = ckpt.logits.astype(np.float32).copy()
        for name in self.adam.params:
            self.adam.m[name] = ckpt.adam_m[name].reshape(self.adam.m[name].shape).copy()
            self.adam.v[name] = ckpt.adam_v[name].reshape(self.adam.v[name].shape).copy()
        self.adam.step_count = ckpt.step
        self.epoch = ckpt.epoch
        self.step = ckpt.step
        self.rng = _rng_from_state_bytes(ckpt.rng_state)

    def checkpoint(self):
        return Checkpoint(
            model_config=self.model_cfg,
            train_config=self.train_cfg,
            params={n: p.data.copy() for n, p in self.model.named_parameters()},
            adam_m={n: a.copy() for n, a in self.adam.m.items()},
            adam_v={n: a.copy() for n, a in self.adam.v.items()},
            logits=self.loss_weights.logits.data.copy(),
            epoch=self.epoch,
            step=self.step,
            rng_state=_rng_state_bytes(self.rng),
        )

    # -- training ----------------------------------------------------------

    def steps_per_epoch(self):
        return math.ceil(len(self.dataset) / self.train_cfg.batch_size)

    def _assemble_batch(self, indices):
        cfg = self.train_cfg
        degraded, clean = [], []
        for i in indices:
            d, c = self.dataset.pair(i)
            if cfg.augment:
                d, c = augment_pair(d, c, self.rng, cfg.noise_sigma_max,
                                    (cfg.contrast_min, cfg.contrast_max))
            degraded.append(d)
            clean.append(c)
        deg = np.stack(degraded)
        cln = np.stack(clean)
        size = cln.shape[-1]
        doubled = np.stack([bilinear_resize(c, 2 * size, 2 * size) for c in cln])
        return deg, cln, doubled

    def train_step(self, indices, total_steps):
        cfg = self.train_cfg
        deg, cln, doubled = self._assemble_batch(indices)
        lr = cosine_lr(self.step, total_steps, cfg.learning_rate, cfg.lr_min)
        output = self.model.forward(Tensor(deg))
        loss = total_loss(output, Tensor(cln), Tensor(doubled), self.loss_weights,
                          self.extractor, cfg.charbonnier_eps)
        value = loss.item()
        if not math.isfinite(value):
            raise NumericalAbort(f"loss is not finite at step {self.step}")
        backward(loss)
        self.adam.step(lr)
        self.adam.zero_grad()
        omega = self.loss_weights.realized().data
        self.log(
            f"{self.step}\t{lr:.9e}\t{value:.8e}\t"
            f"{omega[0]:.8f}\t{omega[1]:.8f}\t{omega[2]:.8f}\t{omega[3]:.8f}"
        )
        self.step += 1
        return value

    def run(self, total_epochs, checkpoint_path=None, stop_check=None):
        """Train until `total_epochs` epochs are complete; write a checkpoint
        after each epoch when a path is given. The learning-rate schedule
        always spans the full `total_epochs`. `stop_check(trainer)` is
        consulted after each epoch; returning True ends training early.
        Returns the final Checkpoint."""
        total_steps = max(1, total_epochs * self.steps_per_epoch())
        batch = self.train_cfg.batch_size
        n = len(self.dataset)
        while self.epoch < total_epochs:
            order = self.rng.permutation(n)
            for start in range(0, n, batch):
                self.train_step(order[start : start + batch], total_steps)
            self.epoch += 1
            held = self.holdout_psnr()
            self.log(f"# epoch {self.epoch} holdout_psnr {held:.4f}")
            self._warn_on_negative_alpha()
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, self.checkpoint())
            if stop_check is not None and stop_check(self):
                break
        return self.checkpoint()

    def _warn_on_negative_alpha(self):
        for name, p in self.model.named_parameters():
            if name.endswith(".alpha") and (p.data <= 0).any():
                self.log(f"# warning: attention temperature crossed zero in {name}")

    # -- inference ------------------------------------------------------------

    def restore(self, image, x2=False):
        """Run one (3,H,W) image through the model; clamps output to [0,1]."""
        with no_grad():
            out = self.model.forward(Tensor(image[None].astype(np.float32)))
        chosen = out.double_res if x2 else out.full_res
        return np.clip(chosen.data[0], 0.0, 1.0)

    def holdout_psnr(self):
        idx = min(self.train_cfg.holdout_index, len(self.dataset) - 1)
        deg, clean = self.dataset.pair(idx)
        return psnr(self.restore(deg), clean)

    def training_psnr(self):
        values = []
        for i in range(len(self.dataset)):
            deg, clean = self.dataset.pair(i)
            values.append(psnr(self.restore(deg), clean))
        return float(np.mean(values))


def restore_with_checkpoint(ckpt, image, x2=False):
    """Stateless single-image inference from a loaded Checkpoint."""
    model = Phaseformer(ckpt.model_config, seed=ckpt.train_config.seed)
    for name, p in model.named_parameters():
        p.data = ckpt.params[name].astype(p.dtype).reshape(p.shape)
    with no_grad():
        out = model.forward(Tensor(image[None].astype(np.float32)))
    chosen = out.double_res if x2 else out.full_res
    return np.clip(chosen.data[0], 0.0, 1.0)
