"""Architecture and training configuration, plus the flat key=value config
file format used by the CLI and embedded in checkpoints.

Every hyperparameter the network needs is fixed here; `config show` prints
all keys with their defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigurationError


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class ModelConfig:
    """Shape of the encoder-decoder network.

    Level i (1-based) runs at 2^(i-1)*base_channels channels and
    H/2^(i-1) x W/2^(i-1) spatial size; the bottleneck sits one scale
    below the last level at 2^levels*base_channels channels. The defaults
    are the frozen full-size configuration whose parameter count lands
    near the 1.77M reference point (see count_parameters).
    """

    base_channels: int = 20
    levels: int = 3
    blocks_per_level: tuple = (2, 2, 2)
    bottleneck_blocks: int = 4
    decoder_blocks_per_level: tuple = (2, 2, 2)
    heads_per_level: tuple = (1, 2, 4)
    bottleneck_heads: int = 8
    ffn_expansion: float = 2.0
    attention_kind: str = "phase"  # phase | plain
    skip_kind: str = "opab"  # opab | oa | identity
    residual_kind: str = "normalized"  # normalized | pre_norm
    pem_differentiable: bool = True
    input_size: tuple = (256, 256)
    upsample_kernel: int = 2

    def channels_at(self, level):
        """Channel count at encoder/decoder level (1-based)."""
        return 2 ** (level - 1) * self.base_channels

    @property
    def bottleneck_channels(self):
        return 2**self.levels * self.base_channels

    def validate(self):
        if self.levels < 1:
            raise ConfigurationError(f"levels must be >= 1, got {self.levels}")
        for name in ("blocks_per_level", "decoder_blocks_per_level", "heads_per_level"):
            value = getattr(self, name)
            if len(value) != self.levels:
                raise ConfigurationError(
                    f"{name} must have {self.levels} entries, got {len(value)}"
                )
        for level in range(1, self.levels + 1):
            c = self.channels_at(level)
            h = self.heads_per_level[level - 1]
            if c % h:
                raise ConfigurationError(
                    f"level {level}: {h} heads do not divide {c} channels"
                )
        if self.bottleneck_channels % self.bottleneck_heads:
            raise ConfigurationError(
                f"bottleneck: {self.bottleneck_heads} heads do not divide "
                f"{self.bottleneck_channels} channels"
            )
        if self.attention_kind not in ("phase", "plain"):
            raise ConfigurationError(f"unknown attention_kind: {self.attention_kind}")
        if self.skip_kind not in ("opab", "oa", "identity"):
            raise ConfigurationError(f"unknown skip_kind: {self.skip_kind}")
        if self.residual_kind not in ("normalized", "pre_norm"):
            raise ConfigurationError(f"unknown residual_kind: {self.residual_kind}")
        h, w = self.input_size
        if not (_is_pow2(h) and _is_pow2(w)):
            raise ConfigurationError(f"input_size must be powers of two, got {h}x{w}")
        divisor = 2**self.levels
        if h % divisor or w % divisor:
            raise ConfigurationError(
                f"input_size {h}x{w} must be divisible by 2^levels = {divisor}"
            )
        if self.upsample_kernel < 2 or self.upsample_kernel % 2:
            raise ConfigurationError(
                f"upsample_kernel must be even and >= 2, got {self.upsample_kernel}"
            )
        return self


@dataclass
class TrainConfig:
    """Training-loop knobs, including the augmentation parameter ranges."""

    epochs: int = 100
    batch_size: int = 2
    learning_rate: float = 3e-4
    lr_min: float = 1e-6
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    data_size: int = 256
    augment: bool = True
    noise_sigma_max: float = 0.02
    contrast_min: float = 0.8
    contrast_max: float = 1.2
    charbonnier_eps: float = 1e-3
    loss_mode: str = "learnable"  # learnable | fixed
    fixed_weights: tuple = (0.25, 0.25, 0.25, 0.25)
    omega_high: float = 0.4
    omega_low: float = 0.6
    perceptual_seed: int = 1905
    holdout_index: int = 0

    def validate(self):
        if self.loss_mode not in ("learnable", "fixed"):
            raise ConfigurationError(f"unknown loss_mode: {self.loss_mode}")
        if len(self.fixed_weights) != 4:
            raise ConfigurationError("fixed_weights needs exactly 4 entries")
        if abs(self.omega_high + self.omega_low - 1.0) > 1e-9:
            raise ConfigurationError("omega_high + omega_low must equal 1")
        if not _is_pow2(self.data_size):
            raise ConfigurationError(f"data_size must be a power of two, got {self.data_size}")
        return self


def desk_config():
    """Small preset that trains in minutes on one CPU core.

    Uses pre-norm residuals and a higher initial learning rate than the
    full-size protocol: at this scale both measurably speed up convergence
    without affecting the architecture under test.
    """
    model = ModelConfig(
        base_channels=8,
        blocks_per_level=(1, 1, 1),
        bottleneck_blocks=1,
        decoder_blocks_per_level=(1, 1, 1),
        heads_per_level=(1, 2, 4),
        bottleneck_heads=8,
        residual_kind="pre_norm",
        input_size=(64, 64),
    )
    train = TrainConfig(data_size=64, learning_rate=1e-3)
    return model, train


# -- flat key=value serialization ------------------------------------------------


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text, sample):
    if isinstance(sample, bool):
        if text not in ("true", "false"):
            raise ConfigurationError(f"expected true/false, got {text!r}")
        return text == "true"
    if isinstance(sample, (tuple, list)):
        items = [t for t in text.split(",") if t != ""]
        inner = sample[0] if len(sample) else 0
        return tuple(_parse_value(t, inner) for t in items)
    if isinstance(sample, int):
        return int(text)
    if isinstance(sample, float):
        return float(text)
    return text


def config_to_lines(model_cfg, train_cfg=None):
    lines = []
    for f in fields(ModelConfig):
        lines.append(f"{f.name}={_format_value(getattr(model_cfg, f.name))}")
    if train_cfg is not None:
        for f in fields(TrainConfig):
            lines.append(f"{f.name}={_format_value(getattr(train_cfg, f.name))}")
    return lines


def config_from_lines(lines, strict=True):
    """Parse key=value lines into (ModelConfig, TrainConfig) overriding defaults."""
    model_cfg = ModelConfig()
    train_cfg = TrainConfig()
    model_fields = {f.name for f in fields(ModelConfig)}
    train_fields = {f.name for f in fields(TrainConfig)}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"bad config line (expected key=value): {line!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        text = text.strip()
        if key in model_fields:
            target = model_cfg
        elif key in train_fields:
            target = train_cfg
        elif strict:
            raise ConfigurationError(f"unknown config key: {key!r}")
        else:
            continue
        setattr(target, key, _parse_value(text, getattr(target, key)))
    model_cfg.validate()
    train_cfg.validate()
    return model_cfg, train_cfg


def load_config_file(path):
    text = Path(path).read_text(encoding="utf-8")
    return config_from_lines(text.splitlines())


def save_config_file(path, model_cfg, train_cfg=None):
    lines = config_to_lines(model_cfg, train_cfg)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
