"""Phase-based transformer for underwater image restoration.

A self-contained package: dense tensors with reverse-mode differentiation,
a radix-2 spectral core with phase-only feature extraction, channel
attention blocks, gated skip connections, the full encoder-decoder model,
composite adaptive-weight losses, underwater quality metrics, and a
train/infer/eval/diagnose command line. A scikit-learn style estimator
(`PhaseformerRestorer`) wraps the whole thing for ecosystem use.
"""

from .tensor import Tensor, Parameter, backward, no_grad
from .spectral import ComplexSpectrum, fft2, ifft2, decompose, pem
from .attention import Pmsa, FeedForward, TransformerBlock
from .skip import PhaseGate, adaptive_kernel_size, oa_ablation, opab
from .config import ModelConfig, TrainConfig, desk_config
from .model import (
    ModelOutput,
    Phaseformer,
    ablation_variants,
    count_parameters,
    estimate_flops,
)
from .losses import (
    FeatureExtractor,
    LossWeights,
    charbonnier,
    gradient_loss,
    ms_ssim_loss,
    perceptual_loss,
    resolution_loss,
    total_loss,
)
from .metrics import MetricReport, psnr, ssim, uicm, uiconm, uiqm, uism
from .data import PairedDataset, augment_pair, make_haze_pairs, make_synthetic_pairs
from .optim import Adam, cosine_lr
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .train import Trainer, restore_with_checkpoint
from .diagnostics import diagnose_phase, run_gradient_checks
from .estimator import PhaseformerRestorer, check_image_batch, check_paired_batches

__version__ = "0.1.0"
