"""Command-line interface.

Subcommands: train, infer, eval, param-count, flops, grad-check,
diagnose-phase, config show. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ModelConfig, TrainConfig, config_to_lines, desk_config, load_config_file
from .data import PairedDataset
from .diagnostics import diagnose_phase, run_gradient_checks
from .errors import (
    ConfigurationError,
    DimensionError,
    DomainError,
    IngestionError,
    NumericalAbort,
    PhaseformerError,
    UsageError,
)
from .imageio import load_image, save_image
from .metrics import MetricReport
from .model import count_parameters, estimate_flops
from .train import Trainer, restore_with_checkpoint


class _Parser(argparse.ArgumentParser):
    """argparse that raises (for exit code 1) instead of exiting with 2."""

    def error(self, message):
        raise UsageError(message)


def _build_parser():
    parser = _Parser(prog="phaseformer",
                     description="Phase-based underwater image restoration")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text, config=False, data=False, epochs=False, seed=False,
            checkpoint=False, out=False, x2=False, desk=False):
        cmd = sub.add_parser(name, help=help_text)
        if config:
            cmd.add_argument("--config", metavar="PATH", help="config file (key=value lines)")
        if data:
            cmd.add_argument("--data", metavar="DIR", required=True,
                             help="directory with degraded/ and clean/ subdirs")
        if epochs:
            cmd.add_argument("--epochs", metavar="N", type=int, default=None)
        if seed:
            cmd.add_argument("--seed", metavar="N", type=int, default=None)
        if checkpoint:
            cmd.add_argument("--checkpoint", metavar="PATH")
        if out:
            cmd.add_argument("--out", metavar="PATH")
        if x2:
            cmd.add_argument("--x2", action="store_true",
                             help="write the double-resolution output")
        if desk:
            cmd.add_argument("--desk", action="store_true", help="use the small desk preset")
        return cmd

    add("train", "train a model on paired data", config=True, data=True, epochs=True,
        seed=True, checkpoint=True, out=True, desk=True)
    infer = add("infer", "restore one image with a trained checkpoint",
                checkpoint=True, out=True, x2=True)
    infer.add_argument("image", metavar="IMAGE", help="input PPM/PNG image")
    add("eval", "metric table for restored images vs clean references",
        data=True, checkpoint=True)
    add("param-count", "trainable parameter count with per-module breakdown",
        config=True, desk=True)
    add("flops", "estimated FLOPs for one input", config=True, desk=True)
    grad = add("grad-check", "finite-difference self-test of all gradients")
    grad.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    add("diagnose-phase", "amplitude-vs-phase degradation statistics", data=True)
    config_cmd = add("config", "configuration utilities", config=True, desk=True)
    config_cmd.add_argument("action", choices=["show"],
                            help="'show' prints every key with its value")
    return parser


def _resolve_configs(args):
    if getattr(args, "desk", False):
        model_cfg, train_cfg = desk_config()
    else:
        model_cfg, train_cfg = ModelConfig(), TrainConfig()
    if getattr(args, "config", None):
        model_cfg, train_cfg = load_config_file(args.config)
    if getattr(args, "seed", None) is not None:
        train_cfg.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        train_cfg.epochs = args.epochs
    return model_cfg.validate(), train_cfg.validate()


def _cmd_train(args):
    model_cfg, train_cfg = _resolve_configs(args)
    dataset = PairedDataset.from_dirs(args.data, target_size=train_cfg.data_size)
    resume = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if resume is not None:
        model_cfg, train_cfg = resume.model_config, resume.train_config
        if args.epochs is not None:
            train_cfg.epochs = args.epochs
    out_path = args.out or "checkpoint.phfm"
    trainer = Trainer(model_cfg, train_cfg, dataset, log=print, resume=resume)
    trainer.run(train_cfg.epochs, checkpoint_path=out_path)
    print(f"# checkpoint written to {out_path}")
    return 0


def _cmd_infer(args):
    if not args.checkpoint:
        raise UsageError("infer requires --checkpoint")
    if not args.out:
        raise UsageError("infer requires --out")
    ckpt = load_checkpoint(args.checkpoint)
    image = load_image(args.image, target_size=ckpt.train_config.data_size)
    restored = restore_with_checkpoint(ckpt, image, x2=args.x2)
    save_image(args.out, restored)
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args):
    if not args.checkpoint:
        raise UsageError("eval requires --checkpoint")
    ckpt = load_checkpoint(args.checkpoint)
    dataset = PairedDataset.from_dirs(args.data, target_size=ckpt.train_config.data_size)
    report = MetricReport()
    trainer = Trainer(ckpt.model_config, ckpt.train_config, dataset, resume=ckpt)
    for i in range(len(dataset)):
        degraded, clean = dataset.pair(i)
        report.add(dataset.names[i], trainer.restore(degraded), clean)
    print(report.table())
    return 0


def _cmd_param_count(args):
    model_cfg, _ = _resolve_configs(args)
    total, breakdown = count_parameters(model_cfg)
    for key in sorted(breakdown):
        print(f"{key}\t{breakdown[key]}")
    print(f"total\t{total}")
    print(f"# {total / 1e6:.3f}M trainable parameters")
    return 0


def _cmd_flops(args):
    model_cfg, _ = _resolve_configs(args)
    report = estimate_flops(model_cfg)
    h, w = model_cfg.input_size
    for key in ("conv", "attention", "fft"):
        print(f"{key}\t{report[key]:.0f}")
    print(f"total\t{report['total']:.0f}")
    print(f"# {report['total'] / 1e9:.2f} GFLOPs at {h}x{w}")
    return 0


def _cmd_grad_check(args):
    ok = run_gradient_checks(fault_injection=args.inject_fault)
    if not ok:
        raise NumericalAbort("gradient check failed")
    print("all gradient checks passed")
    return 0


def _cmd_diagnose_phase(args):
    dataset = PairedDataset.from_dirs(args.data, target_size=256)
    report = diagnose_phase(dataset)
    print(f"pairs\t{report['pairs']}")
    print(f"mean_amplitude_distance\t{report['mean_amplitude_distance']:.6f}")
    print(f"mean_phase_distance\t{report['mean_phase_distance']:.6f}")
    print(f"fraction_amplitude_dominant\t{report['fraction_amplitude_dominant']:.4f}")
    return 0


def _cmd_config(args):
    model_cfg, train_cfg = _resolve_configs(args)
    for line in config_to_lines(model_cfg, train_cfg):
        print(line)
    return 0


_HANDLERS = {
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "param-count": _cmd_param_count,
    "flops": _cmd_flops,
    "grad-check": _cmd_grad_check,
    "diagnose-phase": _cmd_diagnose_phase,
    "config": _cmd_config,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required (see --help)")
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigurationError, DimensionError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except IngestionError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
