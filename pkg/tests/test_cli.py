"""Command-line surface: subcommands, exit codes, and output contracts."""

import subprocess
import sys

import numpy as np
import pytest

from phaseformer.cli import main
from phaseformer.data import make_synthetic_pairs
from phaseformer.imageio import save_image


MICRO_CONFIG = "\n".join([
    "base_channels=4",
    "blocks_per_level=1,1,1",
    "bottleneck_blocks=1",
    "decoder_blocks_per_level=1,1,1",
    "heads_per_level=1,2,4",
    "bottleneck_heads=8",
    "input_size=16,16",
    "data_size=16",
    "epochs=2",
    "augment=false",
]) + "\n"


@pytest.fixture
def data_dir(tmp_path, rng):
    root = tmp_path / "data"
    (root / "degraded").mkdir(parents=True)
    (root / "clean").mkdir()
    ds = make_synthetic_pairs(4, 16, rng)
    for i in range(len(ds)):
        deg, clean = ds.pair(i)
        save_image(root / "degraded" / f"img{i}.ppm", deg)
        save_image(root / "clean" / f"img{i}.ppm", clean)
    return root


@pytest.fixture
def micro_config_file(tmp_path):
    path = tmp_path / "micro.cfg"
    path.write_text(MICRO_CONFIG)
    return path


@pytest.fixture
def trained_checkpoint(tmp_path, data_dir, micro_config_file, capsys):
    out = tmp_path / "model.phfm"
    code = main(["train", "--data", str(data_dir), "--config", str(micro_config_file),
                 "--out", str(out), "--seed", "1"])
    capsys.readouterr()
    assert code == 0
    return out


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["param-count", "--bogus"]) == 1

    def test_missing_subcommand_is_usage_error(self, capsys):
        assert main([]) == 1

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert main(["train"]) == 1

    def test_missing_data_dir_is_data_error(self, tmp_path, capsys):
        assert main(["diagnose-phase", "--data", str(tmp_path / "nope")]) == 2

    def test_corrupt_checkpoint_is_data_error(self, tmp_path, data_dir, capsys):
        bad = tmp_path / "bad.phfm"
        bad.write_bytes(b"garbage")
        assert main(["eval", "--data", str(data_dir), "--checkpoint", str(bad)]) == 2

    def test_injected_gradient_fault_exits_3(self, capsys):
        assert main(["grad-check", "--inject-fault"]) == 3


class TestTrainCli:
    def test_train_writes_checkpoint_and_logs(self, tmp_path, data_dir,
                                              micro_config_file, capsys):
        out = tmp_path / "run.phfm"
        code = main(["train", "--data", str(data_dir), "--config", str(micro_config_file),
                     "--out", str(out)])
        captured = capsys.readouterr().out
        assert code == 0
        assert out.exists()
        step_lines = [l for l in captured.splitlines()
                      if l and not l.startswith("#")]
        assert len(step_lines) == 4  # 4 pairs / batch 2 * 2 epochs
        assert all(len(l.split("\t")) == 7 for l in step_lines)

    def test_repeated_runs_are_byte_identical(self, tmp_path, data_dir,
                                              micro_config_file, capsys):
        blobs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{tag}.phfm"
            assert main(["train", "--data", str(data_dir), "--config",
                         str(micro_config_file), "--out", str(out)]) == 0
            blobs.append(out.read_bytes())
        capsys.readouterr()
        assert blobs[0] == blobs[1]

    def test_resume_continues_epochs_and_steps(self, tmp_path, data_dir,
                                               micro_config_file, capsys):
        from phaseformer.checkpoint import load_checkpoint

        first = tmp_path / "first.phfm"
        main(["train", "--data", str(data_dir), "--config", str(micro_config_file),
              "--out", str(first), "--epochs", "1"])
        resumed = tmp_path / "resumed.phfm"
        code = main(["train", "--data", str(data_dir), "--checkpoint", str(first),
                     "--out", str(resumed), "--epochs", "3"])
        capsys.readouterr()
        assert code == 0
        ckpt = load_checkpoint(resumed)
        assert ckpt.epoch == 3
        assert ckpt.step == 6  # 2 steps per epoch

    def test_param_count_equals_checkpoint_scalars(self, trained_checkpoint,
                                                   micro_config_file, tmp_path, capsys):
        from phaseformer.checkpoint import load_checkpoint

        code = main(["param-count", "--config", str(micro_config_file)])
        out = capsys.readouterr().out
        assert code == 0
        total = int([l for l in out.splitlines() if l.startswith("total\t")][0].split("\t")[1])
        assert total == load_checkpoint(trained_checkpoint).scalar_count()


class TestInferCli:
    def test_infer_writes_byte_identical_outputs(self, tmp_path, data_dir,
                                                 trained_checkpoint):
        src = data_dir / "degraded" / "img0.ppm"
        outputs = []
        for tag in ("a", "b"):
            out = tmp_path / f"restored_{tag}.png"
            run = subprocess.run(
                [sys.executable, "-m", "phaseformer.cli", "infer", str(src),
                 "--checkpoint", str(trained_checkpoint), "--out", str(out)],
                capture_output=True, text=True,
            )
            assert run.returncode == 0, run.stderr
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_x2_flag_doubles_output(self, tmp_path, data_dir, trained_checkpoint, capsys):
        from phaseformer.imageio import load_image

        src = data_dir / "degraded" / "img0.ppm"
        out = tmp_path / "big.ppm"
        code = main(["infer", str(src), "--checkpoint", str(trained_checkpoint),
                     "--out", str(out), "--x2"])
        capsys.readouterr()
        assert code == 0
        assert load_image(out).shape == (3, 32, 32)

    def test_missing_flags_are_usage_errors(self, tmp_path, data_dir,
                                            trained_checkpoint, capsys):
        src = data_dir / "degraded" / "img0.ppm"
        assert main(["infer", str(src), "--out", str(tmp_path / "o.png")]) == 1
        assert main(["infer", str(src), "--checkpoint", str(trained_checkpoint)]) == 1


class TestEvalCli:
    def test_metric_table_layout(self, data_dir, trained_checkpoint, capsys):
        code = main(["eval", "--data", str(data_dir), "--checkpoint",
                     str(trained_checkpoint)])
        out = capsys.readouterr().out
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "image\tpsnr\tssim\tuiqm\tuism"
        assert len(lines) == 6  # header + 4 images + mean
        assert lines[-1].startswith("mean\t")
        for line in lines[1:]:
            assert len(line.split("\t")) == 5


class TestAccountingCli:
    def test_param_count_desk(self, capsys):
        assert main(["param-count", "--desk"]) == 0
        out = capsys.readouterr().out
        assert "total" in out and "M trainable parameters" in out

    def test_flops_reports_breakdown(self, capsys):
        assert main(["flops", "--desk"]) == 0
        out = capsys.readouterr().out
        for key in ("conv", "attention", "fft", "total"):
            assert key in out

    def test_grad_check_passes(self, capsys):
        assert main(["grad-check"]) == 0
        assert "all gradient checks passed" in capsys.readouterr().out


class TestDiagnoseCli:
    def test_reports_fraction(self, data_dir, capsys):
        code = main(["diagnose-phase", "--data", str(data_dir)])
        out = capsys.readouterr().out
        assert code == 0
        assert "fraction_amplitude_dominant" in out


class TestConfigCli:
    def test_show_prints_all_keys(self, capsys):
        assert main(["config", "show"]) == 0
        out = capsys.readouterr().out
        for key in ("base_channels", "learning_rate", "noise_sigma_max",
                    "skip_kind", "fixed_weights"):
            assert key in out

    def test_show_desk_preset(self, capsys):
        assert main(["config", "show", "--desk"]) == 0
        out = capsys.readouterr().out
        assert "base_channels=8" in out

    def test_roundtrip_through_file(self, tmp_path, capsys):
        assert main(["config", "show"]) == 0
        text = capsys.readouterr().out
        path = tmp_path / "dump.cfg"
        path.write_text(text)
        assert main(["config", "show", "--config", str(path)]) == 0
        assert capsys.readouterr().out == text
