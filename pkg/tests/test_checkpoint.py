"""Binary checkpoint format: round trips, rejection, accounting."""

import numpy as np
import pytest

from phaseformer.checkpoint import (
    Checkpoint,
    checkpoint_from_bytes,
    checkpoint_to_bytes,
    load_checkpoint,
    save_checkpoint,
)
from phaseformer.config import desk_config
from phaseformer.errors import IngestionError
from phaseformer.model import count_parameters


def make_checkpoint(rng):
    mcfg, tcfg = desk_config()
    params = {
        "b.weight": rng.standard_normal((3, 2)).astype(np.float32),
        "a.weight": rng.standard_normal((4,)).astype(np.float32),
    }
    return Checkpoint(
        model_config=mcfg,
        train_config=tcfg,
        params=params,
        adam_m={k: np.zeros_like(v) for k, v in params.items()},
        adam_v={k: np.ones_like(v) for k, v in params.items()},
        logits=np.asarray([0.1, -0.2, 0.3, 0.0], dtype=np.float32),
        epoch=7,
        step=123,
        rng_state=b'{"state": 1}',
    )


class TestFormat:
    def test_magic_and_version(self, rng):
        blob = checkpoint_to_bytes(make_checkpoint(rng))
        assert blob[:4] == b"PHFM"
        assert int.from_bytes(blob[4:8], "little") == 1

    def test_roundtrip_bit_exact(self, rng, tmp_path):
        ckpt = make_checkpoint(rng)
        path = tmp_path / "x.phfm"
        save_checkpoint(path, ckpt)
        loaded = load_checkpoint(path)
        again = tmp_path / "y.phfm"
        save_checkpoint(again, loaded)
        assert path.read_bytes() == again.read_bytes()

    def test_fields_survive(self, rng):
        ckpt = make_checkpoint(rng)
        back = checkpoint_from_bytes(checkpoint_to_bytes(ckpt))
        assert back.epoch == 7 and back.step == 123
        assert back.rng_state == b'{"state": 1}'
        np.testing.assert_array_equal(back.logits, ckpt.logits)
        for name in ckpt.params:
            np.testing.assert_array_equal(back.params[name], ckpt.params[name])
            np.testing.assert_array_equal(back.adam_v[name], ckpt.adam_v[name])
        assert back.model_config == ckpt.model_config
        assert back.train_config == ckpt.train_config

    def test_little_endian_by_construction(self, rng):
        ckpt = make_checkpoint(rng)
        blob = checkpoint_to_bytes(ckpt)
        # first parameter record: 'a.weight' (sorted order), 4 floats
        # verify the stored bytes decode as little-endian regardless of host
        back = checkpoint_from_bytes(blob)
        np.testing.assert_array_equal(
            back.params["a.weight"],
            np.frombuffer(
                np.ascontiguousarray(ckpt.params["a.weight"], dtype="<f4").tobytes(),
                dtype="<f4",
            ),
        )

    def test_unknown_version_rejected(self, rng):
        blob = bytearray(checkpoint_to_bytes(make_checkpoint(rng)))
        blob[4:8] = (99).to_bytes(4, "little")
        with pytest.raises(IngestionError, match="version 99"):
            checkpoint_from_bytes(bytes(blob))

    def test_bad_magic_rejected(self, rng):
        blob = b"NOPE" + checkpoint_to_bytes(make_checkpoint(rng))[4:]
        with pytest.raises(IngestionError, match="magic"):
            checkpoint_from_bytes(blob)

    def test_truncation_rejected(self, rng):
        blob = checkpoint_to_bytes(make_checkpoint(rng))
        with pytest.raises(IngestionError, match="truncated"):
            checkpoint_from_bytes(blob[: len(blob) - 3])

    def test_records_sorted_by_name(self, rng):
        blob = checkpoint_to_bytes(make_checkpoint(rng))
        assert blob.find(b"a.weight") < blob.find(b"b.weight")


class TestAccounting:
    def test_scalar_count_matches_count_parameters(self, rng):
        from phaseformer.data import make_synthetic_pairs
        from phaseformer.train import Trainer

        mcfg, tcfg = desk_config()
        ds = make_synthetic_pairs(2, 64, rng)
        trainer = Trainer(mcfg, tcfg, ds)
        ckpt = trainer.checkpoint()
        total, _ = count_parameters(mcfg)
        assert ckpt.scalar_count() == total
