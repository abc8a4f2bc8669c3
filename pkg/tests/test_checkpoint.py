import numpy as np
import pytest

from mnmt.checkpoint import (
    Checkpoint,
    checkpoint_bytes,
    checkpoint_digest,
    config_hash,
    load_checkpoint,
    require_compatible,
    save_checkpoint,
)
from mnmt.errors import ConfigError, InputError
from mnmt.model import ModelConfig, init_parameters

CONFIG = ModelConfig(vocab_size=20, d_model=8, n_heads=2, n_enc_layers=1,
                     n_dec_layers=1, d_ff=16, max_len=12)


def fresh(seed=0, step=0, epoch=0, vocab_hash="vh") -> Checkpoint:
    return Checkpoint(
        params=init_parameters(CONFIG, seed=seed),
        mconfig=CONFIG,
        optimizer_state={},
        vocab_hash=vocab_hash,
        step=step,
        epoch=epoch,
    )


class TestRoundTrip:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        ckpt = fresh(seed=3, step=41, epoch=7)
        ckpt.optimizer_state["m"]["embed"][:] = 0.25
        ckpt.optimizer_state["t"] = 41
        first = save_checkpoint(ckpt, tmp_path / "a.ckpt").read_bytes()
        loaded = load_checkpoint(tmp_path / "a.ckpt")
        second = save_checkpoint(loaded, tmp_path / "b.ckpt").read_bytes()
        assert first == second

    def test_loaded_state_matches_saved_state(self, tmp_path):
        ckpt = fresh(seed=4, step=10, epoch=2, vocab_hash="abc123")
        save_checkpoint(ckpt, tmp_path / "c.ckpt")
        loaded = load_checkpoint(tmp_path / "c.ckpt")
        assert loaded.mconfig == CONFIG
        assert loaded.step == 10 and loaded.epoch == 2
        assert loaded.vocab_hash == "abc123"
        assert loaded.optimizer_state["t"] == 0
        for name, tensor in ckpt.params.items():
            got = loaded.params[name]
            assert got.data.dtype == tensor.data.dtype
            assert got.data.tobytes() == tensor.data.tobytes()
        for name, arr in ckpt.optimizer_state["v"].items():
            assert loaded.optimizer_state["v"][name].tobytes() == arr.tobytes()

    def test_identical_state_has_identical_digest(self):
        assert checkpoint_digest(fresh(seed=5)) == checkpoint_digest(fresh(seed=5))
        assert checkpoint_digest(fresh(seed=5)) != checkpoint_digest(fresh(seed=6))

    def test_float32_tensors_stay_float32(self, tmp_path):
        ckpt = fresh(seed=7)
        assert ckpt.params["embed"].data.dtype == np.float32
        save_checkpoint(ckpt, tmp_path / "d.ckpt")
        assert load_checkpoint(tmp_path / "d.ckpt").params["embed"].data.dtype == np.float32


class TestRejects:
    def test_garbage_file(self, tmp_path):
        p = tmp_path / "junk"
        p.write_bytes(b"not a checkpoint at all")
        with pytest.raises(InputError):
            load_checkpoint(p)

    def test_truncated_payload(self, tmp_path):
        ckpt = fresh()
        raw = checkpoint_bytes(ckpt)
        p = tmp_path / "cut.ckpt"
        p.write_bytes(raw[: len(raw) - 64])
        with pytest.raises(InputError, match="truncated"):
            load_checkpoint(p)

    def test_trailing_bytes(self, tmp_path):
        p = tmp_path / "extra.ckpt"
        p.write_bytes(checkpoint_bytes(fresh()) + b"x")
        with pytest.raises(InputError, match="trailing"):
            load_checkpoint(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_checkpoint(tmp_path / "absent.ckpt")


class TestCompatibility:
    def test_vocab_hash_mismatch_is_config_error(self):
        with pytest.raises(ConfigError, match="vocabulary"):
            require_compatible(fresh(vocab_hash="aaa"), CONFIG, "bbb")

    def test_architecture_mismatch_names_the_field(self):
        other = ModelConfig(**{**CONFIG.to_dict(), "d_ff": 32})
        with pytest.raises(ConfigError, match="d_ff"):
            require_compatible(fresh(), other, "vh")

    def test_objective_knobs_may_differ(self):
        other = ModelConfig(**{**CONFIG.to_dict(), "dropout": 0.0, "label_smoothing": 0.0})
        require_compatible(fresh(), other, "vh")

    def test_config_hash_tracks_config(self):
        other = ModelConfig(**{**CONFIG.to_dict(), "dropout": 0.2})
        assert config_hash(CONFIG) != config_hash(other)
        assert config_hash(CONFIG) == config_hash(ModelConfig(**CONFIG.to_dict()))


class TestClone:
    def test_clone_is_independent(self):
        ckpt = fresh(seed=8)
        twin = ckpt.clone()
        twin.params["embed"].data[0, 0] += 1.0
        twin.optimizer_state["m"]["embed"][0, 0] += 1.0
        assert ckpt.params["embed"].data[0, 0] != twin.params["embed"].data[0, 0]
        assert ckpt.optimizer_state["m"]["embed"][0, 0] == 0.0
