"""Checkpoint round-trip and corruption tests."""

import struct

import numpy as np
import pytest

from rhythmnet.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from rhythmnet.errors import CorruptCheckpointError, UnsupportedVersionError
from rhythmnet.network import NetworkConfig, build, forward
from rhythmnet.optim import init_adam
from rhythmnet.rng import derive

CFG = NetworkConfig(residual_blocks=2, convs_per_block=2, filter_len=3,
                    base_filters=4, widen_every=2, subsample_every=2,
                    dropout_rate=0.0)


def make_checkpoint(with_optimizer=True):
    params, _ = build(CFG, derive(0, "ckpt"))
    state = None
    if with_optimizer:
        names = [n for n in params if not n.endswith((".rmean", ".rvar"))]
        state = init_adam(params, names, lr=0.0005)
        state.step = 17
        for n in names:
            state.m[n] = derive(1, "m", n).standard_normal(
                params[n].shape).astype(np.float32)
    return Checkpoint(config=CFG, parameters=params, optimizer_state=state,
                      epoch=4, best_val_loss=0.731)


class TestRoundTrip:
    def test_parameters_bit_exact(self, tmp_path):
        ckpt = make_checkpoint()
        path = tmp_path / "net.rnet"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.config == CFG
        assert loaded.epoch == 4
        assert loaded.best_val_loss == 0.731
        assert set(loaded.parameters) == set(ckpt.parameters)
        for name, arr in ckpt.parameters.items():
            np.testing.assert_array_equal(loaded.parameters[name], arr)

    def test_optimizer_state_bit_exact(self, tmp_path):
        ckpt = make_checkpoint()
        path = tmp_path / "net.rnet"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.optimizer_state.step == 17
        assert loaded.optimizer_state.lr == 0.0005
        for name, arr in ckpt.optimizer_state.m.items():
            np.testing.assert_array_equal(loaded.optimizer_state.m[name], arr)
        for name, arr in ckpt.optimizer_state.v.items():
            np.testing.assert_array_equal(loaded.optimizer_state.v[name], arr)

    def test_without_optimizer(self, tmp_path):
        ckpt = make_checkpoint(with_optimizer=False)
        path = tmp_path / "net.rnet"
        save_checkpoint(ckpt, path)
        assert load_checkpoint(path).optimizer_state is None

    def test_forward_equality_after_reload(self, tmp_path):
        ckpt = make_checkpoint(with_optimizer=False)
        path = tmp_path / "net.rnet"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        x = derive(2, "x").standard_normal((2, 1, 32)).astype(np.float32)
        a, _ = forward(ckpt.parameters, CFG, x, mode="eval")
        b, _ = forward(loaded.parameters, loaded.config, x, mode="eval")
        np.testing.assert_array_equal(a, b)

    def test_save_twice_identical_bytes(self, tmp_path):
        ckpt = make_checkpoint()
        save_checkpoint(ckpt, tmp_path / "a.rnet")
        save_checkpoint(ckpt, tmp_path / "b.rnet")
        assert (tmp_path / "a.rnet").read_bytes() == (tmp_path / "b.rnet").read_bytes()


class TestCorruption:
    def test_flipped_magic_rejected(self, tmp_path):
        path = tmp_path / "net.rnet"
        save_checkpoint(make_checkpoint(False), path)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptCheckpointError):
            load_checkpoint(path)

    def test_truncated_file_reports_offset(self, tmp_path):
        path = tmp_path / "net.rnet"
        save_checkpoint(make_checkpoint(False), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CorruptCheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.offset >= 0

    def test_payload_bitflip_fails_crc(self, tmp_path):
        path = tmp_path / "net.rnet"
        save_checkpoint(make_checkpoint(False), path)
        blob = bytearray(path.read_bytes())
        blob[len(blob) // 2] ^= 0x01
        path.write_bytes(bytes(blob))
        with pytest.raises(CorruptCheckpointError):
            load_checkpoint(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "net.rnet"
        save_checkpoint(make_checkpoint(False), path)
        blob = bytearray(path.read_bytes())
        blob[4:8] = struct.pack("<I", 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(UnsupportedVersionError):
            load_checkpoint(path)
