"""
Unit tests for checkpoint_service module.
"""
import struct

import numpy as np
import pytest

from src.errors import CheckpointError
from src.models.params import AdamState
from src.models.run_config import NetworkSpec
from src.services import network_service
from src.services.checkpoint_service import MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from src.utils.numkit import Rng


@pytest.fixture
def ugmm_checkpoint(rng):
    spec = NetworkSpec(kind="ugmm", layer_widths=[4, 6, 3], mode="generative")
    params = network_service.init(spec, rng)
    state = AdamState.for_params(params)
    for _, m in state.m.named_tensors():
        m += rng.normal(m.shape)
    state.t = 17
    return Checkpoint(spec=spec, params=params, state=state, epoch=9, run_config={"name": "x"})


def _assert_same(a, b):
    for (na, ta), (nb, tb) in zip(a.named_tensors(), b.named_tensors()):
        assert na == nb
        np.testing.assert_array_equal(ta, tb)


def test_save_load_is_lossless(tmp_path, ugmm_checkpoint):
    """Test that parameters, optimizer state and metadata come back bit for bit."""
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, ugmm_checkpoint)
    loaded = load_checkpoint(path)

    assert loaded.spec == ugmm_checkpoint.spec
    assert loaded.epoch == 9
    assert loaded.run_config == {"name": "x"}
    assert loaded.state.t == 17
    _assert_same(loaded.params, ugmm_checkpoint.params)
    _assert_same(loaded.state.m, ugmm_checkpoint.state.m)
    _assert_same(loaded.state.v, ugmm_checkpoint.state.v)


def test_dense_checkpoint_without_state(tmp_path):
    """Test a baseline network saved without optimizer state."""
    spec = NetworkSpec(kind="ffnn", layer_widths=[3, 5, 2])
    params = network_service.init(spec, Rng(0))
    save_checkpoint(tmp_path / "dense.bin", Checkpoint(spec=spec, params=params))
    loaded = load_checkpoint(tmp_path / "dense.bin")
    assert loaded.state is None
    _assert_same(loaded.params, params)


def test_file_starts_with_magic(tmp_path, ugmm_checkpoint):
    """Test the fixed prefix layout."""
    save_checkpoint(tmp_path / "c.bin", ugmm_checkpoint)
    raw = (tmp_path / "c.bin").read_bytes()
    assert raw[:8] == MAGIC
    assert struct.unpack_from("<I", raw, 8)[0] == 1


def test_saving_twice_is_byte_identical(tmp_path, ugmm_checkpoint):
    """Test that output bytes depend only on content."""
    save_checkpoint(tmp_path / "a.bin", ugmm_checkpoint)
    save_checkpoint(tmp_path / "b.bin", ugmm_checkpoint)
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


@pytest.mark.parametrize(
    "corrupt, message",
    [
        (lambda raw: b"NOTACKPT" + raw[8:], "magic"),
        (lambda raw: raw[:8] + struct.pack("<I", 99) + raw[12:], "version"),
        (lambda raw: raw[:-3], "truncated"),
        (lambda raw: raw + b"\x00" * 8, "trailing"),
        (lambda raw: raw[:10], "too short"),
    ],
)
def test_corrupt_files_are_rejected(tmp_path, ugmm_checkpoint, corrupt, message):
    """Test that each kind of damage raises CheckpointError."""
    path = tmp_path / "c.bin"
    save_checkpoint(path, ugmm_checkpoint)
    path.write_bytes(corrupt(path.read_bytes()))
    with pytest.raises(CheckpointError, match=message):
        load_checkpoint(path)


def test_tensor_shape_must_match_spec(tmp_path, ugmm_checkpoint):
    """Test that tensors inconsistent with the embedded spec are rejected."""
    wrong = Checkpoint(
        spec=NetworkSpec(kind="ugmm", layer_widths=[4, 5, 3]),
        params=ugmm_checkpoint.params,
    )
    save_checkpoint(tmp_path / "wrong.bin", wrong)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint(tmp_path / "wrong.bin")


def test_missing_file(tmp_path):
    """Test that an absent checkpoint is a CheckpointError."""
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.bin")
