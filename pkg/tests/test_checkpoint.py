import numpy as np
import pytest
from numpy.testing import assert_array_equal

from neural.checkpoint import (
    CHECKPOINT_MAGIC,
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from volatility.errors import ConfigError


def _tensors():
    return {
        "pred.l1.weight": np.arange(6, dtype=float).reshape(2, 3),
        "gru.b_x": np.array([0.5, -0.25]),
        "scalar": np.array(3.0),
    }


def test_encoding_is_byte_stable():
    meta = {"seed": "7", "format": "neural-garch"}
    assert encode_checkpoint(_tensors(), meta) == encode_checkpoint(dict(reversed(list(_tensors().items()))), meta)


def test_layout_header():
    blob = encode_checkpoint({"w": np.ones((2, 2))}, {"k": "v"})
    assert blob[:4] == CHECKPOINT_MAGIC
    assert blob[4] == 1
    assert int.from_bytes(blob[5:9], "little") == len(b"k=v")
    # 4 + 1 + 4 + 3 + 4 + (2 + 1 + 1 + 8 + 32)
    assert len(blob) == 60


def test_save_and_load(tmp_path):
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(path, _tensors(), {"hidden_size": "4"})
    tensors, meta = load_checkpoint(path)
    assert meta == {"hidden_size": "4"}
    for name, value in _tensors().items():
        assert tensors[name].shape == value.shape
        assert_array_equal(tensors[name], value)


def test_bad_magic():
    blob = encode_checkpoint(_tensors(), {})
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"XXXX" + blob[4:])


def test_truncated_and_trailing_bytes():
    blob = encode_checkpoint(_tensors(), {})
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob[:-5])
    with pytest.raises(CheckpointError):
        decode_checkpoint(blob + b"\x00")


def test_unsupported_version():
    blob = bytearray(encode_checkpoint(_tensors(), {}))
    blob[4] = 9
    with pytest.raises(CheckpointError):
        decode_checkpoint(bytes(blob))


def test_checkpoint_error_is_config_error():
    assert issubclass(CheckpointError, ConfigError)
    with pytest.raises(CheckpointError):
        encode_checkpoint({}, {"bad": "multi\nline"})
