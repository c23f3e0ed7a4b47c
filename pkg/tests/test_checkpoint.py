"""Binary checkpoint codec."""

import struct

import numpy as np
import pytest

from core.checkpoint import MAGIC, VERSION, decode, encode, load_checkpoint, load_into, save_checkpoint
from core.net import Activation, LayerSpec, flatten, init_network
from utils.run_guard import CheckpointError


class TestCheckpointLayout:
    """Little-endian header followed by the flat float64 parameters."""

    def test_header_fields(self, tiny_net):
        payload = encode(tiny_net)
        assert payload[:4] == MAGIC
        version, n_layers = struct.unpack("<II", payload[4:12])
        assert (version, n_layers) == (VERSION, 2)
        assert struct.unpack("<III", payload[12:24]) == (3, 5, 2)
        assert payload[24:26] == bytes([0, 1])
        assert struct.unpack("<Q", payload[26:34]) == (tiny_net.n_params,)

    def test_size(self, iris_layers):
        net = init_network(iris_layers, 1)
        assert len(encode(net)) == 4 + 4 + 4 + 4 * 3 + 2 + 8 + 8 * net.n_params

    def test_round_trip_is_bitwise(self, tmp_path, wine_layers):
        net = init_network(wine_layers, 9)
        path = save_checkpoint(net, tmp_path / "nested" / "net.eagl")
        loaded = load_checkpoint(path)
        assert loaded.layers == net.layers
        np.testing.assert_array_equal(flatten(loaded), flatten(net))

    def test_load_into(self, tmp_path, tiny_net):
        path = save_checkpoint(tiny_net, tmp_path / "net.eagl")
        target = init_network(tiny_net.layers, seed=99)
        load_into(target, path)
        np.testing.assert_array_equal(flatten(target), flatten(tiny_net))


class TestCheckpointErrors:
    """Every malformed file raises CheckpointError."""

    def test_bad_magic(self, tiny_net):
        with pytest.raises(CheckpointError, match="magic"):
            decode(b"NOPE" + encode(tiny_net)[4:])

    def test_bad_version(self, tiny_net):
        payload = bytearray(encode(tiny_net))
        payload[4:8] = struct.pack("<I", VERSION + 1)
        with pytest.raises(CheckpointError, match="version"):
            decode(bytes(payload))

    def test_truncated(self, tiny_net):
        with pytest.raises(CheckpointError):
            decode(encode(tiny_net)[:-8])

    def test_trailing_bytes(self, tiny_net):
        with pytest.raises(CheckpointError, match="trailing"):
            decode(encode(tiny_net) + b"\x00")

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.eagl")

    def test_architecture_mismatch(self, tmp_path, tiny_net):
        path = save_checkpoint(tiny_net, tmp_path / "net.eagl")
        other = init_network([LayerSpec(3, 4, Activation.RELU), LayerSpec(4, 2, Activation.IDENTITY)], 0)
        with pytest.raises(CheckpointError, match="do not match"):
            load_into(other, path)
