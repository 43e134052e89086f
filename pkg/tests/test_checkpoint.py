import numpy as np
import pytest

from viewdesc import checkpoint
from viewdesc.nn import Network, default_network_spec


def test_round_trip_bitwise(tmp_path):
    net = Network.initialize(default_network_spec(2, 64, 8), seed=4)
    sha = checkpoint.save(net, tmp_path / "a.pdsc")
    back = checkpoint.load(tmp_path / "a.pdsc")
    assert back.spec == net.spec
    for a, b in zip(net.params.tensors, back.params.tensors):
        assert a.dtype == b.dtype and np.array_equal(a, b)
    assert back.params.is_bias == net.params.is_bias
    assert checkpoint.digest(back) == sha
    x = np.random.default_rng(0).normal(size=(2, 64, 64))
    assert np.array_equal(net(x), back(x))


def test_header_layout():
    blob = checkpoint.encode(Network.initialize(default_network_spec(), seed=0))
    assert blob[:4] == b"PDSC"
    assert int.from_bytes(blob[4:8], "little") == checkpoint.VERSION


def test_corrupt_blobs():
    blob = checkpoint.encode(Network.initialize(default_network_spec(), seed=0))
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.decode(b"XXXX" + blob[4:])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.decode(blob[:-3])
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.decode(blob + b"\0")
