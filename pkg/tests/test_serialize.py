import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sobolev_forge import serialize
from sobolev_forge.algebra import assemble_resnet, mlp_to_cnn
from sobolev_forge.netcore import resnet_forward_batch
from sobolev_forge.scalarnets import build_trapezoid


def _psi_model(m=1, N=2):
    return assemble_resnet([mlp_to_cnn(build_trapezoid(m, N).as_mlp(), 2)])


def test_model_roundtrip_bit_exact(tmp_path):
    net = _psi_model()
    path = tmp_path / "net.json"
    serialize.save(path, net)
    back = serialize.load(path)
    for b1, b2 in zip(net.blocks, back.blocks):
        for f1, f2 in zip(b1.filters, b2.filters):
            assert np.array_equal(f1.entries, f2.entries)
        for x1, x2 in zip(b1.biases, b2.biases):
            assert np.array_equal(x1, x2)
    assert np.array_equal(net.fc_weight, back.fc_weight)
    assert net.fc_bias == back.fc_bias
    xs = np.linspace(-1, 2, 1001)[:, None]
    assert np.array_equal(resnet_forward_batch(net, xs), resnet_forward_batch(back, xs))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False, width=64), min_size=4, max_size=4))
def test_roundtrip_survives_extreme_finite_doubles(vals):
    net = _psi_model()
    net.blocks[0].filters[0].entries[0, 0, 0] = vals[0]
    net.blocks[0].biases[0][0, 0] = vals[1]
    doc = json.loads(json.dumps(serialize.model_to_dict(net)))
    back = serialize.model_from_dict(doc)
    assert np.array_equal(
        back.blocks[0].filters[0].entries, net.blocks[0].filters[0].entries
    )


def test_cnn_roundtrip(tmp_path):
    cnn = mlp_to_cnn(build_trapezoid(0, 4).as_mlp(), 2)
    path = tmp_path / "cnn.json"
    serialize.save(path, cnn)
    back = serialize.load(path)
    xs = np.linspace(-1, 2, 500)[:, None]
    assert np.array_equal(cnn.forward(xs), back.forward(xs))
    assert back.input_pair_layer == cnn.input_pair_layer


def test_version_mismatch(tmp_path):
    net = _psi_model()
    doc = serialize.model_to_dict(net)
    doc["version"] = 99
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(serialize.SerializationError, match="version"):
        serialize.load(path)


def test_corrupt_file(tmp_path):
    path = tmp_path / "corrupt.json"
    path.write_text("{not json")
    with pytest.raises(serialize.SerializationError, match="corrupt"):
        serialize.load(path)


def test_unknown_kind(tmp_path):
    path = tmp_path / "odd.json"
    path.write_text(json.dumps({"version": 1, "kind": "mystery"}))
    with pytest.raises(serialize.SerializationError, match="kind"):
        serialize.load(path)


def test_atomic_write_no_partial(tmp_path):
    path = tmp_path / "x.txt"
    serialize.atomic_write_text(path, "hello")
    assert path.read_text() == "hello"
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert not leftovers
