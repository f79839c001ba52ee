"""JSON serialization of models.

Round-trips are bit-exact for finite doubles: floats are emitted through
Python's shortest-roundtrip repr.  Files carry a schema version; loading an
unknown version or a malformed document raises SerializationError.
"""

import json
import os
import tempfile

import numpy as np

from .algebra import CnnFunction
from .netcore import ConvResNetModel, FilterTensor, ResidualBlockSpec

SCHEMA_VERSION = 1


class SerializationError(ValueError):
    """Raised for version mismatches or malformed network files."""


def _arr(a):
    a = np.asarray(a, dtype=np.float64)
    return {"dims": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d):
    try:
        return np.array(d["data"], dtype=np.float64).reshape(d["dims"])
    except (KeyError, TypeError, ValueError) as e:
        raise SerializationError(f"malformed array record: {e}") from e


def _block_to_dict(filters, biases):
    return {
        "filters": [_arr(f.entries) for f in filters],
        "biases": [_arr(b) for b in biases],
    }


def model_to_dict(net: ConvResNetModel) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "kind": "convresnet",
        "D": net.input_dim,
        "C": net.padding_channels,
        "blocks": [_block_to_dict(b.filters, b.biases) for b in net.blocks],
        "fc": {"weight": net.fc_weight.ravel().tolist(), "bias": net.fc_bias},
        "first_row_only": net.first_row_only,
    }


def model_from_dict(doc: dict) -> ConvResNetModel:
    _check_version(doc, "convresnet")
    D, C = int(doc["D"]), int(doc["C"])
    blocks = [
        ResidualBlockSpec(
            [FilterTensor(_unarr(f)) for f in b["filters"]],
            [_unarr(x) for x in b["biases"]],
        )
        for b in doc["blocks"]
    ]
    fc = np.array(doc["fc"]["weight"], dtype=np.float64).reshape(D, C)
    return ConvResNetModel(
        D, C, blocks, fc, float(doc["fc"]["bias"]), bool(doc.get("first_row_only", False))
    )


def cnn_to_dict(f: CnnFunction) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "kind": "cnn",
        "D": f.input_dim,
        "C": 1,
        "blocks": [_block_to_dict([w for w, _ in f.conv_stack], [b for _, b in f.conv_stack])],
        "fc": {"weight": f.fc_weight.ravel().tolist(), "bias": f.fc_bias},
        "first_row_only": f.first_row_only,
        "input_pair_layer": f.input_pair_layer,
    }


def cnn_from_dict(doc: dict) -> CnnFunction:
    _check_version(doc, "cnn")
    D = int(doc["D"])
    (block,) = doc["blocks"]
    stack = [
        (FilterTensor(_unarr(f)), _unarr(b))
        for f, b in zip(block["filters"], block["biases"])
    ]
    fc = np.array(doc["fc"]["weight"], dtype=np.float64).reshape(D, -1)
    return CnnFunction(
        D,
        stack,
        fc,
        float(doc["fc"]["bias"]),
        first_row_only=bool(doc.get("first_row_only", True)),
        input_pair_layer=bool(doc.get("input_pair_layer", False)),
    )


def _check_version(doc, kind):
    if not isinstance(doc, dict) or "version" not in doc:
        raise SerializationError("not a network document (missing version)")
    if doc["version"] != SCHEMA_VERSION:
        raise SerializationError(
            f"unsupported schema version {doc['version']!r}, expected {SCHEMA_VERSION}"
        )
    if doc.get("kind", kind) != kind:
        raise SerializationError(f"expected kind {kind!r}, got {doc.get('kind')!r}")


def to_dict(obj):
    if isinstance(obj, ConvResNetModel):
        return model_to_dict(obj)
    if isinstance(obj, CnnFunction):
        return cnn_to_dict(obj)
    raise SerializationError(f"cannot serialize {type(obj).__name__}")


def from_dict(doc):
    kind = doc.get("kind") if isinstance(doc, dict) else None
    if kind == "convresnet":
        return model_from_dict(doc)
    if kind == "cnn":
        return cnn_from_dict(doc)
    raise SerializationError(f"unknown document kind {kind!r}")


def atomic_write_text(path, text):
    """Write via temp file + rename so partial files never appear."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, obj):
    atomic_write_text(path, json.dumps(to_dict(obj)))


def load(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise SerializationError(f"corrupt network file {path}: {e}") from e
    return from_dict(doc)
