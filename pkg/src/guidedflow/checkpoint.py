"""Binary model checkpoints.

Layout (all integers little-endian uint32, floats little-endian float64):

    bytes 0-3   magic "ORGN"
    u32         format version (1)
    u32 x 4     input_dim, hidden_width, hidden_depth, output_dim
    u32         rectification_level
    u32         length L of the UTF-8 JSON training_meta blob
    L bytes     training_meta JSON
    arrays      per layer, weight matrix row-major then bias vector

Round-trips are bitwise lossless; the format is documented in the README
so other implementations can read it.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .flow import FlowModel
from .mlp import NetworkParams, layer_dims

__all__ = ["MAGIC", "VERSION", "CheckpointFormatError",
           "save_checkpoint", "load_checkpoint"]

MAGIC = b"ORGN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIII")


class CheckpointFormatError(ValueError):
    """The file is not a valid checkpoint of a supported version."""


def save_checkpoint(path, model: FlowModel) -> None:
    p = model.params
    meta = json.dumps(model.training_meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, p.input_dim, p.hidden_width,
                              p.hidden_depth, p.output_dim,
                              model.rectification_level, len(meta)))
        fh.write(meta)
        for w, b in zip(p.weights, p.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> FlowModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise CheckpointFormatError("file too short for header")
    magic, version, din, width, depth, dout, level, meta_len = \
        _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported version {version}")
    off = _HEADER.size
    if len(blob) < off + meta_len:
        raise CheckpointFormatError("truncated metadata")
    try:
        meta = json.loads(blob[off:off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"bad metadata: {exc}") from exc
    off += meta_len
    weights = []
    biases = []
    for fan_in, fan_out in layer_dims(din, width, depth, dout):
        need = (fan_in * fan_out + fan_out) * 8
        if len(blob) < off + need:
            raise CheckpointFormatError("truncated parameter arrays")
        w = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out,
                          offset=off).reshape(fan_in, fan_out)
        off += fan_in * fan_out * 8
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=off)
        off += fan_out * 8
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(blob):
        raise CheckpointFormatError(f"{len(blob) - off} trailing bytes")
    params = NetworkParams(tuple(weights), tuple(biases), din, width, depth, dout)
    return FlowModel(params=params, rectification_level=level,
                     training_meta=meta)
