"""Binary checkpoint format.

All integers are little-endian ``u32``, all values little-endian ``f32``::

    magic        4 bytes  b"PDSC"
    version      u32      (currently 1)
    in_c in_h in_w        u32 x 3
    n_layers     u32
    per layer:   tag u32, then dims
                   1 Conv       out_channels kernel_h kernel_w
                   2 MaxPool2x2 (none)
                   3 ReLU       (none)
                   4 Fully      out_dim
    n_tensors    u32
    per tensor:  is_bias u32, rank u32, extents u32 x rank, values f32 x prod(extents)

Tensors follow layer order as (weight, bias) pairs. Momentum buffers are not
stored.
"""

import hashlib
import struct
from pathlib import Path

import numpy as np

from .nn import Conv, Fully, MaxPool2x2, Network, NetworkSpec, Parameters, ReLU

MAGIC = b"PDSC"
VERSION = 1

_TAGS = {Conv: 1, MaxPool2x2: 2, ReLU: 3, Fully: 4}


class CheckpointError(ValueError):
    pass


def _u32(*values):
    return struct.pack(f"<{len(values)}I", *values)


def encode(network):
    spec = network.spec
    parts = [MAGIC, _u32(VERSION), _u32(*spec.input_shape), _u32(len(spec.layers))]
    for layer in spec.layers:
        parts.append(_u32(_TAGS[type(layer)]))
        if isinstance(layer, Conv):
            parts.append(_u32(layer.out_channels, layer.kernel_h, layer.kernel_w))
        elif isinstance(layer, Fully):
            parts.append(_u32(layer.out_dim))
    params = network.params
    parts.append(_u32(len(params.tensors)))
    for t, bias in zip(params.tensors, params.is_bias):
        parts.append(_u32(int(bias), t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(blob):
    view = memoryview(blob)
    pos = 0

    def take_u32(n=1):
        nonlocal pos
        if pos + 4 * n > len(view):
            raise CheckpointError("truncated checkpoint")
        vals = struct.unpack_from(f"<{n}I", view, pos)
        pos += 4 * n
        return vals if n > 1 else vals[0]

    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("bad magic, not a PDSC checkpoint")
    pos = 4
    version = take_u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    input_shape = take_u32(3)
    layers = []
    for _ in range(take_u32()):
        tag = take_u32()
        if tag == 1:
            layers.append(Conv(*take_u32(3)))
        elif tag == 2:
            layers.append(MaxPool2x2())
        elif tag == 3:
            layers.append(ReLU())
        elif tag == 4:
            layers.append(Fully(take_u32()))
        else:
            raise CheckpointError(f"unknown layer tag {tag}")
    spec = NetworkSpec(input_shape, layers)
    tensors, is_bias = [], []
    for _ in range(take_u32()):
        bias = bool(take_u32())
        rank = take_u32()
        shape = take_u32(rank) if rank > 1 else ((take_u32(),) if rank == 1 else ())
        count = int(np.prod(shape))
        end = pos + 4 * count
        if end > len(view):
            raise CheckpointError("truncated tensor data")
        arr = np.frombuffer(view[pos:end], dtype="<f4").astype(np.float32).reshape(shape)
        pos = end
        tensors.append(arr)
        is_bias.append(bias)
    if pos != len(view):
        raise CheckpointError("trailing bytes after last tensor")
    return Network(spec, Parameters(tensors, is_bias))


def save(network, path):
    blob = encode(network)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path):
    return decode(Path(path).read_bytes())


def digest(network):
    return hashlib.sha256(encode(network)).hexdigest()
