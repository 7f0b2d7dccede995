"""FBNN v1 container: independent writer and reader.

An FBNN file stores a feed-forward sparse sign network as one flat
little-endian byte stream:

    "FBNN"          magic
    u16             version (currently 1)
    u8              dim (1 or 2)
    u32 x (dim+1)   input dims: (h1, ch) for dim 1, (h1, h2, ch) for dim 2
    u16             layer count
    ...layers...    (no trailing bytes allowed)

Each layer is a u8 kind tag followed by kind-specific fields:

    CONV1D (1)   u32 g, kernel, stride, pad      + weight planes
    CONV2D (2)   u32 g, k1, k2, stride, pad      + weight planes
    FC (3)       u32 fan_in, fan_out             + weight planes
    BN_SIGN (4)  u32 units, then units x i32 thresholds
    MAXPOOL (5)  u32 pool
    OUTPUT (6)   u32 fan_in, fan_out             + weight planes

Weighted layers carry ternary weights in {-1, 0, +1} as two bit planes: a
sign plane (bit 1 when the weight is +1) followed by a mask plane (bit 1
when the weight is nonzero).  Each plane packs bits LSB-first within each
byte and is padded separately to a whole byte.  Bits run in unit-major
order: unit 0's full fan-in row, then unit 1's, and so on.  A pruned link
(mask 0) must have sign bit 0 — files are canonical, so loading and
re-saving reproduces the input byte for byte.

Convolution rows index their fan-in as k*in_ch + ch (1D) or
(k1*k2_extent + k2)*in_ch + ch (2D): tap-major, channel-minor.

This module is deliberately self-contained — it does not import the
inference engine — so files it writes can be cross-checked against an
implementation with no shared code.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

MAGIC = b"FBNN"
VERSION = 1

CONV1D = 1
CONV2D = 2
FC = 3
BN_SIGN = 4
MAXPOOL = 5
OUTPUT = 6

PAD_VALID = 0
PAD_SAME = 1

KIND_NAMES = {
    CONV1D: "CONV1D",
    CONV2D: "CONV2D",
    FC: "FC",
    BN_SIGN: "BN_SIGN",
    MAXPOOL: "MAXPOOL",
    OUTPUT: "OUTPUT",
}

WEIGHTED = (CONV1D, CONV2D, FC, OUTPUT)


class ExportError(ValueError):
    """A recipe, weight tensor, or container byte stream is invalid."""


@dataclass
class Layer:
    """One layer record; only the fields for its kind are meaningful."""

    kind: int
    g: int = 0
    kernel: tuple = ()
    stride: int = 1
    pad: int = PAD_VALID
    fan_in: int = 0
    fan_out: int = 0
    trits: list = field(default_factory=list)
    thresholds: list = field(default_factory=list)
    pool: int = 0

    @property
    def kind_name(self) -> str:
        return KIND_NAMES.get(self.kind, f"kind {self.kind}")


@dataclass
class Model:
    """A network: input shape plus an ordered layer chain."""

    dim: int
    input_dims: tuple
    layers: list


def conv1d(g, kernel, stride, pad, trits) -> Layer:
    return Layer(CONV1D, g=g, kernel=(kernel,), stride=stride, pad=pad, trits=trits)


def conv2d(g, kernel, stride, pad, trits) -> Layer:
    return Layer(CONV2D, g=g, kernel=tuple(kernel), stride=stride, pad=pad, trits=trits)


def fc(fan_in, fan_out, trits) -> Layer:
    return Layer(FC, fan_in=fan_in, fan_out=fan_out, trits=trits)


def bn_sign(thresholds) -> Layer:
    return Layer(BN_SIGN, thresholds=list(thresholds))


def maxpool(pool) -> Layer:
    return Layer(MAXPOOL, pool=pool)


def output(fan_in, fan_out, trits) -> Layer:
    return Layer(OUTPUT, fan_in=fan_in, fan_out=fan_out, trits=trits)


# -- shape chain ---------------------------------------------------------------


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def walk_shapes(model: Model):
    """Yield (index, layer, in_shape, out_shape) down the layer chain.

    Shapes are (positions..., channels) while the signal is positional and
    (size,) once flattened by FC/OUTPUT.  Raises ExportError when a layer
    cannot follow what precedes it, so a model that walks cleanly is one
    the inference engine will accept.
    """
    if model.dim == 1:
        if len(model.input_dims) != 2:
            raise ExportError("1D models need input dims (h1, ch)")
        shape = tuple(model.input_dims)
    elif model.dim == 2:
        if len(model.input_dims) != 3:
            raise ExportError("2D models need input dims (h1, h2, ch)")
        shape = tuple(model.input_dims)
    else:
        raise ExportError(f"unsupported dim {model.dim}")
    if any(d < 1 for d in shape):
        raise ExportError(f"input dims must be positive, got {shape}")

    for index, layer in enumerate(model.layers):
        where = f"layer {index} ({layer.kind_name})"
        if layer.kind == CONV1D:
            if len(shape) != 2:
                raise ExportError(f"{where}: needs a 1D positional input")
            if layer.stride < 1 or len(layer.kernel) != 1 or layer.kernel[0] < 1:
                raise ExportError(f"{where}: bad kernel or stride")
            h1, _ = shape
            if layer.pad == PAD_SAME:
                out_h = _ceil_div(h1, layer.stride)
            elif layer.pad == PAD_VALID:
                span = h1 - layer.kernel[0]
                if span < 0:
                    raise ExportError(f"{where}: kernel longer than input")
                out_h = span // layer.stride + 1
            else:
                raise ExportError(f"{where}: bad padding code {layer.pad}")
            out = (out_h, layer.g)
        elif layer.kind == CONV2D:
            if len(shape) != 3:
                raise ExportError(f"{where}: needs a 2D positional input")
            if layer.stride < 1 or len(layer.kernel) != 2 or min(layer.kernel) < 1:
                raise ExportError(f"{where}: bad kernel or stride")
            h1, h2, _ = shape
            k1, k2 = layer.kernel
            if layer.pad == PAD_SAME:
                out = (_ceil_div(h1, layer.stride), _ceil_div(h2, layer.stride), layer.g)
            elif layer.pad == PAD_VALID:
                s1, s2 = h1 - k1, h2 - k2
                if s1 < 0 or s2 < 0:
                    raise ExportError(f"{where}: kernel larger than input")
                out = (s1 // layer.stride + 1, s2 // layer.stride + 1, layer.g)
            else:
                raise ExportError(f"{where}: bad padding code {layer.pad}")
        elif layer.kind == BN_SIGN:
            prev = model.layers[index - 1] if index else None
            if prev is None or prev.kind not in (CONV1D, CONV2D, FC):
                raise ExportError(f"{where}: must follow a weighted layer")
            units = shape[-1] if len(shape) > 1 else shape[0]
            if len(layer.thresholds) != units:
                raise ExportError(
                    f"{where}: {len(layer.thresholds)} thresholds for {units} units"
                )
            out = shape
        elif layer.kind == MAXPOOL:
            if layer.pool < 1:
                raise ExportError(f"{where}: bad pool size")
            if len(shape) == 2:
                h1, ch = shape
                if h1 % layer.pool:
                    raise ExportError(f"{where}: {h1} positions not divisible by {layer.pool}")
                out = (h1 // layer.pool, ch)
            elif len(shape) == 3:
                h1, h2, ch = shape
                if h1 % layer.pool or h2 % layer.pool:
                    raise ExportError(f"{where}: {h1}x{h2} not divisible by {layer.pool}")
                out = (h1 // layer.pool, h2 // layer.pool, ch)
            else:
                raise ExportError(f"{where}: nothing left to pool")
        elif layer.kind in (FC, OUTPUT):
            size = 1
            for d in shape:
                size *= d
            if layer.fan_in != size:
                raise ExportError(f"{where}: fan_in {layer.fan_in} != input size {size}")
            if layer.fan_out < 1:
                raise ExportError(f"{where}: fan_out must be positive")
            out = (layer.fan_out,)
        else:
            raise ExportError(f"{where}: unknown kind {layer.kind}")
        yield index, layer, shape, out
        shape = out


def layer_fan_in(layer: Layer, in_shape) -> int:
    """Fan-in of one unit of a weighted layer, given its input shape."""
    if layer.kind == CONV1D:
        return layer.kernel[0] * in_shape[1]
    if layer.kind == CONV2D:
        return layer.kernel[0] * layer.kernel[1] * in_shape[2]
    return layer.fan_in


def layer_units(layer: Layer) -> int:
    return layer.g if layer.kind in (CONV1D, CONV2D) else layer.fan_out


def validate_model(model: Model) -> Model:
    """Structural check mirroring what the inference engine enforces."""
    if not model.layers:
        raise ExportError("model has no layers")
    if model.layers[-1].kind != OUTPUT:
        raise ExportError("last layer must be OUTPUT")
    for i, layer in enumerate(model.layers):
        if layer.kind == OUTPUT and i != len(model.layers) - 1:
            raise ExportError(f"layer {i}: OUTPUT must be last")
        if layer.kind in (CONV1D, CONV2D, FC):
            nxt = model.layers[i + 1] if i + 1 < len(model.layers) else None
            if nxt is None or nxt.kind != BN_SIGN:
                raise ExportError(f"layer {i} ({layer.kind_name}): must be followed by BN_SIGN")
    for index, layer, in_shape, _out in walk_shapes(model):
        if layer.kind not in WEIGHTED:
            continue
        where = f"layer {index} ({layer.kind_name})"
        fan_in = layer_fan_in(layer, in_shape)
        units = layer_units(layer)
        if len(layer.trits) != units:
            raise ExportError(f"{where}: {len(layer.trits)} weight rows for {units} units")
        for u, row in enumerate(layer.trits):
            if len(row) != fan_in:
                raise ExportError(f"{where} unit {u}: row length {len(row)} != fan_in {fan_in}")
            live = 0
            for t in row:
                if t not in (-1, 0, 1):
                    raise ExportError(f"{where} unit {u}: weight {t!r} not ternary")
                live += t != 0
            if live == 0:
                raise ExportError(f"{where} unit {u}: all links pruned")
    return model


# -- bit planes ----------------------------------------------------------------


def _pack_bits(bits) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i >> 3] |= 1 << (i & 7)
    return bytes(out)


def _unpack_bits(data: bytes, count: int) -> list:
    return [(data[i >> 3] >> (i & 7)) & 1 for i in range(count)]


def _write_planes(out: bytearray, trits) -> None:
    signs = [1 if t > 0 else 0 for row in trits for t in row]
    masks = [1 if t != 0 else 0 for row in trits for t in row]
    out += _pack_bits(signs)
    out += _pack_bits(masks)


def _read_planes(data: bytes, offset: int, units: int, fan_in: int):
    total = units * fan_in
    nbytes = (total + 7) // 8
    if offset + 2 * nbytes > len(data):
        raise ExportError("truncated file")
    signs = _unpack_bits(data[offset : offset + nbytes], total)
    masks = _unpack_bits(data[offset + nbytes : offset + 2 * nbytes], total)
    trits = []
    for u in range(units):
        row = []
        for i in range(u * fan_in, (u + 1) * fan_in):
            if masks[i]:
                row.append(1 if signs[i] else -1)
            elif signs[i]:
                raise ExportError(f"pruned link {i} has its sign bit set (non-canonical)")
            else:
                row.append(0)
        trits.append(row)
    return trits, offset + 2 * nbytes


# -- writer --------------------------------------------------------------------


def write_model(model: Model) -> bytes:
    """Serialize a validated model to FBNN v1 bytes."""
    validate_model(model)
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HB", VERSION, model.dim)
    for d in model.input_dims:
        out += struct.pack("<I", d)
    out += struct.pack("<H", len(model.layers))
    for layer in model.layers:
        out += struct.pack("<B", layer.kind)
        if layer.kind == CONV1D:
            out += struct.pack("<IIII", layer.g, layer.kernel[0], layer.stride, layer.pad)
            _write_planes(out, layer.trits)
        elif layer.kind == CONV2D:
            out += struct.pack(
                "<IIIII", layer.g, layer.kernel[0], layer.kernel[1], layer.stride, layer.pad
            )
            _write_planes(out, layer.trits)
        elif layer.kind in (FC, OUTPUT):
            out += struct.pack("<II", layer.fan_in, layer.fan_out)
            _write_planes(out, layer.trits)
        elif layer.kind == BN_SIGN:
            out += struct.pack("<I", len(layer.thresholds))
            for t in layer.thresholds:
                out += struct.pack("<i", t)
        elif layer.kind == MAXPOOL:
            out += struct.pack("<I", layer.pool)
    return bytes(out)


# -- reader --------------------------------------------------------------------


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ExportError("truncated file")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values if len(values) > 1 else values[0]


def read_model(data: bytes) -> Model:
    """Parse FBNN v1 bytes back into a Model, validating as it goes."""
    if data[:4] != MAGIC:
        raise ExportError("not an FBNN file")
    cur = _Cursor(data)
    cur.offset = 4
    version, dim = cur.take("<HB")
    if version != VERSION:
        raise ExportError(f"unsupported FBNN version {version}")
    if dim == 1:
        input_dims = (cur.take("<I"), cur.take("<I"))
    elif dim == 2:
        input_dims = (cur.take("<I"), cur.take("<I"), cur.take("<I"))
    else:
        raise ExportError(f"unsupported dim {dim}")

    layer_count = cur.take("<H")
    model = Model(dim=dim, input_dims=input_dims, layers=[])
    for _ in range(layer_count):
        kind = cur.take("<B")
        if kind == CONV1D:
            g, kernel, stride, pad = cur.take("<IIII")
            layer = conv1d(g, kernel, stride, pad, trits=[])
        elif kind == CONV2D:
            g, k1, k2, stride, pad = cur.take("<IIIII")
            layer = conv2d(g, (k1, k2), stride, pad, trits=[])
        elif kind in (FC, OUTPUT):
            fan_in, fan_out = cur.take("<II")
            ctor = fc if kind == FC else output
            layer = ctor(fan_in, fan_out, trits=[])
        elif kind == BN_SIGN:
            units = cur.take("<I")
            layer = bn_sign(cur.take("<i") for _ in range(units))
        elif kind == MAXPOOL:
            layer = maxpool(cur.take("<I"))
        else:
            raise ExportError(f"unknown layer kind {kind}")
        model.layers.append(layer)

        if kind in WEIGHTED:
            # The planes need the fan-in, which depends on the shape chain
            # so far; walk what we have to find this layer's input shape.
            in_shape = None
            for _i, _layer, shape, _out in walk_shapes(
                Model(dim, input_dims, model.layers)
            ):
                in_shape = shape
            fan_in = layer_fan_in(layer, in_shape)
            layer.trits, cur.offset = _read_planes(
                data, cur.offset, layer_units(layer), fan_in
            )
    if cur.offset != len(data):
        raise ExportError(f"{len(data) - cur.offset} trailing bytes after the last layer")
    validate_model(model)
    return model
