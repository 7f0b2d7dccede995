"""Ternary-weight binarized model container and the FBNN v1 file format.

A model is a chain of layers over +-1 activations:

* CONV1D / CONV2D / FC / OUTPUT carry ternary weights in {-1, 0, +1};
  zero means the link is pruned and contributes nothing anywhere.
* BN_SIGN follows each weighted layer except OUTPUT and holds one integer
  threshold per unit: the unit activates (+1) when its match count c1
  meets the threshold.  Thresholds come from folding batch-norm into the
  sign activation, see ``obnn.compiler.quantize_threshold``.
* MAXPOOL pools +1s over non-overlapping windows.

FBNN v1 is little-endian: magic "FBNN", u16 version, u8 dim, u32 input
dims (h1, h2 [, h3]), u16 layer count, then per layer a u8 kind, u32
header fields, and for weighted layers two bit-packed planes (sign then
mask, each padded to a byte boundary; unit-major, fan-in positions in
input order; sign bit 1 means +1 and must be 0 wherever the mask is 0),
and for BN_SIGN an i32 threshold per unit.  Files are canonical: loading
and re-saving reproduces them byte for byte.
"""

from __future__ import annotations

import io
import random
import struct
from dataclasses import dataclass, field

from obnn.bits import pack_bits, unpack_bits

MAGIC = b"FBNN"
VERSION = 1

CONV1D = 1
CONV2D = 2
FC = 3
BN_SIGN = 4
MAXPOOL = 5
OUTPUT = 6

KIND_NAMES = {
    CONV1D: "CONV1D",
    CONV2D: "CONV2D",
    FC: "FC",
    BN_SIGN: "BN_SIGN",
    MAXPOOL: "MAXPOOL",
    OUTPUT: "OUTPUT",
}

PAD_VALID = 0
PAD_SAME = 1


class ModelError(ValueError):
    """Malformed model structure or file bytes."""


@dataclass
class LayerSpec:
    """One layer; which fields apply depends on ``kind``.

    ``weights`` holds one trit list per output unit, fan-in positions in
    input order (kernel-major then channel for convolutions, see
    ``window_offsets``).  ``thresholds`` applies to BN_SIGN, ``pool`` to
    MAXPOOL.
    """

    kind: int
    g: int = 0                      # filters (convolutions)
    kernel: tuple = ()              # (c,) or (o1, o2)
    stride: int = 1
    pad: int = PAD_SAME
    fan_in: int = 0                 # FC / OUTPUT
    fan_out: int = 0                # FC / OUTPUT
    pool: int = 0                   # MAXPOOL
    thresholds: list = field(default_factory=list)
    weights: list = field(default_factory=list)

    @property
    def kind_name(self):
        return KIND_NAMES.get(self.kind, str(self.kind))

    def units(self):
        if self.kind in (CONV1D, CONV2D):
            return self.g
        if self.kind in (FC, OUTPUT):
            return self.fan_out
        return 0


@dataclass
class BnnModel:
    dim: int                        # 1 or 2 spatial layouts
    input_dims: tuple               # (h1, h2) or (h1, h2, h3)
    layers: list

    @property
    def input_size(self):
        size = 1
        for d in self.input_dims:
            size *= d
        return size

    @property
    def class_count(self):
        return self.layers[-1].fan_out if self.layers else 0


def _ceil_div(a, b):
    return -(-a // b)


def layer_shapes(model: BnnModel):
    """Yield (layer, in_shape, out_shape) walking the chain.

    Shapes are (positions..., channels): (h1, ch) in 1D and (h1, h2, ch)
    in 2D.  FC and OUTPUT flatten to (size,).  Raises ModelError when a
    layer cannot follow what precedes it.
    """
    if model.dim == 1:
        if len(model.input_dims) != 2:
            raise ModelError("1D models need input dims (h1, h2)")
        shape = (model.input_dims[0], model.input_dims[1])
    elif model.dim == 2:
        if len(model.input_dims) != 3:
            raise ModelError("2D models need input dims (h1, h2, h3)")
        shape = tuple(model.input_dims)
    else:
        raise ModelError(f"unsupported dim {model.dim}")

    for index, layer in enumerate(model.layers):
        where = f"layer {index} ({layer.kind_name})"
        if layer.kind == CONV1D:
            if model.dim != 1 or len(shape) != 2:
                raise ModelError(f"{where}: needs a 1D positional input")
            h1, _ = shape
            if layer.stride < 1 or not layer.kernel or layer.kernel[0] < 1:
                raise ModelError(f"{where}: bad kernel or stride")
            if layer.pad == PAD_SAME:
                out_h = _ceil_div(h1, layer.stride)
            else:
                span = h1 - layer.kernel[0]
                if span < 0:
                    raise ModelError(f"{where}: kernel longer than input")
                out_h = span // layer.stride + 1
            out = (out_h, layer.g)
        elif layer.kind == CONV2D:
            if model.dim != 2 or len(shape) != 3:
                raise ModelError(f"{where}: needs a 2D positional input")
            h1, h2, _ = shape
            if layer.stride < 1 or len(layer.kernel) != 2:
                raise ModelError(f"{where}: bad kernel or stride")
            o1, o2 = layer.kernel
            if layer.pad == PAD_SAME:
                out = (_ceil_div(h1, layer.stride), _ceil_div(h2, layer.stride), layer.g)
            else:
                s1, s2 = h1 - o1, h2 - o2
                if s1 < 0 or s2 < 0:
                    raise ModelError(f"{where}: kernel larger than input")
                out = (s1 // layer.stride + 1, s2 // layer.stride + 1, layer.g)
        elif layer.kind == BN_SIGN:
            prev = model.layers[index - 1] if index else None
            if prev is None or prev.kind not in (CONV1D, CONV2D, FC):
                raise ModelError(f"{where}: must follow a weighted layer")
            units = shape[-1] if len(shape) > 1 else shape[0]
            if len(layer.thresholds) != units:
                raise ModelError(
                    f"{where}: {len(layer.thresholds)} thresholds for {units} units"
                )
            out = shape
        elif layer.kind == MAXPOOL:
            if layer.pool < 1:
                raise ModelError(f"{where}: bad pool size")
            if len(shape) == 2:
                h1, ch = shape
                if h1 % layer.pool:
                    raise ModelError(f"{where}: {h1} positions not divisible by {layer.pool}")
                out = (h1 // layer.pool, ch)
            elif len(shape) == 3:
                h1, h2, ch = shape
                if h1 % layer.pool or h2 % layer.pool:
                    raise ModelError(f"{where}: {h1}x{h2} not divisible by {layer.pool}")
                out = (h1 // layer.pool, h2 // layer.pool, ch)
            else:
                raise ModelError(f"{where}: nothing left to pool")
        elif layer.kind in (FC, OUTPUT):
            size = 1
            for d in shape:
                size *= d
            if layer.fan_in != size:
                raise ModelError(f"{where}: fan_in {layer.fan_in} != input size {size}")
            if layer.fan_out < 1:
                raise ModelError(f"{where}: fan_out must be positive")
            out = (layer.fan_out,)
        else:
            raise ModelError(f"{where}: unknown kind {layer.kind}")
        yield layer, shape, out
        shape = out


def conv_fan_in(model: BnnModel, layer: LayerSpec, in_shape) -> int:
    if layer.kind == CONV1D:
        return layer.kernel[0] * in_shape[1]
    if layer.kind == CONV2D:
        return layer.kernel[0] * layer.kernel[1] * in_shape[2]
    return layer.fan_in


def validate_model(model: BnnModel):
    """Full structural check; raises ModelError with the failing layer."""
    if not model.layers:
        raise ModelError("model has no layers")
    if model.layers[-1].kind != OUTPUT:
        raise ModelError("last layer must be OUTPUT")
    for i, layer in enumerate(model.layers):
        if layer.kind == OUTPUT and i != len(model.layers) - 1:
            raise ModelError(f"layer {i}: OUTPUT must be last")
        if layer.kind in (CONV1D, CONV2D, FC):
            nxt = model.layers[i + 1] if i + 1 < len(model.layers) else None
            if nxt is None or nxt.kind != BN_SIGN:
                raise ModelError(
                    f"layer {i} ({layer.kind_name}): must be followed by BN_SIGN"
                )
    shapes = list(layer_shapes(model))
    for index, (layer, in_shape, _out) in enumerate(shapes):
        if layer.kind not in (CONV1D, CONV2D, FC, OUTPUT):
            continue
        where = f"layer {index} ({layer.kind_name})"
        fan_in = conv_fan_in(model, layer, in_shape)
        units = layer.units()
        if len(layer.weights) != units:
            raise ModelError(f"{where}: {len(layer.weights)} weight rows for {units} units")
        for u, row in enumerate(layer.weights):
            if len(row) != fan_in:
                raise ModelError(f"{where} unit {u}: row length {len(row)} != fan_in {fan_in}")
            live = 0
            for w in row:
                if w not in (-1, 0, 1):
                    raise ModelError(f"{where} unit {u}: weight {w!r} not ternary")
                live += w != 0
            if live == 0:
                raise ModelError(f"{where} unit {u}: all links pruned")
    return model


# -- binary IO ----------------------------------------------------------------


def _write_planes(buf, rows):
    signs = [1 if w > 0 else 0 for row in rows for w in row]
    masks = [1 if w != 0 else 0 for row in rows for w in row]
    buf.write(pack_bits(signs))
    buf.write(pack_bits(masks))


def _read_planes(data, offset, units, fan_in):
    total = units * fan_in
    nbytes = (total + 7) // 8
    if offset + 2 * nbytes > len(data):
        raise ModelError("file truncated")
    signs = unpack_bits(data[offset : offset + nbytes], total)
    offset += nbytes
    masks = unpack_bits(data[offset : offset + nbytes], total)
    offset += nbytes
    rows = []
    for u in range(units):
        row = []
        for i in range(fan_in):
            s, m = signs[u * fan_in + i], masks[u * fan_in + i]
            if m == 0:
                if s:
                    raise ModelError("sign bit set on a pruned link (non-canonical file)")
                row.append(0)
            else:
                row.append(1 if s else -1)
        rows.append(row)
    return rows, offset


def save_model(model: BnnModel) -> bytes:
    validate_model(model)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HB", VERSION, model.dim))
    for d in model.input_dims:
        buf.write(struct.pack("<I", d))
    buf.write(struct.pack("<H", len(model.layers)))
    for layer, in_shape, _out in layer_shapes(model):
        buf.write(struct.pack("<B", layer.kind))
        if layer.kind == CONV1D:
            buf.write(struct.pack("<IIII", layer.g, layer.kernel[0], layer.stride, layer.pad))
            _write_planes(buf, layer.weights)
        elif layer.kind == CONV2D:
            buf.write(
                struct.pack(
                    "<IIIII", layer.g, layer.kernel[0], layer.kernel[1], layer.stride, layer.pad
                )
            )
            _write_planes(buf, layer.weights)
        elif layer.kind in (FC, OUTPUT):
            buf.write(struct.pack("<II", layer.fan_in, layer.fan_out))
            _write_planes(buf, layer.weights)
        elif layer.kind == BN_SIGN:
            buf.write(struct.pack("<I", len(layer.thresholds)))
            for t in layer.thresholds:
                buf.write(struct.pack("<i", t))
        elif layer.kind == MAXPOOL:
            buf.write(struct.pack("<I", layer.pool))
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise ModelError("file truncated")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values if len(values) > 1 else values[0]


def load_model(data: bytes) -> BnnModel:
    if data[:4] != MAGIC:
        raise ModelError("not an FBNN file (bad magic)")
    reader = _Reader(data)
    reader.offset = 4
    version, dim = reader.take("<HB")
    if version != VERSION:
        raise ModelError(f"unsupported FBNN version {version}")
    if dim == 1:
        input_dims = (reader.take("<I"), reader.take("<I"))
    elif dim == 2:
        input_dims = (reader.take("<I"), reader.take("<I"), reader.take("<I"))
    else:
        raise ModelError(f"unsupported dim {dim}")
    layer_count = reader.take("<H")

    # Layers are parsed against the evolving shape chain so plane sizes are
    # known without storing fan-ins in the file.
    model = BnnModel(dim, input_dims, [])
    for _ in range(layer_count):
        kind = reader.take("<B")
        if kind == CONV1D:
            g, c, stride, pad = reader.take("<IIII")
            layer = LayerSpec(CONV1D, g=g, kernel=(c,), stride=stride, pad=pad)
        elif kind == CONV2D:
            g, o1, o2, stride, pad = reader.take("<IIIII")
            layer = LayerSpec(CONV2D, g=g, kernel=(o1, o2), stride=stride, pad=pad)
        elif kind in (FC, OUTPUT):
            fan_in, fan_out = reader.take("<II")
            layer = LayerSpec(kind, fan_in=fan_in, fan_out=fan_out)
        elif kind == BN_SIGN:
            units = reader.take("<I")
            layer = LayerSpec(BN_SIGN, thresholds=[reader.take("<i") for _ in range(units)])
        elif kind == MAXPOOL:
            layer = LayerSpec(MAXPOOL, pool=reader.take("<I"))
        else:
            raise ModelError(f"unknown layer kind {kind}")

        model.layers.append(layer)
        if kind in (CONV1D, CONV2D, FC, OUTPUT):
            # Shape-walk everything so far to size this layer's planes.
            *_, (this, in_shape, _out) = layer_shapes(model)
            fan_in = conv_fan_in(model, this, in_shape)
            units = this.units()
            rows, reader.offset = _read_planes(reader.data, reader.offset, units, fan_in)
            layer.weights = rows
    if reader.offset != len(data):
        raise ModelError(f"{len(data) - reader.offset} trailing bytes after the last layer")
    return validate_model(model)


# -- generation ----------------------------------------------------------------


def _random_row(rng, fan_in, sparsity):
    while True:
        row = [0 if rng.random() < sparsity else rng.choice((-1, 1)) for _ in range(fan_in)]
        if any(row):
            return row


def gen_random_model(dim, input_dims, layer_descs, sparsity=0.0, seed=0) -> BnnModel:
    """Build a random valid model from compact layer descriptions.

    ``layer_descs`` entries: ("conv", g, c) / ("conv", g, o1, o2),
    ("pool", p), ("fc", n), ("out", k).  BN_SIGN layers are inserted
    after every conv/fc with thresholds drawn from [0, fan_in + 1].
    """
    rng = random.Random(seed)
    model = BnnModel(dim, tuple(input_dims), [])

    def shape_now():
        if not model.layers:
            return tuple(model.input_dims)
        *_, (_layer, _in, out) = layer_shapes(model)
        return out

    for desc in layer_descs:
        tag = desc[0]
        in_shape = shape_now()
        if tag == "conv":
            if dim == 1:
                layer = LayerSpec(CONV1D, g=desc[1], kernel=(desc[2],))
            else:
                layer = LayerSpec(CONV2D, g=desc[1], kernel=(desc[2], desc[3]))
        elif tag == "pool":
            model.layers.append(LayerSpec(MAXPOOL, pool=desc[1]))
            continue
        elif tag in ("fc", "out"):
            size = 1
            for d in in_shape:
                size *= d
            layer = LayerSpec(FC if tag == "fc" else OUTPUT, fan_in=size, fan_out=desc[1])
        else:
            raise ModelError(f"unknown layer description {desc!r}")

        fan_in = conv_fan_in(model, layer, in_shape)
        layer.weights = [_random_row(rng, fan_in, sparsity) for _ in range(layer.units())]
        model.layers.append(layer)
        if layer.kind != OUTPUT:
            # Threshold range spans always-fires (0) to never-fires (live + 1),
            # counting only the unit's live links.
            thresholds = [
                rng.randint(0, sum(1 for w in row if w) + 1)
                for row in layer.weights
            ]
            model.layers.append(LayerSpec(BN_SIGN, thresholds=thresholds))
    return validate_model(model)
