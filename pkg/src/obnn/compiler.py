"""Compile ternary binarized models into boolean circuits.

Activations are +-1 in the integer world and single bits in the circuit
(+1 <-> 1).  A weighted unit's pre-activation is equivalent to counting
sign matches between activations and weights over the unit's live links:
each match is one free XNOR, the count c1 is an oblivious popcount, and
batch-norm plus sign activation folds into one integer threshold t per
unit, firing exactly when c1 >= t.  Pruned links (weight 0) vanish from
the circuit entirely; convolution weights are garbler inputs shared by
every output position of their filter.

The garbler's private input vector is the sign bit (1 for +1) of every
live weight, unit-major within each weighted layer, layers in model
order: ``garbler_input_bits`` produces it and ``compile_model`` allocates
wires in the same order.

Thresholds, like the topology, are public: they become comparator
constants, not inputs.  Only weight signs and activations are secret.
"""

from __future__ import annotations

import math

from obnn.adders import build_popcount
from obnn.circuit import EVALUATOR, GARBLER, Circuit, NumberBundle, bundle_value
from obnn.model import (
    BN_SIGN,
    CONV1D,
    CONV2D,
    FC,
    MAXPOOL,
    OUTPUT,
    PAD_SAME,
    BnnModel,
    ModelError,
    conv_fan_in,
    layer_shapes,
    validate_model,
)


class CompileError(ValueError):
    """Model cannot be lowered to a circuit."""


def quantize_threshold(gamma: float, beta: float, lv: int) -> int:
    """Fold batch-norm (scale gamma > 0, shift beta) into a match-count
    threshold: the unit fires iff c1 >= t.

    The real pre-activation is gamma*(2*c1 - lv) + beta with sign(0)
    counting as fire, which rearranges to c1 >= (gamma*lv - beta) /
    (2*gamma); t is that bound's ceiling clamped to [0, lv+1] (0 always
    fires, lv+1 never fires).
    """
    if gamma <= 0:
        raise CompileError(f"batch-norm scale must be positive, got {gamma}")
    if lv < 0:
        raise CompileError(f"live link count must be non-negative, got {lv}")
    t = math.ceil((gamma * lv - beta) / (2.0 * gamma))
    return max(0, min(lv + 1, t))


def xnor_vdp(circuit: Circuit, act_wires, weight_wires) -> list:
    """Per-link sign agreement: one free XNOR per live link."""
    if len(act_wires) != len(weight_wires):
        raise CompileError("activation/weight wire count mismatch")
    one = circuit.constant(1)
    return [
        circuit.gate_xor(circuit.gate_xor(a, w), one)
        for a, w in zip(act_wires, weight_wires)
    ]


def compare_ge_const(circuit: Circuit, bundle: NumberBundle, threshold: int) -> int:
    """Wire that is 1 iff the bundle's value >= the public threshold.

    A borrow chain of value - threshold, one AND per bit at most; the
    result is the negated final borrow.  Degenerate thresholds fold to
    constants: 0 always holds, 2^width never does.
    """
    width = bundle.width
    if not 0 <= threshold <= (1 << width):
        raise CompileError(f"threshold {threshold} outside [0, 2^{width}]")
    if threshold == 0:
        return circuit.constant(1)
    if threshold == (1 << width):
        return circuit.constant(0)
    borrow = circuit.constant(0)
    for i in range(width):
        x = bundle.bits[i]
        if (threshold >> i) & 1:
            # borrow' = not x or borrow
            borrow = circuit.gate_not(circuit.gate_and(x, circuit.gate_not(borrow)))
        else:
            # borrow' = borrow and not x
            borrow = circuit.gate_and(borrow, circuit.gate_not(x))
    return circuit.gate_not(borrow)


def _window_offsets_1d(kernel, pad):
    anchor = (kernel - 1) // 2 if pad == PAD_SAME else 0
    return [k - anchor for k in range(kernel)]


def _unit_bit(circuit, obc_kind, pairs, threshold):
    """Activation bit for one unit instance: XNORs, popcount, comparator."""
    lv = len(pairs)
    if threshold <= 0:
        return circuit.constant(1)
    if threshold > lv:
        return circuit.constant(0)
    matches = xnor_vdp(circuit, [a for a, _ in pairs], [w for _, w in pairs])
    count = build_popcount(circuit, matches, obc_kind)
    return compare_ge_const(circuit, count, threshold)


class _LayerRecord:
    def __init__(self, index, kind_name):
        self.index = index
        self.kind = kind_name
        self.nonxor = 0
        self.xor = 0
        self.wires = []


def compile_model(model: BnnModel, obc_kind):
    """Lower a model to a circuit; returns (circuit, io_map).

    The io_map records per-layer gate spend and the wires carrying each
    layer's result, so verification can localize a divergence without
    re-deriving the layout.  Fused weighted+BN_SIGN stages appear as one
    entry under the weighted layer's index.
    """
    validate_model(model)
    circuit = Circuit()
    inputs = [circuit.add_input(EVALUATOR) for _ in range(model.input_size)]

    # state: positional layers keep [position][channel] wire grids
    # (position raster order), FC keeps a flat list.
    if model.dim == 1:
        h1, h2 = model.input_dims
        state = [[inputs[p * h2 + ch] for ch in range(h2)] for p in range(h1)]
        spatial = (h1,)
    else:
        h1, h2, h3 = model.input_dims
        state = [
            [inputs[(i * h2 + j) * h3 + ch] for ch in range(h3)]
            for i in range(h1)
            for j in range(h2)
        ]
        spatial = (h1, h2)

    records = []
    score_bundles = []
    shapes = list(layer_shapes(model))
    pending = None  # weighted layer waiting for its BN_SIGN thresholds

    for index, (layer, in_shape, out_shape) in enumerate(shapes):
        record = _LayerRecord(index, layer.kind_name)
        nonxor0, xor0 = circuit.nonxor, circuit.xor

        if layer.kind in (CONV1D, CONV2D, FC):
            weight_wires = [
                [
                    circuit.add_input(GARBLER) if w != 0 else None
                    for w in row
                ]
                for row in layer.weights
            ]
            pending = (layer, in_shape, out_shape, weight_wires, record)
            records.append(record)
            continue

        if layer.kind == BN_SIGN:
            if pending is None:
                raise CompileError("BN_SIGN without a preceding weighted layer")
            wlayer, w_in, w_out, weight_wires, wrecord = pending
            pending = None
            state, spatial = _compile_weighted(
                circuit, obc_kind, model, wlayer, w_in, w_out,
                weight_wires, layer.thresholds, state, spatial,
            )
            wrecord.kind = f"{wlayer.kind_name}+BN_SIGN"
            wrecord.wires = [w for pos in state for w in pos]
            wrecord.nonxor = circuit.nonxor - nonxor0
            wrecord.xor = circuit.xor - xor0
            record.kind = "BN_SIGN"
            records.append(record)
            continue

        if layer.kind == MAXPOOL:
            state, spatial = _compile_maxpool(circuit, layer, state, spatial)
            record.wires = [w for pos in state for w in pos]
        elif layer.kind == OUTPUT:
            flat = [w for pos in state for w in pos]
            weight_wires = [
                [circuit.add_input(GARBLER) if w != 0 else None for w in row]
                for row in layer.weights
            ]
            for unit, row in enumerate(layer.weights):
                pairs = [
                    (flat[i], weight_wires[unit][i])
                    for i, w in enumerate(row)
                    if w != 0
                ]
                matches = xnor_vdp(
                    circuit, [a for a, _ in pairs], [w for _, w in pairs]
                )
                bundle = build_popcount(circuit, matches, obc_kind)
                score_bundles.append(bundle)
                record.wires.append(list(bundle.bits))

        record.nonxor = circuit.nonxor - nonxor0
        record.xor = circuit.xor - xor0
        records.append(record)

    for bundle in score_bundles:
        for bit in bundle.bits:
            circuit.mark_output(bit)

    io_map = {
        "obc": str(getattr(obc_kind, "value", obc_kind)),
        "evaluator_inputs": len(circuit.inputs_evaluator),
        "garbler_inputs": len(circuit.inputs_garbler),
        "outputs": len(circuit.outputs),
        "score_widths": [b.width for b in score_bundles],
        "total_nonxor": circuit.nonxor,
        "total_xor": circuit.xor,
        "layers": [
            {
                "index": r.index,
                "kind": r.kind,
                "nonxor": r.nonxor,
                "xor": r.xor,
                "wires": r.wires,
            }
            for r in records
        ],
    }
    return circuit, io_map


def _compile_weighted(circuit, obc_kind, model, layer, in_shape, out_shape,
                      weight_wires, thresholds, state, spatial):
    if layer.kind == FC:
        flat = [w for pos in state for w in pos]
        out = []
        for unit, row in enumerate(layer.weights):
            pairs = [
                (flat[i], weight_wires[unit][i]) for i, w in enumerate(row) if w != 0
            ]
            out.append(_unit_bit(circuit, obc_kind, pairs, thresholds[unit]))
        return [out], ()

    if layer.kind == CONV1D:
        h1, in_ch = in_shape
        out_h = out_shape[0]
        offsets = _window_offsets_1d(layer.kernel[0], layer.pad)
        new_state = []
        for p in range(out_h):
            base = p * layer.stride
            row_bits = []
            for unit in range(layer.g):
                row = layer.weights[unit]
                pairs = []
                for k, off in enumerate(offsets):
                    q = base + off
                    if not 0 <= q < h1:
                        continue
                    for ch in range(in_ch):
                        i = k * in_ch + ch
                        if row[i] != 0:
                            pairs.append((state[q][ch], weight_wires[unit][i]))
                row_bits.append(_unit_bit(circuit, obc_kind, pairs, thresholds[unit]))
            new_state.append(row_bits)
        return new_state, (out_h,)

    # CONV2D
    h1, h2, in_ch = in_shape
    out_h1, out_h2 = out_shape[0], out_shape[1]
    o1, o2 = layer.kernel
    off1 = _window_offsets_1d(o1, layer.pad)
    off2 = _window_offsets_1d(o2, layer.pad)
    new_state = []
    for p1 in range(out_h1):
        for p2 in range(out_h2):
            b1, b2 = p1 * layer.stride, p2 * layer.stride
            row_bits = []
            for unit in range(layer.g):
                row = layer.weights[unit]
                pairs = []
                for k1, d1 in enumerate(off1):
                    q1 = b1 + d1
                    if not 0 <= q1 < h1:
                        continue
                    for k2, d2 in enumerate(off2):
                        q2 = b2 + d2
                        if not 0 <= q2 < h2:
                            continue
                        for ch in range(in_ch):
                            i = (k1 * o2 + k2) * in_ch + ch
                            if row[i] != 0:
                                pairs.append(
                                    (state[q1 * h2 + q2][ch], weight_wires[unit][i])
                                )
                row_bits.append(_unit_bit(circuit, obc_kind, pairs, thresholds[unit]))
            new_state.append(row_bits)
    return new_state, (out_h1, out_h2)


def _compile_maxpool(circuit, layer, state, spatial):
    p = layer.pool
    channels = len(state[0])
    if len(spatial) == 1:
        h1 = spatial[0]
        new_state = []
        for base in range(0, h1, p):
            row = []
            for ch in range(channels):
                acc = state[base][ch]
                for off in range(1, p):
                    acc = circuit.gate_or(acc, state[base + off][ch])
                row.append(acc)
            new_state.append(row)
        return new_state, (h1 // p,)

    h1, h2 = spatial
    new_state = []
    for i in range(0, h1, p):
        for j in range(0, h2, p):
            row = []
            for ch in range(channels):
                acc = None
                for di in range(p):
                    for dj in range(p):
                        w = state[(i + di) * h2 + (j + dj)][ch]
                        acc = w if acc is None else circuit.gate_or(acc, w)
                row.append(acc)
            new_state.append(row)
    return new_state, (h1 // p, h2 // p)


def garbler_input_bits(model: BnnModel) -> list:
    """The garbler's private input: sign bits of live weights in
    compilation order (layers in model order, unit-major, row order)."""
    bits = []
    for layer in model.layers:
        if layer.kind in (CONV1D, CONV2D, FC, OUTPUT):
            for row in layer.weights:
                bits.extend(1 if w > 0 else 0 for w in row if w != 0)
    return bits


def encode_activations(pm_values) -> list:
    """Map +-1 activations to circuit bits (+1 -> 1)."""
    bits = []
    for v in pm_values:
        if v == 1:
            bits.append(1)
        elif v == -1:
            bits.append(0)
        else:
            raise CompileError(f"activation {v!r} is not +-1")
    return bits


# -- integer-domain oracle ----------------------------------------------------


def plain_infer(model: BnnModel, pm_input) -> list:
    """Reference inference over +-1 integers; returns per-class match counts.

    This is the semantics the compiled circuit must reproduce bit for
    bit; the garbled path is compared against it in tests and `verify`.
    """
    return plain_infer_trace(model, pm_input)[-1]


def plain_infer_trace(model: BnnModel, pm_input) -> list:
    """Like plain_infer but returns every layer's result (flattened, in
    raster order) so a divergence can be pinned to a layer and unit."""
    validate_model(model)
    if len(pm_input) != model.input_size:
        raise ModelError(
            f"input has {len(pm_input)} values, model wants {model.input_size}"
        )
    for v in pm_input:
        if v not in (-1, 1):
            raise ModelError(f"input value {v!r} is not +-1")

    if model.dim == 1:
        h1, h2 = model.input_dims
        state = [[pm_input[p * h2 + ch] for ch in range(h2)] for p in range(h1)]
        spatial = (h1,)
    else:
        h1, h2, h3 = model.input_dims
        state = [
            [pm_input[(i * h2 + j) * h3 + ch] for ch in range(h3)]
            for i in range(h1)
            for j in range(h2)
        ]
        spatial = (h1, h2)

    trace = []
    pending = None
    for layer, in_shape, out_shape in layer_shapes(model):
        if layer.kind in (CONV1D, CONV2D, FC):
            pending = (layer, in_shape, out_shape)
            continue
        if layer.kind == BN_SIGN:
            wlayer, w_in, w_out = pending
            pending = None
            state, spatial = _plain_weighted(
                model, wlayer, w_in, w_out, layer.thresholds, state, spatial
            )
        elif layer.kind == MAXPOOL:
            state, spatial = _plain_maxpool(layer, state, spatial)
        elif layer.kind == OUTPUT:
            flat = [v for pos in state for v in pos]
            scores = []
            for row in layer.weights:
                c1 = 0
                for i, w in enumerate(row):
                    if w != 0 and flat[i] == w:
                        c1 += 1
                scores.append(c1)
            trace.append(scores)
            return trace
        trace.append([v for pos in state for v in pos])
    raise ModelError("model ended without an OUTPUT layer")


def _plain_weighted(model, layer, in_shape, out_shape, thresholds, state, spatial):
    def fire(c1, t):
        return 1 if c1 >= t else -1

    if layer.kind == FC:
        flat = [v for pos in state for v in pos]
        out = []
        for unit, row in enumerate(layer.weights):
            c1 = sum(1 for i, w in enumerate(row) if w != 0 and flat[i] == w)
            out.append(fire(c1, thresholds[unit]))
        return [out], ()

    if layer.kind == CONV1D:
        h1, in_ch = in_shape
        offsets = _window_offsets_1d(layer.kernel[0], layer.pad)
        new_state = []
        for p in range(out_shape[0]):
            base = p * layer.stride
            row_vals = []
            for unit in range(layer.g):
                row = layer.weights[unit]
                c1 = 0
                for k, off in enumerate(offsets):
                    q = base + off
                    if not 0 <= q < h1:
                        continue
                    for ch in range(in_ch):
                        w = row[k * in_ch + ch]
                        if w != 0 and state[q][ch] == w:
                            c1 += 1
                row_vals.append(fire(c1, thresholds[unit]))
            new_state.append(row_vals)
        return new_state, (out_shape[0],)

    h1, h2, in_ch = in_shape
    o1, o2 = layer.kernel
    off1 = _window_offsets_1d(o1, layer.pad)
    off2 = _window_offsets_1d(o2, layer.pad)
    new_state = []
    for p1 in range(out_shape[0]):
        for p2 in range(out_shape[1]):
            b1, b2 = p1 * layer.stride, p2 * layer.stride
            row_vals = []
            for unit in range(layer.g):
                row = layer.weights[unit]
                c1 = 0
                for k1, d1 in enumerate(off1):
                    q1 = b1 + d1
                    if not 0 <= q1 < h1:
                        continue
                    for k2, d2 in enumerate(off2):
                        q2 = b2 + d2
                        if not 0 <= q2 < h2:
                            continue
                        for ch in range(in_ch):
                            w = row[(k1 * o2 + k2) * in_ch + ch]
                            if w != 0 and state[q1 * h2 + q2][ch] == w:
                                c1 += 1
                row_vals.append(fire(c1, thresholds[unit]))
            new_state.append(row_vals)
    return new_state, (out_shape[0], out_shape[1])


def _plain_maxpool(layer, state, spatial):
    p = layer.pool
    channels = len(state[0])
    if len(spatial) == 1:
        h1 = spatial[0]
        new_state = [
            [max(state[base + off][ch] for off in range(p)) for ch in range(channels)]
            for base in range(0, h1, p)
        ]
        return new_state, (h1 // p,)
    h1, h2 = spatial
    new_state = []
    for i in range(0, h1, p):
        for j in range(0, h2, p):
            new_state.append(
                [
                    max(
                        state[(i + di) * h2 + (j + dj)][ch]
                        for di in range(p)
                        for dj in range(p)
                    )
                    for ch in range(channels)
                ]
            )
    return new_state, (h1 // p, h2 // p)


def scores_from_output_bits(io_map, bits) -> list:
    """Slice a circuit's output bits back into per-class counts."""
    scores = []
    offset = 0
    for width in io_map["score_widths"]:
        scores.append(bundle_value(bits[offset : offset + width]))
        offset += width
    return scores


def class_fan_ins(model: BnnModel) -> list:
    """Live link count per output class (public topology)."""
    out = model.layers[-1]
    return [sum(1 for w in row if w != 0) for row in out.weights]


def argmax_score(scores, fan_ins) -> int:
    """Deterministic argmax over the linear scores 2*c1 - Lv (first wins)."""
    best, best_val = 0, None
    for i, (c1, lv) in enumerate(zip(scores, fan_ins)):
        val = 2 * c1 - lv
        if best_val is None or val > best_val:
            best, best_val = i, val
    return best
