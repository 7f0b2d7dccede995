"""Reference interpreter for FBNN files.

Runs a container model on a +-1 input vector and returns the integer
class scores, entirely in plain Python and entirely from this package's
own reader — no code shared with the inference engine.  Exported files
are cross-checked by comparing this interpreter against the engine on
the same inputs.

Semantics:

  * Inputs and activations are +-1; the input vector is the raster
    flattening of (positions..., channels), position-major/channel-last.
  * A weighted layer computes, per unit instance, the count c1 of live
    links whose input sign matches the weight sign.  Padding 'same'
    anchors the window at tap (k-1)//2 and simply drops out-of-range
    taps, so border units see fewer live links.
  * BN_SIGN turns counts into activations: +1 iff c1 >= threshold.
  * MAXPOOL takes the max over non-overlapping windows per channel.
  * OUTPUT emits raw match counts, one integer score per class.
"""

from __future__ import annotations

from . import format as fmt
from .format import ExportError


def _window_offsets(kernel: int, pad: int) -> list:
    anchor = (kernel - 1) // 2 if pad == fmt.PAD_SAME else 0
    return [k - anchor for k in range(kernel)]


def _match_count(row, taps) -> int:
    # taps pairs each in-window input value with its link index; links
    # whose tap fell outside the input are simply absent.
    c1 = 0
    for value, link in taps:
        w = row[link]
        if w and (w > 0) == (value > 0):
            c1 += 1
    return c1


def _conv1d(layer, state, h1: int):
    offsets = _window_offsets(layer.kernel[0], layer.pad)
    in_ch = len(state[0])
    out_h = -(-h1 // layer.stride) if layer.pad == fmt.PAD_SAME else (
        (h1 - layer.kernel[0]) // layer.stride + 1
    )
    result = []
    for p in range(out_h):
        base = p * layer.stride
        taps = []
        for k, off in enumerate(offsets):
            q = base + off
            if 0 <= q < h1:
                for ch in range(in_ch):
                    taps.append((state[q][ch], k * in_ch + ch))
        result.append([_match_count(layer.trits[u], taps) for u in range(layer.g)])
    return result


def _conv2d(layer, state, h1: int, h2: int):
    k1, k2 = layer.kernel
    off1 = _window_offsets(k1, layer.pad)
    off2 = _window_offsets(k2, layer.pad)
    in_ch = len(state[0][0])
    if layer.pad == fmt.PAD_SAME:
        out1, out2 = -(-h1 // layer.stride), -(-h2 // layer.stride)
    else:
        out1 = (h1 - k1) // layer.stride + 1
        out2 = (h2 - k2) // layer.stride + 1
    result = []
    for p1 in range(out1):
        row_out = []
        b1 = p1 * layer.stride
        for p2 in range(out2):
            b2 = p2 * layer.stride
            taps = []
            for a, o1 in enumerate(off1):
                q1 = b1 + o1
                if not 0 <= q1 < h1:
                    continue
                for b, o2 in enumerate(off2):
                    q2 = b2 + o2
                    if not 0 <= q2 < h2:
                        continue
                    for ch in range(in_ch):
                        taps.append((state[q1][q2][ch], (a * k2 + b) * in_ch + ch))
            row_out.append([_match_count(layer.trits[u], taps) for u in range(layer.g)])
        result.append(row_out)
    return result


def _flatten(state, depth: int) -> list:
    # Raster order: outer positions first, channels last.
    if depth == 1:
        return list(state)
    return [v for part in state for v in _flatten(part, depth - 1)]


def cross_oracle_infer(data: bytes, pm_input) -> list:
    """Run the model in `data` (FBNN bytes) on a +-1 vector; return scores."""
    model = fmt.read_model(data)
    expected = 1
    for d in model.input_dims:
        expected *= d
    values = list(pm_input)
    if len(values) != expected:
        raise ExportError(f"input has {len(values)} values, model wants {expected}")
    for v in values:
        if v not in (-1, 1):
            raise ExportError(f"input value {v!r} is not +-1")

    if model.dim == 1:
        h1, ch = model.input_dims
        state = [[values[p * ch + c] for c in range(ch)] for p in range(h1)]
        depth = 2
    else:
        h1, h2, ch = model.input_dims
        state = [
            [[values[(p1 * h2 + p2) * ch + c] for c in range(ch)] for p2 in range(h2)]
            for p1 in range(h1)
        ]
        depth = 3

    scores = None
    for layer in model.layers:
        if layer.kind == fmt.CONV1D:
            state = _conv1d(layer, state, len(state))
        elif layer.kind == fmt.CONV2D:
            state = _conv2d(layer, state, len(state), len(state[0]))
        elif layer.kind == fmt.BN_SIGN:
            # Counts -> activations, wherever the channel axis sits.
            if depth == 1:
                state = [1 if c >= t else -1 for c, t in zip(state, layer.thresholds)]
            elif depth == 2:
                state = [
                    [1 if c >= t else -1 for c, t in zip(pos, layer.thresholds)]
                    for pos in state
                ]
            else:
                state = [
                    [
                        [1 if c >= t else -1 for c, t in zip(pos, layer.thresholds)]
                        for pos in row
                    ]
                    for row in state
                ]
        elif layer.kind == fmt.MAXPOOL:
            p = layer.pool
            if depth == 2:
                state = [
                    [max(state[q][c] for q in range(b, b + p)) for c in range(len(state[0]))]
                    for b in range(0, len(state), p)
                ]
            else:
                ch_n = len(state[0][0])
                state = [
                    [
                        [
                            max(
                                state[q1][q2][c]
                                for q1 in range(b1, b1 + p)
                                for q2 in range(b2, b2 + p)
                            )
                            for c in range(ch_n)
                        ]
                        for b2 in range(0, len(state[0]), p)
                    ]
                    for b1 in range(0, len(state), p)
                ]
        elif layer.kind in (fmt.FC, fmt.OUTPUT):
            flat = _flatten(state, depth)
            taps = list(zip(flat, range(len(flat))))
            counts = [_match_count(row, taps) for row in layer.trits]
            if layer.kind == fmt.OUTPUT:
                scores = counts
            else:
                state = counts
                depth = 1
    return scores
