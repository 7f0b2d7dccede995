"""Garbling core: free-XOR labels, half-gate AND tables, output decoding.

Wire labels are 128-bit integers.  A single global offset ``delta`` with
its low bit forced to 1 relates the two labels of every wire,
label(1) = label(0) xor delta, so the low bit of a label doubles as its
point-and-permute color.  XOR gates are free (label(0) of the output is
the xor of the input label(0)s).  Each AND gate emits exactly two
16-byte rows via the half-gate construction, keyed by a hash of one
input label and a per-gate tweak.

The hash is SHA-256 over label || tweak, truncated to 16 bytes.  AND
gates are numbered densely in gate order; gate j uses tweaks 2j and
2j+1, so both parties derive identical tweaks from the circuit alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from obnn.circuit import AND, CONST_0, CONST_1, INPUT_E, INPUT_G, XOR, Circuit

LABEL_BYTES = 16
AND_TABLE_BYTES = 2 * LABEL_BYTES


class GarbleError(ValueError):
    """Raised for malformed garbling inputs (seeds, table sizes, labels)."""


def _hash_label(label: int, tweak: int) -> int:
    data = label.to_bytes(LABEL_BYTES, "little") + tweak.to_bytes(8, "little")
    return int.from_bytes(hashlib.sha256(data).digest()[:LABEL_BYTES], "little")


def _expand_seed(seed: bytes, tag: bytes, index: int) -> int:
    data = seed + tag + index.to_bytes(8, "little")
    return int.from_bytes(hashlib.sha256(data).digest()[:LABEL_BYTES], "little")


@dataclass
class GarbledArtifacts:
    """Garbler-side result of one garbling pass.

    ``input_encodings`` maps every input and constant wire to its
    (label0, label1) pair; it never leaves the garbler.  ``and_tables``
    and ``decode_bits`` are safe to ship.
    """

    and_tables: bytes
    decode_bits: list
    input_encodings: dict


def garble(circuit: Circuit, seed: bytes) -> GarbledArtifacts:
    """Garble a circuit deterministically from a 32-byte seed."""
    if not isinstance(seed, (bytes, bytearray)) or len(seed) < 16:
        raise GarbleError("garbling seed must be at least 16 bytes")
    seed = bytes(seed)
    delta = _expand_seed(seed, b"delta", 0) | 1

    kinds = circuit._kinds
    in_a = circuit._a
    in_b = circuit._b
    label0 = [0] * len(kinds)
    tables = bytearray()
    encodings = {}
    and_index = 0

    for wire in range(len(kinds)):
        kind = kinds[wire]
        if kind == XOR:
            label0[wire] = label0[in_a[wire]] ^ label0[in_b[wire]]
        elif kind == AND:
            a0 = label0[in_a[wire]]
            b0 = label0[in_b[wire]]
            a1 = a0 ^ delta
            b1 = b0 ^ delta
            color_a = a0 & 1
            color_b = b0 & 1
            tweak_g = 2 * and_index
            tweak_e = tweak_g + 1
            hash_a0 = _hash_label(a0, tweak_g)
            table_g = hash_a0 ^ _hash_label(a1, tweak_g) ^ (delta if color_b else 0)
            wg0 = hash_a0 ^ (table_g if color_a else 0)
            hash_b0 = _hash_label(b0, tweak_e)
            table_e = hash_b0 ^ _hash_label(b1, tweak_e) ^ a0
            we0 = hash_b0 ^ ((table_e ^ a0) if color_b else 0)
            label0[wire] = wg0 ^ we0
            tables += table_g.to_bytes(LABEL_BYTES, "little")
            tables += table_e.to_bytes(LABEL_BYTES, "little")
            and_index += 1
        else:
            lab = _expand_seed(seed, b"wire", wire)
            label0[wire] = lab
            encodings[wire] = (lab, lab ^ delta)

    decode_bits = [label0[w] & 1 for w in circuit.outputs]
    return GarbledArtifacts(bytes(tables), decode_bits, encodings)


def encode_inputs(encodings: dict, wires, bits) -> list:
    """Pick active labels for known input bits (garbler side)."""
    if len(wires) != len(bits):
        raise GarbleError(f"expected {len(wires)} input bits, got {len(bits)}")
    return [encodings[w][bit & 1] for w, bit in zip(wires, bits)]


def constant_wires(circuit: Circuit):
    """Constant wires with their fixed values, in wire order."""
    kinds = circuit._kinds
    out = []
    for wire in range(len(kinds)):
        if kinds[wire] == CONST_0:
            out.append((wire, 0))
        elif kinds[wire] == CONST_1:
            out.append((wire, 1))
    return out


def evaluate(circuit: Circuit, and_tables: bytes, active_labels: dict) -> list:
    """Evaluator's pass: one label per wire, two hashes per AND gate.

    ``active_labels`` must hold the active label of every input and
    constant wire; missing entries or a truncated table are protocol
    errors surfaced as GarbleError.
    """
    kinds = circuit._kinds
    in_a = circuit._a
    in_b = circuit._b
    if len(and_tables) != circuit.nonxor * AND_TABLE_BYTES:
        raise GarbleError(
            f"AND table stream holds {len(and_tables)} bytes, "
            f"expected {circuit.nonxor * AND_TABLE_BYTES}"
        )
    labels = [0] * len(kinds)
    and_index = 0
    for wire in range(len(kinds)):
        kind = kinds[wire]
        if kind == XOR:
            labels[wire] = labels[in_a[wire]] ^ labels[in_b[wire]]
        elif kind == AND:
            a = labels[in_a[wire]]
            b = labels[in_b[wire]]
            off = and_index * AND_TABLE_BYTES
            table_g = int.from_bytes(and_tables[off : off + LABEL_BYTES], "little")
            table_e = int.from_bytes(
                and_tables[off + LABEL_BYTES : off + AND_TABLE_BYTES], "little"
            )
            tweak_g = 2 * and_index
            wg = _hash_label(a, tweak_g) ^ (table_g if a & 1 else 0)
            we = _hash_label(b, tweak_g + 1) ^ ((table_e ^ a) if b & 1 else 0)
            labels[wire] = wg ^ we
            and_index += 1
        else:
            try:
                labels[wire] = active_labels[wire]
            except KeyError:
                raise GarbleError(f"no active label for input wire {wire}") from None
    return [labels[w] for w in circuit.outputs]


def decode(output_labels, decode_bits) -> list:
    """Map active output labels to plain bits via the decode table."""
    if len(output_labels) != len(decode_bits):
        raise GarbleError("decode table length does not match outputs")
    return [(label & 1) ^ (bit & 1) for label, bit in zip(output_labels, decode_bits)]
