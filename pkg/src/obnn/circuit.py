"""Boolean circuit intermediate representation.

A circuit is an append-only DAG over densely numbered wires.  Wire i is
driven by gate i, so gates and wires share one index space and topological
order is the construction order.  Six gate kinds exist: the two input
kinds (one per party), the two constants, XOR and AND.

Under free-XOR garbling only AND gates cost communication, so the builder
keeps exact running counters and applies local simplifications whenever a
gate is requested whose value is already available: XOR or AND with a
constant, and XOR or AND of a wire with itself.  NOT is not a stored kind;
it is lowered to XOR with the shared CONST_1 wire.  OR is lowered through
De Morgan to a single AND.  Constants are deduplicated so each circuit has
at most one CONST_0 and one CONST_1 wire.

The text serialization (``CIRC v1``) is line oriented and byte stable:

    CIRC v1 <n_garbler_inputs> <n_evaluator_inputs> <n_outputs>
    <wire> <KIND> [<in0> <in1>]
    ...
    OUT <wire> <wire> ...
"""

from __future__ import annotations

import hashlib
from array import array
from dataclasses import dataclass

GARBLER = 0
EVALUATOR = 1

INPUT_G = 0
INPUT_E = 1
CONST_0 = 2
CONST_1 = 3
XOR = 4
AND = 5

KIND_NAMES = ("INPUT_G", "INPUT_E", "CONST_0", "CONST_1", "XOR", "AND")
_KIND_CODES = {name: code for code, name in enumerate(KIND_NAMES)}


class CircuitError(ValueError):
    """Raised for malformed circuit construction or serialization input."""


@dataclass
class Gate:
    """Read-only view of one gate, for introspection and tests."""

    output: int
    kind: str
    inputs: tuple


@dataclass
class NumberBundle:
    """An unsigned integer as a list of wires, least significant first."""

    bits: list

    @property
    def width(self) -> int:
        return len(self.bits)


def bundle_value(bits) -> int:
    """Assemble plain output bits (LSB first) into an int."""
    value = 0
    for i, bit in enumerate(bits):
        value |= (bit & 1) << i
    return value


class Circuit:
    """Append-only boolean circuit with gate counting and plain evaluation."""

    def __init__(self):
        self._kinds = bytearray()
        self._a = array("i")
        self._b = array("i")
        self.inputs_garbler = []
        self.inputs_evaluator = []
        self.outputs = []
        self.nonxor = 0
        self.xor = 0
        self._const_wires = {0: -1, 1: -1}
        self._hash = None

    # -- construction -----------------------------------------------------

    def _append(self, kind, a=-1, b=-1) -> int:
        wire = len(self._kinds)
        self._kinds.append(kind)
        self._a.append(a)
        self._b.append(b)
        self._hash = None
        return wire

    def _check_wire(self, wire):
        if not 0 <= wire < len(self._kinds):
            raise CircuitError(f"wire {wire} is not part of this circuit")

    def add_input(self, owner) -> int:
        """Allocate a fresh input wire for the given party."""
        if owner == GARBLER:
            wire = self._append(INPUT_G, len(self.inputs_garbler))
            self.inputs_garbler.append(wire)
        elif owner == EVALUATOR:
            wire = self._append(INPUT_E, len(self.inputs_evaluator))
            self.inputs_evaluator.append(wire)
        else:
            raise CircuitError(f"unknown input owner {owner!r}")
        return wire

    def constant(self, bit) -> int:
        """Return the shared constant wire for bit, allocating it once."""
        bit = int(bit)
        if bit not in (0, 1):
            raise CircuitError(f"constant must be 0 or 1, got {bit!r}")
        wire = self._const_wires[bit]
        if wire < 0:
            wire = self._append(CONST_0 if bit == 0 else CONST_1)
            self._const_wires[bit] = wire
        return wire

    def _const_value(self, wire):
        kind = self._kinds[wire]
        if kind == CONST_0:
            return 0
        if kind == CONST_1:
            return 1
        return None

    def gate_xor(self, a, b) -> int:
        self._check_wire(a)
        self._check_wire(b)
        if a == b:
            return self.constant(0)
        ca = self._const_value(a)
        cb = self._const_value(b)
        if ca is not None and cb is not None:
            return self.constant(ca ^ cb)
        if ca == 0:
            return b
        if cb == 0:
            return a
        # XOR with CONST_1 stays as a stored gate: that is how NOT exists.
        self.xor += 1
        return self._append(XOR, a, b)

    def gate_and(self, a, b) -> int:
        self._check_wire(a)
        self._check_wire(b)
        if a == b:
            return a
        ca = self._const_value(a)
        cb = self._const_value(b)
        if ca == 0 or cb == 0:
            return self.constant(0)
        if ca == 1:
            return b
        if cb == 1:
            return a
        self.nonxor += 1
        return self._append(AND, a, b)

    def gate_not(self, a) -> int:
        return self.gate_xor(a, self.constant(1))

    def gate_or(self, a, b) -> int:
        return self.gate_not(self.gate_and(self.gate_not(a), self.gate_not(b)))

    def mark_output(self, wire):
        self._check_wire(wire)
        self.outputs.append(wire)
        self._hash = None

    # -- inspection --------------------------------------------------------

    @property
    def wire_count(self) -> int:
        return len(self._kinds)

    def gate(self, wire) -> Gate:
        self._check_wire(wire)
        kind = self._kinds[wire]
        if kind in (XOR, AND):
            ins = (self._a[wire], self._b[wire])
        else:
            ins = ()
        return Gate(wire, KIND_NAMES[kind], ins)

    def gates(self):
        for wire in range(len(self._kinds)):
            yield self.gate(wire)

    def and_wires(self):
        """Wires driven by AND gates, in gate order."""
        kinds = self._kinds
        return [w for w in range(len(kinds)) if kinds[w] == AND]

    def count_gates(self) -> dict:
        return {
            "nonxor": self.nonxor,
            "xor": self.xor,
            "inputs": len(self.inputs_garbler) + len(self.inputs_evaluator),
            "outputs": len(self.outputs),
        }

    # -- evaluation ----------------------------------------------------------

    def eval_plain(self, garbler_bits, evaluator_bits) -> list:
        """Evaluate in the clear; used as the correctness oracle everywhere."""
        if len(garbler_bits) != len(self.inputs_garbler):
            raise CircuitError(
                f"expected {len(self.inputs_garbler)} garbler bits, "
                f"got {len(garbler_bits)}"
            )
        if len(evaluator_bits) != len(self.inputs_evaluator):
            raise CircuitError(
                f"expected {len(self.inputs_evaluator)} evaluator bits, "
                f"got {len(evaluator_bits)}"
            )
        return _kernel.run(
            self._kinds,
            self._a,
            self._b,
            bytes(bytearray(garbler_bits)),
            bytes(bytearray(evaluator_bits)),
            array("i", self.outputs),
        )

    # -- serialization -------------------------------------------------------

    def serialize(self) -> str:
        lines = [
            "CIRC v1 %d %d %d"
            % (len(self.inputs_garbler), len(self.inputs_evaluator), len(self.outputs))
        ]
        kinds = self._kinds
        a = self._a
        b = self._b
        for wire in range(len(kinds)):
            kind = kinds[wire]
            if kind in (XOR, AND):
                lines.append("%d %s %d %d" % (wire, KIND_NAMES[kind], a[wire], b[wire]))
            else:
                lines.append("%d %s" % (wire, KIND_NAMES[kind]))
        lines.append("OUT " + " ".join(str(w) for w in self.outputs))
        return "\n".join(lines) + "\n"

    def sha256(self) -> bytes:
        """Digest of the text serialization; both parties compare this."""
        if self._hash is None:
            self._hash = hashlib.sha256(self.serialize().encode()).digest()
        return self._hash


def eval_backend() -> str:
    """Name of the active plaintext evaluation kernel."""
    return _kernel.BACKEND


def parse_circuit(text: str) -> Circuit:
    """Parse the CIRC v1 text format back into a Circuit.

    Gates are replayed verbatim (no simplification) so that
    parse(serialize(c)) reproduces c byte for byte.
    """
    lines = text.splitlines()
    if not lines:
        raise CircuitError("empty circuit text")
    header = lines[0].split()
    if len(header) != 5 or header[0] != "CIRC" or header[1] != "v1":
        raise CircuitError(f"bad circuit header: {lines[0]!r}")
    try:
        n_g, n_e, n_out = (int(x) for x in header[2:])
    except ValueError:
        raise CircuitError(f"bad circuit header: {lines[0]!r}") from None

    circuit = Circuit()
    out_line = None
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split()
        if parts[0] == "OUT":
            if out_line is not None:
                raise CircuitError("multiple OUT lines")
            out_line = parts[1:]
            continue
        if out_line is not None:
            raise CircuitError("gate line after OUT line")
        try:
            wire = int(parts[0])
        except ValueError:
            raise CircuitError(f"bad gate line: {line!r}") from None
        if wire != circuit.wire_count:
            raise CircuitError(f"non-contiguous wire id {wire} in {line!r}")
        kind = _KIND_CODES.get(parts[1])
        if kind is None:
            raise CircuitError(f"unknown gate kind in {line!r}")
        if kind in (XOR, AND):
            if len(parts) != 4:
                raise CircuitError(f"bad gate line: {line!r}")
            a, b = int(parts[2]), int(parts[3])
            if not (0 <= a < wire and 0 <= b < wire):
                raise CircuitError(f"gate {wire} reads a later or missing wire")
            circuit._append(kind, a, b)
            if kind == XOR:
                circuit.xor += 1
            else:
                circuit.nonxor += 1
        else:
            if len(parts) != 2:
                raise CircuitError(f"bad gate line: {line!r}")
            if kind == INPUT_G:
                circuit._append(INPUT_G, len(circuit.inputs_garbler))
                circuit.inputs_garbler.append(wire)
            elif kind == INPUT_E:
                circuit._append(INPUT_E, len(circuit.inputs_evaluator))
                circuit.inputs_evaluator.append(wire)
            else:
                bit = 0 if kind == CONST_0 else 1
                if circuit._const_wires[bit] < 0:
                    circuit._const_wires[bit] = wire
                circuit._append(kind)
    if out_line is None:
        raise CircuitError("missing OUT line")
    for token in out_line:
        circuit.mark_output(int(token))
    if len(circuit.inputs_garbler) != n_g or len(circuit.inputs_evaluator) != n_e:
        raise CircuitError("header input counts do not match gate lines")
    if len(circuit.outputs) != n_out:
        raise CircuitError("header output count does not match OUT line")
    return circuit


# The compiled kernel is optional; the interpreted one is always available.
try:
    from obnn import _evalcore as _kernel
except ImportError:  # pragma: no cover - depends on build environment
    from obnn import _evalpy as _kernel
