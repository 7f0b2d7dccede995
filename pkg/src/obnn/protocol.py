"""Two-party session driver over a framed transport.

Frame order is fixed and both sides enforce it:

    garbler -> evaluator   CIRCUIT_META      hash + arities
    (ot provider)          OT_MSG*           evaluator input labels
    garbler -> evaluator   GARBLER_LABELS    garbler + constant labels
    garbler -> evaluator   AND_TABLES*       32 bytes per AND, chunked
    garbler -> evaluator   DECODE_TABLE      one bit per output
    evaluator -> garbler   OUTPUT_ACK

All garbler frames after the OT response flow in one direction, so the
number of communication direction changes is a protocol constant (three)
regardless of circuit size or depth.  Only the evaluator learns outputs;
the garbler gets the acknowledgement and a traffic report.
"""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import asdict, dataclass

from obnn.bits import pack_bits, unpack_bits
from obnn.circuit import Circuit
from obnn.garble import (
    AND_TABLE_BYTES,
    LABEL_BYTES,
    GarbleError,
    constant_wires,
    decode,
    encode_inputs,
    evaluate,
    garble,
)
from obnn.ot import make_ot
from obnn.transport import (
    MSG_AND_TABLES,
    MSG_CIRCUIT_META,
    MSG_DECODE_TABLE,
    MSG_GARBLER_LABELS,
    MSG_OUTPUT_ACK,
    ProtocolError,
    memory_pair,
    tcp_accept,
    tcp_connect,
    tcp_server,
)

_META = struct.Struct("<III")

# AND tables stream in chunks of this many gates so garbler memory stays
# bounded and large circuits overlap wire time with table serialization.
TABLE_CHUNK_GATES = 2048


@dataclass
class SessionReport:
    """Cost accounting for one protocol run, one side's view."""

    nonxor: int
    xor: int
    bytes_sent: int
    bytes_received: int
    rounds: int
    wall_ms: float

    def to_dict(self):
        return asdict(self)


def _meta_payload(circuit):
    return circuit.sha256() + _META.pack(
        len(circuit.inputs_garbler),
        len(circuit.inputs_evaluator),
        len(circuit.outputs),
    )


def _report(circuit, transport, wall_ms):
    return SessionReport(
        nonxor=circuit.nonxor,
        xor=circuit.xor,
        bytes_sent=transport.bytes_sent,
        bytes_received=transport.bytes_received,
        rounds=transport.direction_changes,
        wall_ms=wall_ms,
    )


def run_garbler(transport, circuit: Circuit, garbler_bits, *, seed=None, ot="dh"):
    """Garble, transfer, and wait for the acknowledgement.

    ``seed`` fixes the garbling randomness (32 bytes); fresh randomness
    is drawn when omitted.  Returns the garbler-side session report.
    """
    start = time.perf_counter()
    provider = make_ot(ot)
    artifacts = garble(circuit, seed if seed is not None else os.urandom(32))

    transport.send_frame(MSG_CIRCUIT_META, _meta_payload(circuit))

    pairs = [
        tuple(label.to_bytes(LABEL_BYTES, "little") for label in artifacts.input_encodings[w])
        for w in circuit.inputs_evaluator
    ]
    provider.send(transport, pairs)

    own = encode_inputs(artifacts.input_encodings, circuit.inputs_garbler, garbler_bits)
    fixed = [
        artifacts.input_encodings[w][value]
        for w, value in constant_wires(circuit)
    ]
    payload = b"".join(label.to_bytes(LABEL_BYTES, "little") for label in own + fixed)
    transport.send_frame(MSG_GARBLER_LABELS, payload)

    tables = artifacts.and_tables
    step = TABLE_CHUNK_GATES * AND_TABLE_BYTES
    for off in range(0, len(tables), step):
        transport.send_frame(MSG_AND_TABLES, tables[off : off + step])

    transport.send_frame(MSG_DECODE_TABLE, pack_bits(artifacts.decode_bits))

    transport.recv_frame(expect=MSG_OUTPUT_ACK)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return _report(circuit, transport, wall_ms)


def run_evaluator(transport, circuit: Circuit, evaluator_bits, *, ot="dh"):
    """Run the evaluator side; returns (output_bits, session report)."""
    start = time.perf_counter()
    provider = make_ot(ot)
    if len(evaluator_bits) != len(circuit.inputs_evaluator):
        raise ProtocolError(
            f"expected {len(circuit.inputs_evaluator)} evaluator bits, "
            f"got {len(evaluator_bits)}"
        )

    _, meta = transport.recv_frame(expect=MSG_CIRCUIT_META)
    if len(meta) != 32 + _META.size:
        raise ProtocolError("malformed CIRCUIT_META frame")
    if meta[:32] != circuit.sha256():
        raise ProtocolError("circuit hash mismatch between endpoints")
    n_g, n_e, n_out = _META.unpack(meta[32:])
    if (n_g, n_e, n_out) != (
        len(circuit.inputs_garbler),
        len(circuit.inputs_evaluator),
        len(circuit.outputs),
    ):
        raise ProtocolError("circuit arity mismatch between endpoints")

    own_labels = provider.receive(transport, list(evaluator_bits))

    _, payload = transport.recv_frame(expect=MSG_GARBLER_LABELS)
    consts = constant_wires(circuit)
    expected = (n_g + len(consts)) * LABEL_BYTES
    if len(payload) != expected:
        raise ProtocolError("GARBLER_LABELS frame has the wrong size")

    active = {}
    for i, wire in enumerate(circuit.inputs_evaluator):
        active[wire] = int.from_bytes(own_labels[i], "little")
    for i, wire in enumerate(circuit.inputs_garbler):
        off = i * LABEL_BYTES
        active[wire] = int.from_bytes(payload[off : off + LABEL_BYTES], "little")
    base = n_g * LABEL_BYTES
    for i, (wire, _value) in enumerate(consts):
        off = base + i * LABEL_BYTES
        active[wire] = int.from_bytes(payload[off : off + LABEL_BYTES], "little")

    tables = bytearray()
    while True:
        mtype, chunk = transport.recv_frame(
            expect=(MSG_AND_TABLES, MSG_DECODE_TABLE)
        )
        if mtype == MSG_DECODE_TABLE:
            decode_payload = chunk
            break
        tables += chunk

    try:
        output_labels = evaluate(circuit, bytes(tables), active)
    except GarbleError as exc:
        raise ProtocolError(str(exc)) from exc
    bits = decode(output_labels, unpack_bits(decode_payload, len(circuit.outputs)))

    transport.send_frame(MSG_OUTPUT_ACK, b"")
    wall_ms = (time.perf_counter() - start) * 1000.0
    return bits, _report(circuit, transport, wall_ms)


def loopback_session(circuit, garbler_bits, evaluator_bits, *, ot="stub",
                     transport="memory", seed=None):
    """Run both sides locally; returns (bits, garbler report, evaluator report).

    ``transport`` selects "memory" queues or a real "tcp" loopback socket
    pair.  The evaluator runs on a helper thread either way.
    """
    if transport == "memory":
        t_g, t_e = memory_pair()
    elif transport == "tcp":
        server = tcp_server("127.0.0.1", 0)
        port = server.getsockname()[1]
        t_g = None
        t_e = None
    else:
        raise ValueError(f"unknown loopback transport {transport!r}")

    result = {}
    failure = []

    def evaluator_side():
        try:
            endpoint = t_e if t_e is not None else tcp_connect("127.0.0.1", port)
            try:
                bits, rep = run_evaluator(endpoint, circuit, evaluator_bits, ot=ot)
                result["bits"] = bits
                result["report"] = rep
            finally:
                endpoint.close()
        except BaseException as exc:  # noqa: BLE001 - surfaced to the main thread
            failure.append(exc)

    worker = threading.Thread(target=evaluator_side, daemon=True)
    worker.start()
    try:
        endpoint_g = t_g if t_g is not None else tcp_accept(server)
        try:
            g_report = run_garbler(endpoint_g, circuit, garbler_bits, seed=seed, ot=ot)
        finally:
            endpoint_g.close()
    finally:
        worker.join(timeout=60)
    if failure:
        raise failure[0]
    if "bits" not in result:
        raise ProtocolError("evaluator thread produced no result")
    return result["bits"], g_report, result["report"]
