"""Two-party session: framing, oblivious transfer, full protocol runs over
both transports, round counting, and failure modes."""

import random
import threading

import pytest

from obnn.circuit import EVALUATOR, GARBLER, Circuit
from obnn.ot import DhOt, InsecureStubOt, make_ot
from obnn.protocol import (
    SessionReport,
    loopback_session,
    run_evaluator,
    run_garbler,
)
from obnn.transport import (
    MSG_AND_TABLES,
    MSG_CIRCUIT_META,
    ProtocolError,
    memory_pair,
    tcp_accept,
    tcp_connect,
    tcp_server,
)
from tests.helpers import random_circuit, random_input_bits


def and_chain(depth):
    c = Circuit()
    acc = c.add_input(GARBLER)
    for _ in range(depth):
        acc = c.gate_and(acc, c.add_input(EVALUATOR))
    c.mark_output(acc)
    return c


class TestFraming:
    def test_roundtrip(self):
        a, b = memory_pair()
        a.send_frame(MSG_CIRCUIT_META, b"hello")
        kind, payload = b.recv_frame()
        assert (kind, payload) == (MSG_CIRCUIT_META, b"hello")

    def test_expected_type_enforced(self):
        a, b = memory_pair()
        a.send_frame(MSG_CIRCUIT_META, b"")
        with pytest.raises(ProtocolError, match="expected"):
            b.recv_frame(expect=MSG_AND_TABLES)

    def test_byte_and_direction_accounting(self):
        a, b = memory_pair()
        a.send_frame(MSG_CIRCUIT_META, b"xyz")
        b.recv_frame()
        b.send_frame(MSG_AND_TABLES, b"")
        a.recv_frame()
        assert a.bytes_sent == 5 + 3 and b.bytes_received == 5 + 3
        # first operation sets the direction, each flip afterwards counts
        assert a.direction_changes == 1
        assert b.direction_changes == 1

    def test_closed_peer_raises(self):
        a, b = memory_pair()
        a.close()
        with pytest.raises(ProtocolError):
            b.recv_frame()

    def test_tcp_frames(self):
        server = tcp_server("127.0.0.1", 0)
        port = server.getsockname()[1]
        result = {}

        def peer():
            t = tcp_accept(server)
            result["frame"] = t.recv_frame()
            t.send_frame(MSG_AND_TABLES, b"back")
            t.close()

        th = threading.Thread(target=peer, daemon=True)
        th.start()
        t = tcp_connect("127.0.0.1", port)
        t.send_frame(MSG_CIRCUIT_META, bytes(range(200)))
        assert t.recv_frame() == (MSG_AND_TABLES, b"back")
        th.join(timeout=5)
        t.close()
        server.close()
        assert result["frame"] == (MSG_CIRCUIT_META, bytes(range(200)))


class TestObliviousTransfer:
    @pytest.mark.parametrize("provider", ["dh", "stub"])
    def test_transfers_chosen_messages(self, provider):
        rng = random.Random(3)
        pairs = [(rng.randbytes(16), rng.randbytes(16)) for _ in range(8)]
        choices = [rng.randint(0, 1) for _ in range(8)]
        a, b = memory_pair()
        got = {}

        def receiver():
            got["msgs"] = make_ot(provider).receive(b, choices)

        th = threading.Thread(target=receiver, daemon=True)
        th.start()
        make_ot(provider).send(a, pairs)
        th.join(timeout=30)
        assert got["msgs"] == [p[c] for p, c in zip(pairs, choices)]

    def test_make_ot_rejects_unknown(self):
        with pytest.raises(ValueError):
            make_ot("carrier-pigeon")

    def test_make_ot_passes_instances_through(self):
        inst = InsecureStubOt()
        assert make_ot(inst) is inst
        assert isinstance(make_ot("dh"), DhOt)

    def test_dh_rejects_out_of_range_element(self):
        a, b = memory_pair()

        def receiver():
            try:
                DhOt().receive(b, [0])
            except ProtocolError:
                pass

        th = threading.Thread(target=receiver, daemon=True)
        th.start()
        from obnn.transport import MSG_OT

        a.send_frame(MSG_OT, bytes(256))  # group element zero: invalid
        th.join(timeout=5)
        assert not th.is_alive()


class TestSessions:
    @pytest.mark.parametrize("transport", ["memory", "tcp"])
    @pytest.mark.parametrize("ot", ["stub", "dh"])
    def test_end_to_end_matches_clear(self, transport, ot):
        rng = random.Random(hash((transport, ot)) & 0xFFFF)
        c = random_circuit(rng)
        g_bits, e_bits = random_input_bits(rng, c)
        want = c.eval_plain(g_bits, e_bits)
        bits, g_rep, e_rep = loopback_session(
            c, g_bits, e_bits, ot=ot, transport=transport
        )
        assert bits == want
        assert g_rep.bytes_sent == e_rep.bytes_received
        assert g_rep.bytes_received == e_rep.bytes_sent

    def test_many_random_circuits(self):
        rng = random.Random(99)
        for _ in range(60):
            c = random_circuit(rng)
            g_bits, e_bits = random_input_bits(rng, c)
            bits, _, _ = loopback_session(c, g_bits, e_bits)
            assert bits == c.eval_plain(g_bits, e_bits)

    def test_report_fields(self):
        c = and_chain(4)
        bits, g_rep, e_rep = loopback_session(c, [1], [1, 1, 0, 1])
        assert bits == [0]
        for rep in (g_rep, e_rep):
            assert isinstance(rep, SessionReport)
            d = rep.to_dict()
            assert set(d) == {
                "nonxor", "xor", "bytes_sent", "bytes_received", "rounds", "wall_ms",
            }
            assert d["nonxor"] == c.nonxor and d["rounds"] == 3

    def test_rounds_do_not_grow_with_depth(self):
        shallow = and_chain(3)
        deep = and_chain(600)
        _, g1, e1 = loopback_session(shallow, [1], [1] * 3)
        _, g2, e2 = loopback_session(deep, [1], [1] * 600)
        assert (g1.rounds, e1.rounds) == (g2.rounds, e2.rounds)

    def test_large_circuit_chunks_tables(self):
        # more AND gates than one chunk carries: still one logical round trip
        c = and_chain(2100)
        bits, g_rep, _ = loopback_session(c, [1], [1] * 2100)
        assert bits == [1]
        assert g_rep.rounds == 3

    def test_seeded_sessions_reproducible(self):
        c = and_chain(5)
        seed = bytes(range(32))
        r1 = loopback_session(c, [1], [1, 0, 1, 1, 0], seed=seed)
        r2 = loopback_session(c, [1], [1, 0, 1, 1, 0], seed=seed)
        assert r1[0] == r2[0]

    def test_circuit_mismatch_detected(self):
        c1 = and_chain(3)
        c2 = and_chain(4)
        a, b = memory_pair()

        def garbler():
            try:
                run_garbler(a, c1, [1], ot="stub")
            except ProtocolError:
                pass

        th = threading.Thread(target=garbler, daemon=True)
        th.start()
        with pytest.raises(ProtocolError, match="hash mismatch|arity"):
            run_evaluator(b, c2, [1, 1, 1, 1], ot="stub")
        a.close()
        th.join(timeout=5)

    def test_wrong_input_arity_rejected(self):
        c = and_chain(3)
        with pytest.raises(ValueError):
            loopback_session(c, [1, 1], [1, 1, 1])
