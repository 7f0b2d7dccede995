"""Circuit IR: folding, counting, evaluation, serialization."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obnn import _evalpy
from obnn.circuit import (
    EVALUATOR,
    GARBLER,
    Circuit,
    CircuitError,
    bundle_value,
    parse_circuit,
)
from helpers import random_circuit, random_input_bits


def two_input_circuit():
    c = Circuit()
    a = c.add_input(GARBLER)
    b = c.add_input(EVALUATOR)
    return c, a, b


class TestFolding:
    def test_xor_with_zero_returns_operand(self):
        c, a, _ = two_input_circuit()
        assert c.gate_xor(a, c.constant(0)) == a
        assert c.gate_xor(c.constant(0), a) == a
        assert c.nonxor == 0 and c.xor == 0

    def test_xor_of_wire_with_itself_is_zero(self):
        c, a, _ = two_input_circuit()
        z = c.gate_xor(a, a)
        assert c.gate(z).kind == "CONST_0"
        assert c.xor == 0

    def test_xor_with_one_is_stored_not(self):
        c, a, _ = two_input_circuit()
        n = c.gate_not(a)
        assert c.gate(n).kind == "XOR"
        assert c.xor == 1 and c.nonxor == 0

    def test_and_with_one_returns_operand(self):
        c, a, _ = two_input_circuit()
        assert c.gate_and(a, c.constant(1)) == a
        assert c.nonxor == 0

    def test_and_with_zero_is_zero(self):
        c, a, _ = two_input_circuit()
        z = c.gate_and(a, c.constant(0))
        assert c.gate(z).kind == "CONST_0"
        assert c.nonxor == 0

    def test_and_of_wire_with_itself_is_identity(self):
        c, a, _ = two_input_circuit()
        assert c.gate_and(a, a) == a
        assert c.nonxor == 0

    def test_constant_constant_operations_fold(self):
        c = Circuit()
        one = c.constant(1)
        zero = c.constant(0)
        assert c.gate(c.gate_xor(one, zero)).kind == "CONST_1"
        assert c.gate(c.gate_and(one, zero)).kind == "CONST_0"
        assert c.nonxor == 0 and c.xor == 0

    def test_constants_are_deduplicated(self):
        c = Circuit()
        assert c.constant(0) == c.constant(0)
        assert c.constant(1) == c.constant(1)
        assert c.wire_count == 2

    def test_or_costs_one_and(self):
        c, a, b = two_input_circuit()
        c.mark_output(c.gate_or(a, b))
        assert c.nonxor == 1
        for x in (0, 1):
            for y in (0, 1):
                assert c.eval_plain([x], [y]) == [x | y]


class TestEvaluation:
    def test_identity_circuit_returns_inputs(self):
        c = Circuit()
        a = c.add_input(GARBLER)
        b = c.add_input(EVALUATOR)
        c.mark_output(a)
        c.mark_output(b)
        assert c.eval_plain([1], [0]) == [1, 0]

    def test_input_arity_is_checked(self):
        c, a, b = two_input_circuit()
        c.mark_output(c.gate_and(a, b))
        with pytest.raises(CircuitError):
            c.eval_plain([1, 0], [1])
        with pytest.raises(CircuitError):
            c.eval_plain([1], [])

    def test_unknown_wire_rejected(self):
        c, a, _ = two_input_circuit()
        with pytest.raises(CircuitError):
            c.gate_xor(a, 99)

    def test_bundle_value(self):
        assert bundle_value([1, 0, 1]) == 5
        assert bundle_value([]) == 0

    def test_kernels_agree_on_random_circuits(self):
        rng = random.Random(0xC1C)
        for _ in range(100):
            c = random_circuit(rng)
            g, e = random_input_bits(rng, c)
            expected = _evalpy.run(
                c._kinds,
                c._a,
                c._b,
                bytes(bytearray(g)),
                bytes(bytearray(e)),
                c.outputs,
            )
            assert c.eval_plain(g, e) == expected


GOLDEN = """CIRC v1 1 1 2
0 INPUT_G
1 INPUT_E
2 XOR 0 1
3 AND 2 1
4 CONST_1
5 XOR 3 4
OUT 3 5
"""


class TestSerialization:
    def build_golden(self):
        c = Circuit()
        a = c.add_input(GARBLER)
        b = c.add_input(EVALUATOR)
        x = c.gate_xor(a, b)
        y = c.gate_and(x, b)
        n = c.gate_not(y)
        c.mark_output(y)
        c.mark_output(n)
        return c

    def test_golden_bytes(self):
        assert self.build_golden().serialize() == GOLDEN

    def test_round_trip_is_byte_exact(self):
        text = self.build_golden().serialize()
        assert parse_circuit(text).serialize() == text

    def test_round_trip_random(self):
        rng = random.Random(7)
        for _ in range(50):
            c = random_circuit(rng)
            text = c.serialize()
            back = parse_circuit(text)
            assert back.serialize() == text
            g, e = random_input_bits(rng, c)
            assert back.eval_plain(g, e) == c.eval_plain(g, e)

    def test_hash_tracks_content(self):
        c1 = self.build_golden()
        c2 = self.build_golden()
        assert c1.sha256() == c2.sha256()
        c2.mark_output(0)
        assert c1.sha256() != c2.sha256()

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "CIRC v2 0 0 0\nOUT \n",
            "CIRC v1 0 0 1\n0 BLORP\nOUT 0\n",
            "CIRC v1 0 0 1\n5 CONST_0\nOUT 5\n",
            "CIRC v1 0 0 1\n0 CONST_0\n1 XOR 0 2\nOUT 1\n",
            "CIRC v1 0 0 1\n0 CONST_0\n",
            "CIRC v1 1 0 1\n0 CONST_0\nOUT 0\n",
        ],
    )
    def test_malformed_text_rejected(self, text):
        with pytest.raises(CircuitError):
            parse_circuit(text)


class TestInvariants:
    @given(st.integers(0, 2**32))
    @settings(max_examples=60, deadline=None)
    def test_gates_only_read_earlier_wires(self, seed):
        c = random_circuit(random.Random(seed))
        for gate in c.gates():
            for w in gate.inputs:
                assert w < gate.output

    @given(st.integers(0, 2**32))
    @settings(max_examples=60, deadline=None)
    def test_counters_match_stored_gates(self, seed):
        c = random_circuit(random.Random(seed))
        kinds = [g.kind for g in c.gates()]
        assert c.nonxor == kinds.count("AND")
        assert c.xor == kinds.count("XOR")
        assert c.count_gates()["nonxor"] == c.nonxor
