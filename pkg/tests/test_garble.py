"""Garbling scheme: correctness against clear evaluation, label structure,
and tamper detection."""

import itertools
import random

import pytest

from obnn.circuit import EVALUATOR, GARBLER, Circuit
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
from tests.helpers import random_circuit, random_input_bits

SEED = bytes(range(32))


def run_garbled(circuit, g_bits, e_bits, seed=SEED):
    art = garble(circuit, seed)
    active = {}
    for wire, bit in zip(circuit.inputs_garbler, g_bits):
        active[wire] = art.input_encodings[wire][bit]
    for wire, bit in zip(circuit.inputs_evaluator, e_bits):
        active[wire] = art.input_encodings[wire][bit]
    for wire, value in constant_wires(circuit):
        active[wire] = art.input_encodings[wire][value]
    out_labels = evaluate(circuit, art.and_tables, active)
    return decode(out_labels, art.decode_bits)


def single_and():
    c = Circuit()
    a = c.add_input(GARBLER)
    b = c.add_input(EVALUATOR)
    c.mark_output(c.gate_and(a, b))
    return c


class TestCorrectness:
    def test_single_and_exhaustive(self):
        c = single_and()
        for ga, eb in itertools.product((0, 1), repeat=2):
            assert run_garbled(c, [ga], [eb]) == [ga & eb]

    def test_single_xor_exhaustive(self):
        c = Circuit()
        a = c.add_input(GARBLER)
        b = c.add_input(EVALUATOR)
        c.mark_output(c.gate_xor(a, b))
        for ga, eb in itertools.product((0, 1), repeat=2):
            assert run_garbled(c, [ga], [eb]) == [ga ^ eb]

    def test_constants_and_not(self):
        c = Circuit()
        a = c.add_input(EVALUATOR)
        c.mark_output(c.gate_not(a))
        c.mark_output(c.constant(1))
        c.mark_output(c.gate_or(a, c.constant(0)))
        for bit in (0, 1):
            assert run_garbled(c, [], [bit]) == [1 - bit, 1, bit]

    def test_random_circuits_match_clear_eval(self):
        rng = random.Random(0xC0FFEE)
        for _ in range(150):
            c = random_circuit(rng)
            g_bits, e_bits = random_input_bits(rng, c)
            want = c.eval_plain(g_bits, e_bits)
            got = run_garbled(c, g_bits, e_bits, seed=rng.randbytes(32))
            assert got == want

    def test_deterministic_given_seed(self):
        c = single_and()
        a1, a2 = garble(c, SEED), garble(c, SEED)
        assert a1.and_tables == a2.and_tables
        assert a1.decode_bits == a2.decode_bits
        assert a1.input_encodings == a2.input_encodings

    def test_different_seed_different_tables(self):
        c = single_and()
        assert garble(c, SEED).and_tables != garble(c, bytes(32)).and_tables


class TestLabelStructure:
    def test_label_pair_difference_constant(self):
        # free XOR needs every pair to differ by the same global offset
        rng = random.Random(5)
        c = random_circuit(rng)
        art = garble(c, SEED)
        deltas = {l0 ^ l1 for l0, l1 in art.input_encodings.values()}
        assert len(deltas) == 1
        delta = deltas.pop()
        assert delta & 1 == 1  # color bit of the offset is forced
        assert delta < (1 << (8 * LABEL_BYTES))

    def test_table_size_matches_and_count(self):
        rng = random.Random(6)
        for _ in range(20):
            c = random_circuit(rng)
            art = garble(c, SEED)
            assert len(art.and_tables) == c.nonxor * AND_TABLE_BYTES

    def test_decode_bits_cover_outputs(self):
        rng = random.Random(7)
        c = random_circuit(rng)
        art = garble(c, SEED)
        assert len(art.decode_bits) == len(c.outputs)

    def test_seed_must_have_entropy(self):
        with pytest.raises(GarbleError):
            garble(single_and(), b"short")


class TestTamper:
    def test_flipped_color_bit_corrupts_some_output(self):
        # not authenticated, but a corrupt table must not act like the
        # honest one on every input: flipping the first ciphertext's
        # color bit breaks the inputs whose active label selects it
        c = Circuit()
        a = c.add_input(GARBLER)
        b = c.add_input(EVALUATOR)
        c.mark_output(c.gate_and(a, b))
        art = garble(c, SEED)
        bad = bytearray(art.and_tables)
        bad[0] ^= 0x01
        diffs = 0
        for ga, eb in itertools.product((0, 1), repeat=2):
            active = {
                c.inputs_garbler[0]: art.input_encodings[c.inputs_garbler[0]][ga],
                c.inputs_evaluator[0]: art.input_encodings[c.inputs_evaluator[0]][eb],
            }
            out = decode(evaluate(c, bytes(bad), active), art.decode_bits)
            diffs += out != [ga & eb]
        assert diffs == 2

    def test_truncated_tables_rejected(self):
        c = single_and()
        art = garble(c, SEED)
        active = {
            c.inputs_garbler[0]: art.input_encodings[c.inputs_garbler[0]][1],
            c.inputs_evaluator[0]: art.input_encodings[c.inputs_evaluator[0]][1],
        }
        with pytest.raises(GarbleError):
            evaluate(c, art.and_tables[:-1], active)

    def test_missing_input_label_rejected(self):
        c = single_and()
        art = garble(c, SEED)
        with pytest.raises(GarbleError):
            evaluate(c, art.and_tables, {})
