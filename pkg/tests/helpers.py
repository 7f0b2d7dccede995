"""Shared test fixtures: random circuits and tiny models."""

from obnn.circuit import EVALUATOR, GARBLER, Circuit


def random_circuit(rng, max_gates=40):
    """A random well-formed circuit mixing all gate kinds.

    Always has at least one evaluator input so OT paths get exercised;
    garbler inputs may be absent.
    """
    circuit = Circuit()
    wires = []
    for _ in range(rng.randint(0, 3)):
        wires.append(circuit.add_input(GARBLER))
    for _ in range(rng.randint(1, 4)):
        wires.append(circuit.add_input(EVALUATOR))
    wires.append(circuit.constant(rng.randint(0, 1)))

    for _ in range(rng.randint(1, max_gates)):
        op = rng.random()
        a = rng.choice(wires)
        b = rng.choice(wires)
        if op < 0.4:
            wires.append(circuit.gate_xor(a, b))
        elif op < 0.8:
            wires.append(circuit.gate_and(a, b))
        elif op < 0.9:
            wires.append(circuit.gate_not(a))
        else:
            wires.append(circuit.gate_or(a, b))

    for _ in range(rng.randint(1, 5)):
        circuit.mark_output(rng.choice(wires))
    return circuit


def random_input_bits(rng, circuit):
    g = [rng.randint(0, 1) for _ in circuit.inputs_garbler]
    e = [rng.randint(0, 1) for _ in circuit.inputs_evaluator]
    return g, e
