"""Compare the compiled and pure-Python clear-evaluation kernels.

Run from the repository root:

    python3 benchmarks/bench_eval.py [--sizes 1000,4000,16000] [--repeat 30]

Builds popcount circuits of each size, evaluates them with whichever
kernels are importable, and prints per-evaluation wall time plus the
speedup of the compiled kernel when both are present.  Both kernels are
checked against each other before timing.
"""

import argparse
import random
import statistics
import time
from array import array

from obnn.adders import ObcKind, build_popcount
from obnn.circuit import EVALUATOR, Circuit, bundle_value


def load_kernels():
    kernels = {}
    from obnn import _evalpy

    kernels[_evalpy.BACKEND] = _evalpy
    try:
        from obnn import _evalcore

        kernels[_evalcore.BACKEND] = _evalcore
    except ImportError:
        pass
    return kernels


def build_case(n, rng):
    c = Circuit()
    bits = [c.add_input(EVALUATOR) for _ in range(n)]
    out = build_popcount(c, bits, ObcKind.TA)
    for b in out.bits:
        c.mark_output(b)
    e_bits = bytes(bytearray(rng.randint(0, 1) for _ in range(n)))
    args = (c._kinds, c._a, c._b, b"", e_bits, array("i", c.outputs))
    return c, args, sum(e_bits)


def time_kernel(kernel, args, repeat):
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        kernel.run(*args)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="1000,4000,16000")
    parser.add_argument("--repeat", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    kernels = load_kernels()
    print("kernels:", ", ".join(sorted(kernels)))
    rng = random.Random(args.seed)
    header = ["n", "gates"] + [f"{name}_us" for name in sorted(kernels)]
    if len(kernels) > 1:
        header.append("speedup")
    print("  ".join(header))

    for n in (int(s) for s in args.sizes.split(",")):
        circuit, call_args, want = build_case(n, rng)
        results = {}
        for name, kernel in sorted(kernels.items()):
            got = bundle_value(kernel.run(*call_args))
            if got != want:
                raise SystemExit(f"{name} kernel computed {got}, expected {want}")
            results[name] = time_kernel(kernel, call_args, args.repeat)
        row = [str(n), str(circuit.wire_count)]
        row += [f"{results[name] * 1e6:.0f}" for name in sorted(results)]
        if len(results) > 1:
            row.append(f"{results['python'] / results['cython']:.1f}x")
        print("  ".join(row))


if __name__ == "__main__":
    main()
