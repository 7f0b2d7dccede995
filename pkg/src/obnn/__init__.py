"""Two-party oblivious inference for binarized neural networks.

The package compiles ternary-weight binarized models into boolean circuits
built from XNOR products, oblivious popcounts and threshold comparators,
and executes them under a garbled-circuit protocol with free XOR and
half-gate AND tables.  An analytic cost explorer covers architecture
reshaping at equal cost, and the ``obnn`` CLI fronts the whole pipeline.
"""

__version__ = "0.1.0"
