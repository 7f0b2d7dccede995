"""Interpreted plaintext evaluation kernel.

Fallback for obnn._evalcore with identical semantics: one pass over the
gate arrays in topological order.  Kind codes are inlined as literals to
keep the loop tight; they must match obnn.circuit.
"""

BACKEND = "python"


def run(kinds, a, b, gbits, ebits, outs):
    vals = bytearray(len(kinds))
    for i in range(len(kinds)):
        k = kinds[i]
        if k == 4:  # XOR
            vals[i] = vals[a[i]] ^ vals[b[i]]
        elif k == 5:  # AND
            vals[i] = vals[a[i]] & vals[b[i]]
        elif k == 0:  # INPUT_G
            vals[i] = gbits[a[i]]
        elif k == 1:  # INPUT_E
            vals[i] = ebits[a[i]]
        elif k == 2:  # CONST_0
            vals[i] = 0
        else:  # CONST_1
            vals[i] = 1
    return [vals[o] for o in outs]
