# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled plaintext evaluation kernel.

Semantics must match obnn._evalpy.run exactly; the test suite asserts the
two kernels agree gate for gate.
"""

BACKEND = "cython"


def run(const unsigned char[::1] kinds, const int[::1] a, const int[::1] b,
        const unsigned char[::1] gbits, const unsigned char[::1] ebits,
        const int[::1] outs):
    cdef Py_ssize_t n = kinds.shape[0]
    cdef Py_ssize_t i
    cdef unsigned char k
    cdef bytearray buf = bytearray(n)
    cdef unsigned char[::1] vals = buf
    for i in range(n):
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
