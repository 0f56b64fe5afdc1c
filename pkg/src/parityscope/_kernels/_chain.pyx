# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled restless Markov chain (see ``_chain_py`` for the reference)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def run_chain(const unsigned char[::1] tunnel,
              const unsigned char[::1] decay,
              const unsigned char[::1] dephase,
              const unsigned char[::1] dephase_bit,
              const unsigned char[::1] gate,
              const unsigned char[::1] readout,
              int parity0=0,
              int state0=0):
    cdef Py_ssize_t n = tunnel.shape[0]
    cdef Py_ssize_t i
    if (decay.shape[0] != n or dephase.shape[0] != n or dephase_bit.shape[0] != n
            or gate.shape[0] != n or readout.shape[0] != n):
        raise ValueError("event arrays must have equal length")
    m_arr = np.empty(n, dtype=np.uint8)
    p_arr = np.empty(n, dtype=np.uint8)
    cdef unsigned char[::1] m = m_arr
    cdef unsigned char[::1] par = p_arr
    cdef unsigned char parity = parity0 & 1
    cdef unsigned char q = state0 & 1
    with nogil:
        for i in range(n):
            if tunnel[i]:
                parity ^= 1
            if decay[i] and q:
                q = 0
            if parity == 0:
                q ^= 1
            if dephase[i]:
                q = dephase_bit[i] & 1
            if gate[i]:
                q ^= 1
            m[i] = q ^ (readout[i] & 1)
            par[i] = parity
    return m_arr, p_arr
