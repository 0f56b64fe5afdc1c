"""Pure-Python restless Markov chain.

One cycle is: parity flip, relaxation of an excited qubit, the parity
mapping (even toggles the qubit, odd leaves it), dephasing (outcome replaced
by a random bit), gate error (outcome flipped), readout. Readout
misclassification only changes the reported bit; the qubit keeps the true
outcome.
"""

import numpy as np


def run_chain(tunnel, decay, dephase, dephase_bit, gate, readout,
              parity0=0, state0=0):
    n = len(tunnel)
    if not (len(decay) == len(dephase) == len(dephase_bit) == len(gate)
            == len(readout) == n):
        raise ValueError("event arrays must have equal length")
    m = np.empty(n, dtype=np.uint8)
    par = np.empty(n, dtype=np.uint8)
    parity = parity0 & 1
    q = state0 & 1
    tunnel = tunnel.tolist()
    decay = decay.tolist()
    dephase = dephase.tolist()
    dephase_bit = dephase_bit.tolist()
    gate = gate.tolist()
    readout = readout.tolist()
    m_out = [0] * n
    p_out = [0] * n
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
        m_out[i] = q ^ (readout[i] & 1)
        p_out[i] = parity
    m[:] = m_out
    par[:] = p_out
    return m, par
