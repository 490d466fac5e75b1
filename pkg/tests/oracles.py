"""Independent brute-force references used by the tests."""

import numpy as np

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)
I2 = np.eye(2, dtype=complex)


def _kron(ops):
    out = np.array([[1.0 + 0j]])
    for o in ops:
        out = np.kron(out, o)
    return out


def _on(op, k, n):
    return _kron([op if j == k else I2 for j in range(n)])


def _cnot(target, n):
    return _kron([P0] + [I2] * (n - 1)) + _kron([P1] + [X if j == target else I2 for j in range(1, n)])


def circuit_outcomes(n_r, p_c, p_r, phase):
    """``P[k, n]`` from a dense qubit simulation of H, CNOTs, phase, CNOTs, H.

    ``k`` is the control outcome, ``n`` the number of register atoms in |1>.
    """
    n = n_r + 1
    qc = np.diag([(1 + p_c) / 2, (1 - p_c) / 2]).astype(complex)
    qr = np.diag([(1 + p_r) / 2, (1 - p_r) / 2]).astype(complex)
    rho = _kron([qc] + [qr] * n_r)
    cn = np.eye(2**n, dtype=complex)
    for j in range(1, n):
        cn = _cnot(j, n) @ cn
    free = _kron([I2] + [np.diag([1.0, np.exp(-1j * phase)])] * n_r)
    hc = _on(H, 0, n)
    u = hc @ cn @ free @ cn @ hc
    rho = u @ rho @ u.conj().T
    pop = np.real(np.diag(rho))
    out = np.zeros((2, n_r + 1))
    for idx, p in enumerate(pop):
        bits = [(idx >> (n - 1 - j)) & 1 for j in range(n)]
        out[bits[0], sum(bits[1:])] += p
    return out
