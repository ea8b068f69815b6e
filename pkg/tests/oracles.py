"""Brute-force reference implementations used only by the tests.

Fock states are tuples of 0/1 occupations over ``2M`` modes in the canonical
order (alpha block then beta block). Signs come from explicitly counting
occupied modes to the left of the operator, so nothing here shares code
with the bitmask paths being checked.
"""

from __future__ import annotations

from collections import defaultdict
from itertools import product

import numpy as np
from scipy.linalg import eigh


def annihilate(state, mode):
    if state[mode] == 0:
        return None
    sign = (-1) ** sum(state[:mode])
    new = list(state)
    new[mode] = 0
    return sign, tuple(new)


def create(state, mode):
    if state[mode] == 1:
        return None
    sign = (-1) ** sum(state[:mode])
    new = list(state)
    new[mode] = 1
    return sign, tuple(new)


def apply_string(ops, state):
    """Apply ``ops`` (rightmost first) to a basis state.

    ``ops`` is a sequence of ``("+", mode)`` / ``("-", mode)`` pairs written
    left to right as in the operator product.
    """
    coeff = 1
    for kind, mode in reversed(ops):
        res = (create if kind == "+" else annihilate)(state, mode)
        if res is None:
            return None
        sign, state = res
        coeff *= sign
    return coeff, state


def occupation_tuple(det, n_orbitals):
    return tuple(det.alpha >> p & 1 for p in range(n_orbitals)) + tuple(
        det.beta >> p & 1 for p in range(n_orbitals)
    )


def hamiltonian_apply(h, eri, state):
    """``H|state>`` (no constant term) as a dict ``{state: amplitude}``."""
    m = h.shape[0]
    out = defaultdict(float)
    for p, q in product(range(m), repeat=2):
        if h[p, q] == 0.0:
            continue
        for s in (0, 1):
            res = apply_string([("+", p + s * m), ("-", q + s * m)], state)
            if res:
                out[res[1]] += h[p, q] * res[0]
    for p, q, r, t in product(range(m), repeat=4):
        v = eri[p, q, r, t]
        if v == 0.0:
            continue
        for s1, s2 in product((0, 1), repeat=2):
            ops = [("+", p + s1 * m), ("+", r + s2 * m), ("-", t + s2 * m), ("-", q + s1 * m)]
            res = apply_string(ops, state)
            if res:
                out[res[1]] += 0.5 * v * res[0]
    return out


def hamiltonian_element(h, eri, bra, ket):
    return hamiltonian_apply(h, eri, ket).get(bra, 0.0)


def fock_basis(n_modes):
    """All occupation tuples; index ``sum(x_j << j)`` matches the statevector order."""
    return [tuple(i >> j & 1 for j in range(n_modes)) for i in range(1 << n_modes)]


def fock_index(state):
    return sum(x << j for j, x in enumerate(state))


def dense_operator(ops_with_coeffs, n_modes):
    """Dense Fock-space matrix of ``sum_k c_k * string_k``."""
    dim = 1 << n_modes
    mat = np.zeros((dim, dim), dtype=complex)
    basis = fock_basis(n_modes)
    for coeff, ops in ops_with_coeffs:
        for col, state in enumerate(basis):
            res = apply_string(ops, state)
            if res:
                mat[fock_index(res[1]), col] += coeff * res[0]
    return mat


def one_body_generator(K, n_orbitals):
    """Dense ``sum_{pq,sigma} K_pq a^dagger_{p sigma} a_{q sigma}``."""
    terms = []
    for p, q in product(range(n_orbitals), repeat=2):
        if K[p, q] != 0.0:
            for s in (0, 1):
                off = s * n_orbitals
                terms.append((K[p, q], [("+", p + off), ("-", q + off)]))
    return dense_operator(terms, 2 * n_orbitals)


def number_operator(mode, n_modes):
    return dense_operator([(1.0, [("+", mode), ("-", mode)])], n_modes)


def density_density_generator(J, n_orbitals):
    """Dense diagonal ``sum_{p<q,s,t} J_pq n_ps n_qt + sum_p J_pp n_pa n_pb``."""
    m = n_orbitals
    n = [number_operator(j, 2 * m) for j in range(2 * m)]
    out = np.zeros_like(n[0])
    for p in range(m):
        for q in range(p + 1, m):
            for s, t in product((0, 1), repeat=2):
                out += J[p, q] * n[p + s * m] @ n[q + t * m]
        out += J[p, p] * n[p] @ n[p + m]
    return out


def brute_force_ground(h, eri, dets, n_orbitals):
    """Dense lowest eigenpair over ``dets`` using the operator oracle."""
    states = [occupation_tuple(d, n_orbitals) for d in dets]
    index = {s: i for i, s in enumerate(states)}
    mat = np.zeros((len(states), len(states)))
    for col, ket in enumerate(states):
        for bra, val in hamiltonian_apply(h, eri, ket).items():
            if bra in index:
                mat[index[bra], col] += val
    w, v = eigh(mat)
    return w[0], v[:, 0], mat


def random_hamiltonian_arrays(n_orbitals, rng, scale=0.5):
    """Random real integrals with full 8-fold symmetry."""
    m = n_orbitals
    h = rng.normal(size=(m, m))
    h = (h + h.T) / 2
    eri = rng.normal(size=(m, m, m, m)) * scale
    eri = eri + eri.transpose(1, 0, 2, 3)
    eri = eri + eri.transpose(0, 1, 3, 2)
    eri = eri + eri.transpose(2, 3, 0, 1)
    return h, eri / 8


def cubic_roots_symmetric(a):
    """Eigenvalues of a real symmetric 3x3 matrix from its characteristic cubic."""
    a = np.asarray(a, dtype=float)
    c2 = -np.trace(a)
    c1 = 0.5 * (np.trace(a) ** 2 - np.trace(a @ a))
    c0 = -np.linalg.det(a)
    # Depressed cubic t^3 + pt + q with x = t - c2/3; trigonometric solution.
    shift = -c2 / 3
    p = c1 - c2 ** 2 / 3
    q = 2 * c2 ** 3 / 27 - c2 * c1 / 3 + c0
    if abs(p) < 1e-300:
        return np.array([shift] * 3)
    r = 2 * np.sqrt(-p / 3)
    arg = np.clip(3 * q / (p * r), -1.0, 1.0)
    phi = np.arccos(arg) / 3
    roots = [shift + r * np.cos(phi - 2 * np.pi * k / 3) for k in range(3)]
    return np.sort(roots)
