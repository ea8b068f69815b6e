"""Bitstring Slater determinants, excitation algebra and Slater-Condon rules.

Spin-orbitals are ordered with all alpha orbitals first (``0..M-1``) and all
beta orbitals after (``M..2M-1``). Every fermionic sign in the package,
the statevector basis and the bitstring text form use this single ordering.
"""

from __future__ import annotations

from itertools import combinations
from typing import Iterator, NamedTuple

import numpy as np

from bookend.errors import ValidationError
from bookend.integrals import MolecularHamiltonian


class Determinant(NamedTuple):
    """Occupation bitmasks; bit ``p`` of ``alpha`` set means orbital ``p`` holds an up electron."""

    alpha: int
    beta: int

    def full_mask(self, n_orbitals: int) -> int:
        """Single ``2M``-bit mask in canonical spin-orbital order."""
        return self.alpha | (self.beta << n_orbitals)

    @classmethod
    def from_full_mask(cls, mask: int, n_orbitals: int) -> "Determinant":
        low = (1 << n_orbitals) - 1
        return cls(mask & low, mask >> n_orbitals)

    @classmethod
    def from_occupations(cls, alpha: list[int], beta: list[int]) -> "Determinant":
        return cls(sum(1 << p for p in set(alpha)), sum(1 << p for p in set(beta)))

    def occupied_alpha(self) -> list[int]:
        return bits(self.alpha)

    def occupied_beta(self) -> list[int]:
        return bits(self.beta)


def bits(mask: int) -> list[int]:
    """Indices of set bits, ascending."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def hartree_fock_determinant(n_alpha: int, n_beta: int) -> Determinant:
    """Aufbau reference: lowest orbitals filled in each spin sector."""
    return Determinant((1 << n_alpha) - 1, (1 << n_beta) - 1)


def is_valid(d: Determinant, H: MolecularHamiltonian) -> bool:
    limit = 1 << H.n_orbitals
    return (
        0 <= d.alpha < limit
        and 0 <= d.beta < limit
        and d.alpha.bit_count() == H.n_alpha
        and d.beta.bit_count() == H.n_beta
    )


def check_valid(d: Determinant, H: MolecularHamiltonian) -> None:
    if not is_valid(d, H):
        raise ValidationError(
            f"determinant {d} is not a valid ({H.n_alpha}a, {H.n_beta}b) "
            f"configuration over {H.n_orbitals} orbitals"
        )


def to_bitstring(d: Determinant, n_orbitals: int) -> str:
    """Text form: ``2M`` characters, alpha orbital 0 leftmost, then the beta block."""
    a = "".join("1" if d.alpha >> p & 1 else "0" for p in range(n_orbitals))
    b = "".join("1" if d.beta >> p & 1 else "0" for p in range(n_orbitals))
    return a + b


def from_bitstring(text: str) -> Determinant:
    if len(text) % 2 or set(text) - {"0", "1"}:
        raise ValidationError(f"invalid bitstring {text!r}")
    m = len(text) // 2
    alpha = sum(1 << p for p, ch in enumerate(text[:m]) if ch == "1")
    beta = sum(1 << p for p, ch in enumerate(text[m:]) if ch == "1")
    return Determinant(alpha, beta)


def excitation_degree(a: Determinant, b: Determinant) -> int:
    return ((a.alpha ^ b.alpha).bit_count() + (a.beta ^ b.beta).bit_count()) // 2


def excitation_degrees(dets_a: np.ndarray, dets_b: np.ndarray, ref: Determinant) -> np.ndarray:
    """Vectorized :func:`excitation_degree` of many determinants against ``ref``."""
    da = np.bitwise_count(dets_a ^ np.uint64(ref.alpha))
    db = np.bitwise_count(dets_b ^ np.uint64(ref.beta))
    return (da.astype(np.int64) + db) // 2


def apply_excitation(
    d: Determinant, create: int, annihilate: int, n_orbitals: int
) -> tuple[Determinant | None, int]:
    """Apply ``a^dagger_create a_annihilate`` to ``d`` (canonical spin-orbital indices).

    Returns the resulting determinant and its sign ``gamma``. When the
    operator annihilates the state, ``(None, 0)`` is returned.
    """
    n_so = 2 * n_orbitals
    if not (0 <= create < n_so and 0 <= annihilate < n_so):
        raise IndexError(f"spin-orbital index outside [0, {n_so})")
    full = d.full_mask(n_orbitals)
    if not full >> annihilate & 1:
        return None, 0
    sign = (full & ((1 << annihilate) - 1)).bit_count()
    full ^= 1 << annihilate
    if full >> create & 1:
        return None, 0
    sign += (full & ((1 << create) - 1)).bit_count()
    full |= 1 << create
    return Determinant.from_full_mask(full, n_orbitals), -1 if sign & 1 else 1


def _between(mask: int, i: int, j: int) -> int:
    """Number of set bits strictly between positions ``i`` and ``j``."""
    lo, hi = (i, j) if i < j else (j, i)
    return (mask & ((1 << hi) - 1) & ~((1 << (lo + 1)) - 1)).bit_count()


def _single_sign(full: int, i: int, a: int) -> int:
    return -1 if _between(full, i, a) & 1 else 1


def enumerate_singles(d: Determinant, n_orbitals: int) -> list[tuple[Determinant, int]]:
    """All spin-preserving single excitations of ``d`` with their signs."""
    out = []
    full = d.full_mask(n_orbitals)
    everything = (1 << n_orbitals) - 1
    for spin, mask in ((0, d.alpha), (1, d.beta)):
        offset = spin * n_orbitals
        holes = bits(mask)
        particles = bits(everything & ~mask)
        for i in holes:
            for a in particles:
                new = mask ^ (1 << i) ^ (1 << a)
                det = Determinant(new, d.beta) if spin == 0 else Determinant(d.alpha, new)
                out.append((det, _single_sign(full, i + offset, a + offset)))
    return out


def enumerate_doubles(d: Determinant, n_orbitals: int) -> list[tuple[Determinant, int]]:
    """All spin-preserving double excitations (aa, bb and ab) of ``d``."""
    out = []
    m = n_orbitals
    everything = (1 << m) - 1
    occ = (bits(d.alpha), bits(d.beta))
    vir = (bits(everything & ~d.alpha), bits(everything & ~d.beta))
    for spin in (0, 1):
        offset = spin * m
        for i, j in combinations(occ[spin], 2):
            for a, b in combinations(vir[spin], 2):
                det, s1 = apply_excitation(d, a + offset, i + offset, m)
                det, s2 = apply_excitation(det, b + offset, j + offset, m)
                out.append((det, s1 * s2))
    for i in occ[0]:
        for a in vir[0]:
            mid, s1 = apply_excitation(d, a, i, m)
            for j in occ[1]:
                for b in vir[1]:
                    det, s2 = apply_excitation(mid, b + m, j + m, m)
                    out.append((det, s1 * s2))
    return out


def connected_determinants(d: Determinant, n_orbitals: int) -> Iterator[Determinant]:
    """Determinants reachable from ``d`` by one single or double excitation."""
    for det, _ in enumerate_singles(d, n_orbitals):
        yield det
    for det, _ in enumerate_doubles(d, n_orbitals):
        yield det


def diagonal_element(H: MolecularHamiltonian, d: Determinant) -> float:
    h, eri = H.h, H.eri
    occ_a, occ_b = bits(d.alpha), bits(d.beta)
    occ = occ_a + occ_b
    one = sum(h[i, i] for i in occ)
    coulomb = sum(eri[i, i, j, j] for i in occ for j in occ)
    exchange = sum(eri[i, j, j, i] for i in occ_a for j in occ_a)
    exchange += sum(eri[i, j, j, i] for i in occ_b for j in occ_b)
    return float(one + 0.5 * (coulomb - exchange))


def slater_condon_element(H: MolecularHamiltonian, a: Determinant, b: Determinant) -> float:
    """Matrix element ``<a|H|b>`` without the constant ``e_nuc``.

    Pairs differing by more than a double excitation are exactly zero.
    """
    if excitation_degree(a, b) > 2:
        return 0.0
    check_valid(a, H)
    check_valid(b, H)
    return matrix_element(H, a, b)


def matrix_element(H: MolecularHamiltonian, a: Determinant, b: Determinant) -> float:
    """:func:`slater_condon_element` without validating the determinants."""
    m = H.n_orbitals
    da, db = a.alpha ^ b.alpha, a.beta ^ b.beta
    degree = (da.bit_count() + db.bit_count()) // 2
    if degree > 2:
        return 0.0
    if degree == 0:
        return diagonal_element(H, a)

    h, eri = H.h, H.eri
    full = b.full_mask(m)
    if degree == 1:
        same, other, offset = (b.alpha, b.beta, 0) if da else (b.beta, b.alpha, m)
        diff = da or db
        i = (same & diff).bit_length() - 1
        p = (diff & ~same).bit_length() - 1
        sign = _single_sign(full, i + offset, p + offset)
        value = h[i, p]
        for j in bits(same):
            value += eri[i, p, j, j] - eri[i, j, j, p]
        for j in bits(other):
            value += eri[i, p, j, j]
        return float(sign * value)

    if da and db:
        # One alpha and one beta electron moved.
        i = (b.alpha & da).bit_length() - 1
        p = (da & ~b.alpha).bit_length() - 1
        j = (b.beta & db).bit_length() - 1
        q = (db & ~b.beta).bit_length() - 1
        mid, s1 = apply_excitation(b, p, i, m)
        _, s2 = apply_excitation(mid, q + m, j + m, m)
        return float(s1 * s2 * eri[i, p, j, q])

    same, offset, diff = (b.alpha, 0, da) if da else (b.beta, m, db)
    i, j = bits(same & diff)
    p, q = bits(diff & ~same)
    mid, s1 = apply_excitation(b, p + offset, i + offset, m)
    _, s2 = apply_excitation(mid, q + offset, j + offset, m)
    return float(s1 * s2 * (eri[i, p, j, q] - eri[i, q, j, p]))


def fci_space(n_orbitals: int, n_alpha: int, n_beta: int) -> list[Determinant]:
    """Every determinant with the given electron counts, sorted by bitmask."""
    alphas = [sum(1 << p for p in c) for c in combinations(range(n_orbitals), n_alpha)]
    betas = [sum(1 << p for p in c) for c in combinations(range(n_orbitals), n_beta)]
    return sorted(Determinant(a, b) for a in alphas for b in betas)
