"""Exact statevector stand-in for the sampling device.

Prepares the local unitary cluster Jastrow (LUCJ) state

    e^{-K2} [ e^{K} e^{iJ} e^{-K} ]_reps |reference>

on ``2M`` spin-orbital modes, samples it by the Born rule and corrupts the
samples with independent bit flips. Statevector index bit ``j`` is mode
``j`` in canonical order (alpha block, then beta block).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg

from bookend.determinant import (
    Determinant,
    fci_space,
    from_bitstring,
    hartree_fock_determinant,
    to_bitstring,
)
from bookend.eigensolver import DENSE_LIMIT, build_subspace_matrix, dense_ground
from bookend.errors import ValidationError
from bookend.integrals import MolecularHamiltonian
from bookend.samples import SampleSet

MAX_ORBITALS = 8


def _check_square(name: str, a: np.ndarray, m: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (m, m):
        raise ValidationError(f"{name} must be {m}x{m}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class LucjParameters:
    """Generators of the LUCJ ansatz.

    Attributes:
        n_orbitals: Number of spatial orbitals ``M``.
        k_ops: One real antisymmetric ``M x M`` orbital-rotation generator per rep.
        j_ops: One real symmetric ``M x M`` density-density matrix per rep.
        final_k: Antisymmetric generator of the closing orbital rotation.
        reference: Starting determinant (closed-shell RHF configuration).
    """

    n_orbitals: int
    k_ops: tuple[np.ndarray, ...]
    j_ops: tuple[np.ndarray, ...]
    final_k: np.ndarray
    reference: Determinant

    def __post_init__(self):
        m = self.n_orbitals
        if not 1 <= m <= MAX_ORBITALS:
            raise ValidationError(f"statevector simulation supports 1..{MAX_ORBITALS} orbitals, got {m}")
        if len(self.k_ops) != len(self.j_ops):
            raise ValidationError("need one K and one J matrix per repetition")
        ks = tuple(_check_square("K", k, m) for k in self.k_ops)
        js = tuple(_check_square("J", j, m) for j in self.j_ops)
        final = _check_square("K2", self.final_k, m)
        for k in ks + (final,):
            if np.max(np.abs(k + k.T), initial=0.0) > 1e-12:
                raise ValidationError("orbital-rotation generators must be antisymmetric")
        for j in js:
            if np.max(np.abs(j - j.T), initial=0.0) > 1e-12:
                raise ValidationError("density-density matrices must be symmetric")
        ref = Determinant(*self.reference)
        if ref.alpha >> m or ref.beta >> m:
            raise ValidationError("reference determinant uses orbitals beyond n_orbitals")
        object.__setattr__(self, "k_ops", ks)
        object.__setattr__(self, "j_ops", js)
        object.__setattr__(self, "final_k", final)
        object.__setattr__(self, "reference", ref)

    @property
    def reps(self) -> int:
        return len(self.k_ops)

    @classmethod
    def zeros(cls, n_orbitals: int, n_alpha: int, n_beta: int, reps: int = 2) -> "LucjParameters":
        z = np.zeros((n_orbitals, n_orbitals))
        return cls(n_orbitals, (z,) * reps, (z,) * reps, z, hartree_fock_determinant(n_alpha, n_beta))

    @classmethod
    def random(
        cls,
        n_orbitals: int,
        n_alpha: int,
        n_beta: int,
        *,
        reps: int = 2,
        magnitude: float = 0.1,
        seed: int | None = None,
        pattern: str = "full",
    ) -> "LucjParameters":
        """Seeded Gaussian generators scaled by ``magnitude``.

        ``pattern="nearest"`` keeps only on-site and nearest-neighbour
        density-density terms (``|p - q| <= 1``).
        """
        if pattern not in ("full", "nearest"):
            raise ValidationError(f"unknown J pattern {pattern!r}")
        rng = np.random.default_rng(seed)
        m = n_orbitals

        def antisym():
            a = rng.normal(size=(m, m))
            return magnitude * (a - a.T) / 2

        def sym():
            a = rng.normal(size=(m, m))
            a = magnitude * (a + a.T) / 2
            if pattern == "nearest":
                idx = np.arange(m)
                a[np.abs(idx[:, None] - idx[None, :]) > 1] = 0.0
            return a

        ks, js = [], []
        for _ in range(reps):
            ks.append(antisym())
            js.append(sym())
        return cls(m, tuple(ks), tuple(js), antisym(), hartree_fock_determinant(n_alpha, n_beta))

    def to_dict(self) -> dict:
        return {
            "n_orbitals": self.n_orbitals,
            "reference": to_bitstring(self.reference, self.n_orbitals),
            "reps": [{"K": k.tolist(), "J": j.tolist()} for k, j in zip(self.k_ops, self.j_ops)],
            "K2": self.final_k.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LucjParameters":
        try:
            m = int(data["n_orbitals"])
            reps = data["reps"]
            return cls(
                m,
                tuple(np.array(r["K"], dtype=float) for r in reps),
                tuple(np.array(r["J"], dtype=float) for r in reps),
                np.array(data["K2"], dtype=float),
                from_bitstring(data["reference"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed LUCJ parameter data: {exc}") from None


def load_parameters(path: str | Path) -> LucjParameters:
    return LucjParameters.from_dict(json.loads(Path(path).read_text()))


def save_parameters(params: LucjParameters, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=1) + "\n")


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    n_orbitals: int

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def amplitude(self, det: Determinant) -> complex:
        return complex(self.amplitudes[det.full_mask(self.n_orbitals)])


def givens_decomposition(u: np.ndarray) -> tuple[list[tuple[int, float, float]], np.ndarray]:
    """Factor a real orthogonal ``u`` as ``R_1 R_2 ... R_n diag(d)``.

    Each ``R_k = (p, c, s)`` is the identity except for rows/columns
    ``p, p+1``, which hold ``[[c, -s], [s, c]]``; ``d`` has entries +-1.
    """
    a = np.array(u, dtype=float)
    m = a.shape[0]
    rotations = []
    for j in range(m - 1):
        for i in range(m - 1, j, -1):
            x, y = a[i - 1, j], a[i, j]
            if y == 0.0:
                continue
            r = np.hypot(x, y)
            c, s = x / r, y / r
            top = c * a[i - 1] + s * a[i]
            bottom = -s * a[i - 1] + c * a[i]
            a[i - 1], a[i] = top, bottom
            rotations.append((i - 1, c, s))
    return rotations, np.sign(np.diag(a))


@lru_cache(maxsize=None)
def _mode_bits(n_modes: int) -> np.ndarray:
    idx = np.arange(1 << n_modes)
    return ((idx[:, None] >> np.arange(n_modes)) & 1).astype(np.int8)


def _rotate_adjacent(vec: np.ndarray, p: int, c: float, s: float, n_modes: int) -> None:
    bits = _mode_bits(n_modes)
    a = np.flatnonzero((bits[:, p] == 1) & (bits[:, p + 1] == 0))
    b = a ^ ((1 << p) | (1 << (p + 1)))
    va, vb = vec[a].copy(), vec[b]
    vec[a] = c * va - s * vb
    vec[b] = s * va + c * vb


def apply_orbital_rotation(vec: np.ndarray, u: np.ndarray, n_orbitals: int) -> np.ndarray:
    """Apply the Fock-space image of the orthogonal ``u`` to both spin sectors.

    Realized as the Givens factorization of ``u``, each factor a two-mode
    rotation between neighbouring modes.
    """
    out = np.array(vec, dtype=complex)
    n_modes = 2 * n_orbitals
    rotations, diag = givens_decomposition(u)
    bits = _mode_bits(n_modes)
    for offset in (0, n_orbitals):
        for p in np.flatnonzero(diag < 0):
            out[bits[:, p + offset] == 1] *= -1
        for p, c, s in reversed(rotations):
            _rotate_adjacent(out, p + offset, c, s, n_modes)
    return out


def density_phases(j: np.ndarray, n_orbitals: int) -> np.ndarray:
    """Phase angle of every basis state under the density-density operator.

    ``sum_{p<q} J_pq n_p n_q + sum_p J_pp n_pa n_pb`` with ``n_p`` the total
    occupation of spatial orbital ``p``.
    """
    m = n_orbitals
    bits = _mode_bits(2 * m).astype(float)
    na, nb = bits[:, :m], bits[:, m:]
    n = na + nb
    off = j - np.diag(np.diag(j))
    return 0.5 * np.einsum("ip,pq,iq->i", n, off, n) + (na * nb) @ np.diag(j)


def lucj_prepare(params: LucjParameters) -> StateVector:
    m = params.n_orbitals
    vec = np.zeros(1 << (2 * m), dtype=complex)
    vec[params.reference.full_mask(m)] = 1.0
    for k, j in zip(params.k_ops, params.j_ops):
        vec = apply_orbital_rotation(vec, scipy.linalg.expm(-k), m)
        vec = vec * np.exp(1j * density_phases(j, m))
        vec = apply_orbital_rotation(vec, scipy.linalg.expm(k), m)
    vec = apply_orbital_rotation(vec, scipy.linalg.expm(-params.final_k), m)
    return StateVector(vec, m)


def _sample_indices(probs: np.ndarray, shots: int, rng: np.random.Generator) -> dict[int, int]:
    if shots < 1:
        raise ValidationError("shots must be at least 1")
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    counts = rng.multinomial(shots, probs)
    return {int(i): int(counts[i]) for i in np.flatnonzero(counts)}


def born_sample(state: StateVector, shots: int, seed: int | None = None) -> SampleSet:
    """Draw ``shots`` computational-basis measurements with probability ``|amp|^2``."""
    rng = np.random.default_rng(seed)
    m = state.n_orbitals
    picked = _sample_indices(state.probabilities(), shots, rng)
    return SampleSet(
        {to_bitstring(Determinant.from_full_mask(i, m), m): c for i, c in picked.items()}, m
    )


def bitflip_noise(samples: SampleSet, p: float, seed: int | None = None) -> SampleSet:
    """Flip every bit of every shot independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"flip probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    bits, counts = samples.bit_matrix()
    shots = np.repeat(bits, counts, axis=0)
    flips = rng.random(shots.shape) < p
    noisy = shots ^ flips.astype(np.uint8)
    keys = ["".join("1" if x else "0" for x in row) for row in noisy]
    return SampleSet.from_shots(keys, samples.n_orbitals)


def exact_state_sample(H: MolecularHamiltonian, shots: int, seed: int | None = None) -> SampleSet:
    """Sample the dense FCI ground state of ``H`` (noiseless oracle sampler)."""
    space = fci_space(H.n_orbitals, H.n_alpha, H.n_beta)
    if len(space) > DENSE_LIMIT:
        raise ValidationError(f"FCI dimension {len(space)} exceeds the dense limit {DENSE_LIMIT}")
    pair = dense_ground(build_subspace_matrix(H, space), e_nuc=H.e_nuc)
    rng = np.random.default_rng(seed)
    picked = _sample_indices(pair.vector ** 2, shots, rng)
    m = H.n_orbitals
    return SampleSet({to_bitstring(space[i], m): c for i, c in picked.items()}, m)
