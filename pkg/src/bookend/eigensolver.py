"""Projected Hamiltonians over determinant subspaces and their ground states."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from bookend.determinant import (
    Determinant,
    check_valid,
    diagonal_element,
    fci_space,
    matrix_element,
)
from bookend.errors import ConvergenceError, ValidationError
from bookend.integrals import MolecularHamiltonian

DENSE_LIMIT = 4096
"""Largest dimension :func:`dense_ground` will accept."""

AUTO_DENSE_LIMIT = 512
"""Subspaces up to this size are diagonalized densely by :func:`solve_subspace`."""


@dataclass(frozen=True, eq=False)
class SubspaceWavefunction:
    """Real CI vector over an ordered list of distinct determinants."""

    dets: tuple[Determinant, ...]
    coeffs: np.ndarray
    n_orbitals: int

    def __post_init__(self):
        dets = tuple(Determinant(*d) for d in self.dets)
        coeffs = np.array(self.coeffs, dtype=float)
        if coeffs.shape != (len(dets),):
            raise ValidationError("coefficient vector does not match the determinant list")
        if len(set(dets)) != len(dets):
            raise ValidationError("determinants in a wavefunction must be distinct")
        if abs(coeffs @ coeffs - 1.0) > 1e-10:
            raise ValidationError(f"wavefunction norm^2 is {coeffs @ coeffs}, expected 1")
        coeffs.setflags(write=False)
        object.__setattr__(self, "dets", dets)
        object.__setattr__(self, "coeffs", coeffs)

    def __len__(self):
        return len(self.dets)

    def as_dict(self) -> dict[Determinant, float]:
        return dict(zip(self.dets, self.coeffs.tolist()))


@dataclass(frozen=True)
class Eigenpair:
    """Lowest eigenpair of a matrix; ``energy`` includes any constant shift."""

    energy: float
    vector: np.ndarray
    residual: float
    iterations: int


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def build_subspace_matrix(H: MolecularHamiltonian, dets: Sequence[Determinant]) -> sp.csr_matrix:
    """Sparse symmetric ``<S_k|H|S_l>`` (no ``e_nuc``) over the ordered subspace."""
    dets = [Determinant(*d) for d in dets]
    if not dets:
        raise ValidationError("subspace is empty")
    if len(set(dets)) != len(dets):
        raise ValidationError("subspace contains duplicate determinants")
    for d in dets:
        check_valid(d, H)
    n = len(dets)
    alpha = np.array([d.alpha for d in dets], dtype=np.uint64)
    beta = np.array([d.beta for d in dets], dtype=np.uint64)
    rows, cols, vals = [], [], []
    for k, ket in enumerate(dets):
        rows.append(k)
        cols.append(k)
        vals.append(diagonal_element(H, ket))
        if k + 1 == n:
            break
        deg = np.bitwise_count(alpha[k + 1:] ^ alpha[k]).astype(np.int64)
        deg += np.bitwise_count(beta[k + 1:] ^ beta[k])
        for offset in np.flatnonzero(deg <= 4):
            l = k + 1 + int(offset)
            value = matrix_element(H, dets[l], ket)
            if value != 0.0:
                rows += [k, l]
                cols += [l, k]
                vals += [value, value]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def dense_ground(matrix, *, e_nuc: float = 0.0, dense_limit: int = DENSE_LIMIT) -> Eigenpair:
    """Exact lowest eigenpair by dense symmetric diagonalization."""
    n = matrix.shape[0]
    if n > dense_limit:
        raise ValidationError(f"dimension {n} exceeds the dense limit {dense_limit}")
    a = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    w, v = scipy.linalg.eigh(a, subset_by_index=[0, 0])
    vec = _fix_sign(v[:, 0])
    residual = float(np.linalg.norm(a @ vec - w[0] * vec))
    return Eigenpair(float(w[0]) + e_nuc, vec, residual, 1)


def davidson_ground(
    matrix,
    *,
    e_nuc: float = 0.0,
    tol: float = 1e-8,
    max_iter: int = 1000,
    block_size: int = 4,
    max_space: int = 20,
) -> Eigenpair:
    """Lowest eigenpair of a real symmetric matrix by Davidson iteration.

    Starts from unit vectors on the smallest diagonal entries and expands
    with diagonally preconditioned residuals. When the search space would
    exceed ``max_space`` vectors it collapses onto the current and previous
    Ritz vectors. Converged when ``||(A - theta) x|| <= tol``.

    Raises:
        ConvergenceError: if ``max_iter`` iterations pass without converging.
    """
    a = matrix if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    n = a.shape[0]
    if n < 1 or a.shape != (n, n):
        raise ValidationError(f"expected a nonempty square matrix, got shape {a.shape}")
    diag = np.asarray(a.diagonal(), dtype=float)

    k = min(block_size, n)
    start = np.argsort(diag, kind="stable")[:k]
    V = np.zeros((n, k))
    V[start, np.arange(k)] = 1.0
    AV = np.asarray(a @ V)
    x_prev = None
    rnorm = np.inf

    for it in range(1, max_iter + 1):
        T = V.T @ AV
        w, s = np.linalg.eigh((T + T.T) / 2)
        theta, y = w[0], s[:, 0]
        x = V @ y
        ax = AV @ y
        r = ax - theta * x
        rnorm = float(np.linalg.norm(r))
        if rnorm <= tol:
            x = _fix_sign(x / np.linalg.norm(x))
            return Eigenpair(float(theta) + e_nuc, x, rnorm, it)

        if V.shape[1] + 1 > max_space:
            keep = [x] if x_prev is None else [x, x_prev]
            V = _orthonormal_columns(np.column_stack(keep))
            AV = np.asarray(a @ V)
        x_prev = x

        denom = theta - diag
        small = np.abs(denom) < 1e-8
        denom[small] = np.where(denom[small] < 0, -1e-8, 1e-8)
        t = _orthogonalize(r / denom, V)
        if t is None:
            t = _orthogonalize(r, V)
        if t is None:
            raise ConvergenceError(
                "Davidson search space cannot be expanded", residual=rnorm, iterations=it
            )
        V = np.column_stack([V, t])
        AV = np.column_stack([AV, np.asarray(a @ t).ravel()])

    raise ConvergenceError(
        f"Davidson did not converge in {max_iter} iterations", residual=rnorm, iterations=max_iter
    )


def _orthogonalize(t: np.ndarray, V: np.ndarray) -> np.ndarray | None:
    norm0 = np.linalg.norm(t)
    if norm0 == 0.0:
        return None
    t = t / norm0
    for _ in range(2):
        t = t - V @ (V.T @ t)
    norm = np.linalg.norm(t)
    if norm < 1e-10:
        return None
    return t / norm


def _orthonormal_columns(M: np.ndarray) -> np.ndarray:
    q, r = np.linalg.qr(M)
    keep = np.abs(np.diag(r)) > 1e-10
    return q[:, keep]


def solve_subspace(
    H: MolecularHamiltonian,
    dets: Sequence[Determinant],
    *,
    tol: float = 1e-8,
    dense_limit: int = AUTO_DENSE_LIMIT,
    max_iter: int = 1000,
) -> tuple[float, SubspaceWavefunction]:
    """Ground state of ``H`` projected onto ``dets``; energy includes ``e_nuc``.

    Dense diagonalization up to ``dense_limit`` determinants, Davidson above.
    """
    dets = tuple(Determinant(*d) for d in dets)
    matrix = build_subspace_matrix(H, dets)
    if len(dets) <= dense_limit:
        pair = dense_ground(matrix, e_nuc=H.e_nuc, dense_limit=max(dense_limit, len(dets)))
    else:
        pair = davidson_ground(matrix, e_nuc=H.e_nuc, tol=tol, max_iter=max_iter)
    return pair.energy, SubspaceWavefunction(dets, pair.vector, H.n_orbitals)


def fci_ground(H: MolecularHamiltonian, **kwargs) -> tuple[float, SubspaceWavefunction]:
    """Ground state over the full determinant space of ``H``."""
    return solve_subspace(H, fci_space(H.n_orbitals, H.n_alpha, H.n_beta), **kwargs)


def occupancies(psi: SubspaceWavefunction) -> np.ndarray:
    """Spin-orbital occupations ``n = sum_k c_k^2 x(det_k)`` in canonical order."""
    m = psi.n_orbitals
    n = np.zeros(2 * m)
    weights = psi.coeffs ** 2
    for d, w in zip(psi.dets, weights):
        for p in range(m):
            if d.alpha >> p & 1:
                n[p] += w
            if d.beta >> p & 1:
                n[m + p] += w
    return n
