"""Heat-bath configuration interaction.

The variational space grows by every single or double excitation ``a`` of
the current determinants whose first-order importance
``max_k |<a|H|D_k> c_k|`` exceeds the cutoff. No perturbative correction
is applied.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import TextIO

from bookend.determinant import (
    Determinant,
    check_valid,
    connected_determinants,
    hartree_fock_determinant,
    matrix_element,
)
from bookend.eigensolver import AUTO_DENSE_LIMIT, SubspaceWavefunction, solve_subspace
from bookend.errors import ConvergenceError
from bookend.integrals import MolecularHamiltonian


@dataclass(frozen=True)
class HciIteration:
    iteration: int
    n_dets: int
    energy: float
    wall_time: float


@dataclass(frozen=True)
class HciResult:
    energy: float
    wavefunction: SubspaceWavefunction
    epsilon: float
    trace: list[HciIteration] = field(default_factory=list)


def heatbath_expand(
    H: MolecularHamiltonian, psi: SubspaceWavefunction, epsilon: float
) -> list[Determinant]:
    """Current determinants plus every connection with ``|H_ak c_k| > epsilon``.

    Returns the union sorted by bitmask.
    """
    current = set(psi.dets)
    if math.isinf(epsilon):
        return sorted(current)
    m = H.n_orbitals
    importance: dict[Determinant, float] = {}
    for det, c in zip(psi.dets, psi.coeffs):
        c = abs(float(c))
        if c == 0.0:
            continue
        for a in connected_determinants(det, m):
            if a in current:
                continue
            value = abs(matrix_element(H, a, det)) * c
            if value > importance.get(a, 0.0):
                importance[a] = value
    added = {a for a, value in importance.items() if value > epsilon}
    return sorted(current | added)


def hci_solve(
    H: MolecularHamiltonian,
    epsilon: float,
    initial: Determinant | None = None,
    *,
    tol: float = 1e-8,
    max_rounds: int = 200,
    dense_limit: int = AUTO_DENSE_LIMIT,
) -> HciResult:
    """Alternate diagonalization and heat-bath growth until the space is stable.

    Args:
        H: Hamiltonian to solve.
        epsilon: Selection cutoff (Hartree); ``inf`` keeps the initial space.
        initial: Starting determinant, the aufbau reference by default.
        tol: Davidson residual tolerance for large subspaces.
        max_rounds: Cap on expansion rounds.
        dense_limit: Dense diagonalization up to this subspace size.

    Returns:
        The variational energy (``e_nuc`` included), wavefunction and the
        per-round trace.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if initial is None:
        initial = hartree_fock_determinant(H.n_alpha, H.n_beta)
    check_valid(initial, H)

    space = [initial]
    trace: list[HciIteration] = []
    start = time.perf_counter()
    for round_ in range(max_rounds):
        energy, psi = solve_subspace(H, space, tol=tol, dense_limit=dense_limit)
        trace.append(HciIteration(round_, len(space), energy, time.perf_counter() - start))
        grown = heatbath_expand(H, psi, epsilon)
        if len(grown) == len(space):
            return HciResult(energy, psi, epsilon, trace)
        space = grown
    raise ConvergenceError(f"HCI space still growing after {max_rounds} rounds")


TRACE_COLUMNS = ("iteration", "n_dets", "energy", "wall_time")


def write_trace_csv(trace: list[HciIteration], fh: TextIO, *, include_time: bool = True) -> None:
    """Per-round CSV; ``include_time=False`` drops the nondeterministic column."""
    columns = TRACE_COLUMNS if include_time else TRACE_COLUMNS[:3]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(columns)
    for row in trace:
        values = [row.iteration, row.n_dets, repr(row.energy), f"{row.wall_time:.6f}"]
        writer.writerow(values[: len(columns)])
