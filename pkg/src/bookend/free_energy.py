"""Free-energy estimators: quadrature TI, self-consistent MBAR and cycle closure.

All MBAR inputs are reduced potentials ``u = beta * U``; results are
reported in energy units (divided by ``beta``) as Helmholtz free energies.
No Helmholtz-to-Gibbs conversion is applied.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
from scipy.special import logsumexp

from bookend.errors import ConvergenceError, ValidationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LambdaSchedule:
    """Coupling values, optionally with quadrature weights."""

    lambdas: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        lambdas = tuple(float(x) for x in self.lambdas)
        if not lambdas:
            raise ValidationError("a schedule needs at least one lambda")
        if any(not 0.0 <= x <= 1.0 for x in lambdas):
            raise ValidationError("lambdas must lie in [0, 1]")
        if any(b <= a for a, b in zip(lambdas, lambdas[1:])):
            raise ValidationError("lambdas must be strictly increasing")
        object.__setattr__(self, "lambdas", lambdas)
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            if len(weights) != len(lambdas):
                raise ValidationError("weights and lambdas differ in length")
            object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.lambdas)


GAUSS_7 = LambdaSchedule(
    (0.025, 0.130, 0.297, 0.500, 0.703, 0.870, 0.975),
    (0.065, 0.140, 0.191, 0.209, 0.191, 0.140, 0.065),
)
"""Seven-point Gaussian quadrature on [0, 1] as printed to three decimals."""

MBAR_LADDER = LambdaSchedule((0.0, 0.2, 0.4, 0.6, 0.8, 1.0))
"""Six equally spaced coupling windows including both end states."""


def ti_integrate(schedule: LambdaSchedule, means: Sequence[float]) -> float:
    """Quadrature estimate ``sum_i c_i <dU/dlambda>_i``.

    The dot product is accumulated in decimal arithmetic on the shortest
    float representations, so coefficient sums come out exactly as printed.
    """
    if schedule.weights is None:
        raise ValidationError("schedule has no quadrature weights")
    if len(means) != len(schedule):
        raise ValidationError(f"expected {len(schedule)} window means, got {len(means)}")
    with localcontext() as ctx:
        ctx.prec = 60
        total = sum(
            (Decimal(repr(float(c))) * Decimal(repr(float(m))) for c, m in zip(schedule.weights, means)),
            Decimal(0),
        )
    return float(total)


@dataclass(frozen=True, eq=False)
class ReducedPotentialMatrix:
    """``u[k, n] = beta * U_k(x_n)`` over all pooled samples.

    Samples are ordered by the state that generated them; ``counts[k]`` is
    the number contributed by state ``k``.
    """

    u: np.ndarray
    counts: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        if u.ndim != 2:
            raise ValidationError("u must be a K x N matrix")
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (u.shape[0],):
            raise ValidationError("counts must have one entry per state")
        if np.any(counts < 0) or counts.sum() != u.shape[1]:
            raise ValidationError("counts must be non-negative and sum to the sample count")
        if not np.all(np.isfinite(u)):
            raise ValidationError("reduced potentials must be finite")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        u.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "counts", counts)

    @property
    def n_states(self) -> int:
        return self.u.shape[0]

    def state_of_sample(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_states), self.counts)


@dataclass(frozen=True)
class FreeEnergyResult:
    """Per-state free energies in energy units with ``free_energies[0] == 0``."""

    free_energies: np.ndarray
    beta: float
    iterations: int
    residual: float
    warnings: list[str] = field(default_factory=list)

    def delta(self, i: int, j: int) -> float:
        return mbar_delta(self, i, j)

    def delta_matrix(self) -> np.ndarray:
        a = self.free_energies
        return a[None, :] - a[:, None]

    def to_json(self) -> dict:
        return {
            "free_energies": self.free_energies.tolist(),
            "delta_end_to_end": self.delta(0, len(self.free_energies) - 1),
            "beta": self.beta,
            "gauge": "A_0 = 0",
            "quantity": "Helmholtz",
            "iterations": self.iterations,
            "residual": self.residual,
            "warnings": list(self.warnings),
        }


def _log_denominator(u: np.ndarray, log_n: np.ndarray, f: np.ndarray) -> np.ndarray:
    return logsumexp(log_n[:, None] + f[:, None] - u, axis=0)


def _mbar_map(u: np.ndarray, log_n: np.ndarray, f: np.ndarray) -> np.ndarray:
    new = -logsumexp(-u - _log_denominator(u, log_n, f)[None, :], axis=1)
    return new - new[0]


def mbar_solve(
    data: ReducedPotentialMatrix, tol: float = 1e-10, max_iter: int = 100_000
) -> FreeEnergyResult:
    """Solve the MBAR self-consistency equations by direct iteration.

    Starts from zero reduced free energies and repeats the map, gauge-fixed
    to state 0 after every sweep, until the largest update is below ``tol``
    (reduced units). Every sum is evaluated with log-sum-exp.

    Raises:
        ValidationError: if no state contributes samples.
        ConvergenceError: if ``max_iter`` sweeps pass without converging.
    """
    u, counts = data.u, data.counts
    if counts.sum() == 0:
        raise ValidationError("MBAR needs at least one sample")
    with np.errstate(divide="ignore"):
        log_n = np.log(counts.astype(float))
    f = np.zeros(data.n_states)
    residual = math.inf
    for it in range(1, max_iter + 1):
        new = _mbar_map(u, log_n, f)
        residual = float(np.max(np.abs(new - f)))
        f = new
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"MBAR did not converge in {max_iter} sweeps", residual=residual, iterations=max_iter
        )
    fixed_point = float(np.max(np.abs(_mbar_map(u, log_n, f) - f)))
    warnings = _overlap_warnings(u, log_n, f, counts)
    for w in warnings:
        log.warning(w)
    return FreeEnergyResult(f / data.beta, data.beta, it, fixed_point, warnings)


def _overlap(u, log_n, f, counts) -> np.ndarray:
    log_w = f[:, None] - u - _log_denominator(u, log_n, f)[None, :]
    w = np.exp(log_w)
    return (w @ w.T) * counts[None, :]


def overlap_matrix(data: ReducedPotentialMatrix, result: FreeEnergyResult) -> np.ndarray:
    """MBAR overlap ``O_ij = sum_n W_ni W_nj N_j``; rows sum to one."""
    with np.errstate(divide="ignore"):
        log_n = np.log(data.counts.astype(float))
    return _overlap(data.u, log_n, result.free_energies * data.beta, data.counts)


def _overlap_warnings(u, log_n, f, counts, threshold: float = 1e-6) -> list[str]:
    if len(f) < 2:
        return []
    o = _overlap(u, log_n, f, counts)
    return [
        f"state {i} has negligible overlap with every other state"
        for i in range(len(f))
        if np.max(np.delete(o[i], i)) < threshold
    ]


def mbar_delta(result: FreeEnergyResult, i: int, j: int) -> float:
    """``A_j - A_i``."""
    k = len(result.free_energies)
    if not (0 <= i < k and 0 <= j < k):
        raise IndexError(f"state index outside [0, {k})")
    return float(result.free_energies[j] - result.free_energies[i])


def exponential_average(u_from: np.ndarray, u_to: np.ndarray, beta: float = 1.0) -> float:
    """One-sided perturbation estimate ``A_to - A_from`` from samples of ``from``.

    Both arrays hold reduced potentials of the same samples.
    """
    du = np.asarray(u_to, dtype=float) - np.asarray(u_from, dtype=float)
    if du.size == 0:
        raise ValidationError("no samples to average")
    return float(-(logsumexp(-du) - math.log(du.size)) / beta)


def bookend_combine(
    ddg_mm: float,
    corr_complex_a: float,
    corr_complex_b: float,
    corr_water_a: float,
    corr_water_b: float,
) -> float:
    """Close the cycle: MM result plus the complex-leg minus the water-leg end-state corrections."""
    values = (ddg_mm, corr_complex_a, corr_complex_b, corr_water_a, corr_water_b)
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("all free energies must be finite")
    return ddg_mm + (corr_complex_b - corr_complex_a) - (corr_water_b - corr_water_a)


def write_ukn_csv(data: ReducedPotentialMatrix, fh: TextIO, x: np.ndarray | None = None) -> None:
    """One row per sample: ``state,sample[,x],u_0..u_{K-1}``."""
    writer = csv.writer(fh, lineterminator="\n")
    k = data.n_states
    header = ["state", "sample"] + (["x"] if x is not None else []) + [f"u_{i}" for i in range(k)]
    writer.writerow(header)
    states = data.state_of_sample()
    local = np.concatenate([np.arange(c) for c in data.counts]) if len(states) else states
    for n in range(data.u.shape[1]):
        row = [int(states[n]), int(local[n])]
        if x is not None:
            row.append(repr(float(x[n])))
        writer.writerow(row + [repr(float(v)) for v in data.u[:, n]])


def parse_ukn_csv(text: str, beta: float = 1.0) -> ReducedPotentialMatrix:
    """Read the format of :func:`write_ukn_csv`; per-state counts come from ``state``.

    Rows may arrive in any order; they are regrouped by state, keeping file
    order within a state. An ``x`` column is ignored.
    """
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("u_kn file is empty") from None
    header = [h.strip() for h in header]
    if header[:2] != ["state", "sample"]:
        raise ValidationError("line 1: header must start with 'state,sample'")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u_")]
    names = [header[i] for i in u_cols]
    if not names or names != [f"u_{i}" for i in range(len(names))]:
        raise ValidationError("line 1: expected columns u_0..u_{K-1}")
    k = len(names)
    rows: list[tuple[int, list[float]]] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or not "".join(row).strip():
            continue
        if len(row) != len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            state = int(row[0])
            values = [float(row[i]) for i in u_cols]
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        if not 0 <= state < k:
            raise ValidationError(f"line {lineno}: state {state} outside [0, {k})")
        rows.append((state, values))
    rows.sort(key=lambda r: r[0])
    counts = np.bincount([s for s, _ in rows], minlength=k)
    u = np.array([v for _, v in rows], dtype=float).reshape(len(rows), k).T
    return ReducedPotentialMatrix(u, counts, beta)


def load_ukn_csv(path: str | Path, beta: float = 1.0) -> ReducedPotentialMatrix:
    return parse_ukn_csv(Path(path).read_text(), beta)
