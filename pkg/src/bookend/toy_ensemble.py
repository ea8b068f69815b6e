"""One-dimensional surrogate ensembles with closed-form free energies.

Linear mixes of toy potentials are sampled with a Metropolis chain per
coupling window, and every pooled sample is evaluated under every window to
give the reduced-potential matrix consumed by MBAR.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence, TextIO

import numpy as np

from bookend.errors import ValidationError
from bookend.free_energy import LambdaSchedule, ReducedPotentialMatrix, write_ukn_csv

TARGET_ACCEPTANCE = 0.4
TUNE_BLOCK = 50


class ToyPotential(Protocol):
    def __call__(self, x): ...


@dataclass(frozen=True)
class Harmonic:
    """``k/2 (x - x0)^2``."""

    k: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValidationError(f"harmonic force constant must be positive, got {self.k}")

    def __call__(self, x):
        return 0.5 * self.k * (x - self.x0) ** 2


@dataclass(frozen=True)
class Quartic:
    """``a x^4 + b x^2``; ``a > 0`` keeps it confining."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValidationError(f"quartic coefficient must be positive, got {self.a}")

    def __call__(self, x):
        x2 = x * x
        return self.a * x2 * x2 + self.b * x2


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear table; infinite outside ``[grid[0], grid[-1]]``."""

    grid: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 2:
            raise ValidationError("tabulated potential needs matching 1-D grid and values")
        if np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(values)):
            raise ValidationError("grid must increase strictly and values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __call__(self, x):
        out = np.interp(x, self.grid, self.values)
        outside = (np.asarray(x) < self.grid[0]) | (np.asarray(x) > self.grid[-1])
        if np.ndim(out) == 0:
            return math.inf if outside else float(out)
        return np.where(outside, np.inf, out)


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must lie in [0, 1], got {lam}")


def _mix(e0, e1, lam: float):
    if lam == 0.0:
        return e0
    if lam == 1.0:
        return e1
    return (1.0 - lam) * e0 + lam * e1


def mixed_potential(u0: ToyPotential, u1: ToyPotential, lam: float, x):
    """``(1 - lam) U0(x) + lam U1(x)`` and its lambda derivative ``U1(x) - U0(x)``."""
    _check_lambda(lam)
    e0, e1 = u0(x), u1(x)
    return _mix(e0, e1, lam), e1 - e0


@dataclass(frozen=True)
class MixedPotential:
    u0: ToyPotential
    u1: ToyPotential
    lam: float

    def __post_init__(self):
        _check_lambda(self.lam)

    def __call__(self, x):
        return _mix(self.u0(x), self.u1(x), self.lam)


@dataclass(frozen=True, eq=False)
class ChainResult:
    samples: np.ndarray
    acceptance_rate: float
    step_size: float


def metropolis_chain(
    potential: ToyPotential,
    beta: float,
    n_samples: int,
    step_size: float = 1.0,
    burn_in: int = 1000,
    seed: int | np.random.SeedSequence | None = None,
    *,
    x0: float = 0.0,
    thin: int = 1,
) -> ChainResult:
    """Random-walk Metropolis with uniform proposals of half-width ``step_size``.

    During burn-in the step size is rescaled every block of proposals toward
    the target acceptance; it is frozen afterwards. ``thin`` keeps every
    ``thin``-th post-burn-in state.

    Returns:
        The retained coordinates, the post-burn-in acceptance rate and the
        tuned step size.
    """
    if n_samples < 1 or not beta > 0:
        raise ValidationError("n_samples and beta must be positive")
    if not step_size > 0 or burn_in < 0 or thin < 1:
        raise ValidationError("step_size must be positive, burn_in non-negative and thin >= 1")
    rng = np.random.default_rng(seed)
    x = float(x0)
    e = float(potential(x))
    if not math.isfinite(e):
        raise ValidationError(f"starting point {x0} has infinite energy")

    accepted_block = 0
    for step in range(1, burn_in + 1):
        trial = x + step_size * (2.0 * rng.random() - 1.0)
        e_trial = float(potential(trial))
        if e_trial <= e or rng.random() < math.exp(-beta * (e_trial - e)):
            x, e = trial, e_trial
            accepted_block += 1
        if step % TUNE_BLOCK == 0:
            rate = accepted_block / TUNE_BLOCK
            step_size *= math.exp(rate - TARGET_ACCEPTANCE)
            accepted_block = 0

    total = n_samples * thin
    steps = 2.0 * rng.random(total) - 1.0
    uniforms = rng.random(total)
    out = np.empty(n_samples)
    accepted = 0
    for i in range(total):
        trial = x + step_size * steps[i]
        e_trial = float(potential(trial))
        if e_trial <= e or uniforms[i] < math.exp(-beta * (e_trial - e)):
            x, e = trial, e_trial
            accepted += 1
        if (i + 1) % thin == 0:
            out[i // thin] = x
    return ChainResult(out, accepted / total, step_size)


def harmonic_free_energy(k: float, beta: float) -> float:
    """Configurational free energy ``-(1/beta) ln sqrt(2 pi / (beta k))`` of a 1-D spring."""
    if not (k > 0 and beta > 0):
        raise ValidationError("k and beta must be positive")
    return -0.5 * math.log(2.0 * math.pi / (beta * k)) / beta


def sample_windows(
    schedule: LambdaSchedule,
    u0: ToyPotential,
    u1: ToyPotential,
    beta: float,
    samples_per_state: int,
    seed: int | None = None,
    *,
    step_size: float = 1.0,
    burn_in: int = 1000,
    thin: int = 1,
    threads: int = 1,
) -> list[ChainResult]:
    """One independently seeded chain per window of ``schedule``."""
    streams = np.random.SeedSequence(seed).spawn(len(schedule))

    def run(args):
        lam, ss = args
        return metropolis_chain(
            MixedPotential(u0, u1, lam), beta, samples_per_state, step_size, burn_in, ss, thin=thin
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, zip(schedule.lambdas, streams)))


def reduced_matrix(
    schedule: LambdaSchedule,
    u0: ToyPotential,
    u1: ToyPotential,
    beta: float,
    windows: Sequence[np.ndarray],
) -> ReducedPotentialMatrix:
    """Evaluate every pooled sample under every window (window order preserved)."""
    if len(windows) != len(schedule):
        raise ValidationError("need one sample array per window")
    x = np.concatenate([np.asarray(w, dtype=float) for w in windows])
    e0, e1 = np.asarray(u0(x), dtype=float), np.asarray(u1(x), dtype=float)
    u = np.array([beta * _mix(e0, e1, lam) for lam in schedule.lambdas])
    return ReducedPotentialMatrix(u, [len(w) for w in windows], beta)


def generate_u_kn(
    schedule: LambdaSchedule,
    u0: ToyPotential,
    u1: ToyPotential,
    beta: float,
    samples_per_state: int,
    seed: int | None = None,
    *,
    stride: int = 1,
    **chain_options,
) -> ReducedPotentialMatrix:
    """Sample each window, keep every ``stride``-th frame and build the reduced matrix."""
    if stride < 1:
        raise ValidationError("stride must be at least 1")
    chains = sample_windows(schedule, u0, u1, beta, samples_per_state, seed, **chain_options)
    return reduced_matrix(schedule, u0, u1, beta, [c.samples[::stride] for c in chains])


def write_sample_archive(
    fh: TextIO,
    schedule: LambdaSchedule,
    u0: ToyPotential,
    u1: ToyPotential,
    beta: float,
    windows: Sequence[np.ndarray],
) -> ReducedPotentialMatrix:
    """CSV of ``state,sample,x,u_0..u_{K-1}``, readable as a u_kn file."""
    data = reduced_matrix(schedule, u0, u1, beta, windows)
    write_ukn_csv(data, fh, x=np.concatenate([np.asarray(w, dtype=float) for w in windows]))
    return data


def potential_from_dict(spec: dict) -> ToyPotential:
    """Build a potential from ``{"kind": "harmonic"|"quartic"|"tabulated", ...}``."""
    kind = spec.get("kind")
    try:
        if kind == "harmonic":
            return Harmonic(float(spec["k"]), float(spec.get("x0", 0.0)))
        if kind == "quartic":
            return Quartic(float(spec["a"]), float(spec["b"]))
        if kind == "tabulated":
            return Tabulated(tuple(spec["grid"]), tuple(spec["values"]))
    except KeyError as exc:
        raise ValidationError(f"{kind} potential is missing {exc}") from None
    raise ValidationError(f"unknown potential kind {kind!r}")
