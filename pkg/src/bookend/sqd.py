"""Sample-based diagonalization with self-consistent configuration recovery.

Noisy bitstrings are split by particle number, the broken ones are repaired
against the current orbital occupancies, batches of configurations are drawn
from the repaired pool and the Hamiltonian is diagonalized in each batch.
The converged wavefunction can then be enlarged by single excitations.
"""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from bookend.determinant import Determinant, enumerate_singles, from_bitstring, to_bitstring
from bookend.eigensolver import AUTO_DENSE_LIMIT, SubspaceWavefunction, occupancies, solve_subspace
from bookend.errors import EmptySubspaceError, ValidationError
from bookend.integrals import MolecularHamiltonian
from bookend.samples import SampleSet

log = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-8
"""Rounds stop early once the best batch energy moves less than this (Hartree)."""


@dataclass(frozen=True)
class SqdConfig:
    """Knobs of :func:`sqd_run`.

    Attributes:
        n_batches: Number of batches ``K`` per round.
        batch_size: Draws ``d`` per batch (before de-duplication).
        score_iterations: Recovery rounds after the initial round.
        tol: Davidson residual tolerance for subspaces above the dense limit.
        seed: Root seed; every round and batch derives its own stream.
        ext_cutoff: Source-amplitude screen for the single-excitation extension.
        exponent: Recovery weights are ``|x - n| ** exponent``.
        threads: Worker threads for the batch diagonalizations.
        dense_limit: Dense diagonalization up to this subspace size.
    """

    n_batches: int = 10
    batch_size: int = 1000
    score_iterations: int = 2
    tol: float = 1e-8
    seed: int = 0
    ext_cutoff: float = 1e-5
    exponent: float = 1.0
    threads: int = 1
    dense_limit: int = AUTO_DENSE_LIMIT

    def __post_init__(self):
        if self.n_batches < 1 or self.batch_size < 1:
            raise ValidationError("n_batches and batch_size must be at least 1")
        if self.score_iterations < 0:
            raise ValidationError("score_iterations must be non-negative")
        if self.exponent <= 0:
            raise ValidationError("recovery weight exponent must be positive")
        if self.threads < 1:
            raise ValidationError("threads must be at least 1")


def _spin_counts(key: str, m: int) -> tuple[int, int]:
    return key[:m].count("1"), key[m:].count("1")


def partition_by_particle_number(
    samples: SampleSet, n_alpha: int, n_beta: int
) -> tuple[Counter[Determinant], SampleSet]:
    """Split shots into valid determinants and particle-number-broken bitstrings."""
    m = samples.n_orbitals
    valid: Counter[Determinant] = Counter()
    invalid = {}
    for key, count in samples.items():
        if _spin_counts(key, m) == (n_alpha, n_beta):
            valid[from_bitstring(key)] += count
        else:
            invalid[key] = count
    return valid, SampleSet(invalid, m)


@dataclass
class RecoveryStats:
    """How often the weighted draw had to fall back to uniform choices."""

    shots: int = 0
    uniform_fallbacks: int = 0
    partial_fills: int = 0


def _flip_choices(
    weights: np.ndarray, k: int, shots: int, rng: np.random.Generator, stats: RecoveryStats
) -> np.ndarray:
    """``shots`` independent size-``k`` weighted draws without replacement.

    Sequential weighted sampling without replacement equals taking the ``k``
    smallest keys ``E_i / w_i`` with ``E_i ~ Exp(1)``. Zero-weight candidates
    rank after every positive one and are chosen uniformly among themselves.
    """
    positive = weights > 0
    n_pos = int(positive.sum())
    if n_pos == 0:
        stats.uniform_fallbacks += shots
    elif n_pos < k:
        stats.partial_fills += shots
    e = rng.exponential(size=(shots, len(weights)))
    keys = np.where(positive, e / np.where(positive, weights, 1.0), e)
    order = np.lexsort((keys, np.broadcast_to(~positive, keys.shape)), axis=-1)
    return order[:, :k]


def score_recover_with_stats(
    invalid: SampleSet,
    n: np.ndarray,
    n_alpha: int,
    n_beta: int,
    seed: int | np.random.SeedSequence | None = None,
    *,
    exponent: float = 1.0,
) -> tuple[SampleSet, RecoveryStats]:
    """:func:`score_recover` plus fallback counts."""
    m = invalid.n_orbitals
    n = np.asarray(n, dtype=float)
    if n.shape != (2 * m,) or np.any((n < 0) | (n > 1)):
        raise ValidationError(f"occupancies must be {2 * m} values in [0, 1]")
    rng = np.random.default_rng(seed)
    stats = RecoveryStats()
    out: Counter[str] = Counter()
    targets = (n_alpha, n_beta)
    for key, count in invalid.items():
        x = np.array([ch == "1" for ch in key], dtype=np.uint8)
        shots = np.repeat(x[None, :], count, axis=0)
        stats.shots += count
        for sector in (0, 1):
            block = slice(sector * m, (sector + 1) * m)
            xs, ns = x[block], n[block]
            diff = int(xs.sum()) - targets[sector]
            if diff == 0:
                continue
            candidates = np.flatnonzero(xs == (1 if diff > 0 else 0))
            weights = np.abs(xs[candidates] - ns[candidates]) ** exponent
            picks = candidates[_flip_choices(weights, abs(diff), count, rng, stats)]
            rows = np.arange(count)[:, None]
            shots[rows, sector * m + picks] ^= 1
        for row in shots:
            out["".join("1" if b else "0" for b in row)] += 1
    return SampleSet(out, m), stats


def score_recover(
    invalid: SampleSet,
    n: np.ndarray,
    n_alpha: int,
    n_beta: int,
    seed: int | np.random.SeedSequence | None = None,
    *,
    exponent: float = 1.0,
) -> SampleSet:
    """Repair every broken shot to the target electron counts.

    Each spin sector is fixed on its own. A surplus clears occupied bits and a
    deficit sets empty ones, exactly ``|N_x - N|`` flips per sector. Bits are
    picked without replacement with probability proportional to
    ``|x_p - n_p| ** exponent``.

    Args:
        invalid: Particle-number-broken shots.
        n: Spin-orbital occupancies in canonical order.
        n_alpha: Target alpha electron count.
        n_beta: Target beta electron count.
        seed: Seed or seed sequence for the draws.
        exponent: Power applied to the occupancy mismatch.
    """
    return score_recover_with_stats(invalid, n, n_alpha, n_beta, seed, exponent=exponent)[0]


def draw_batches(
    pool: SampleSet, n_batches: int, batch_size: int, seed: int | np.random.SeedSequence | None = None
) -> list[list[Determinant]]:
    """``n_batches`` sets of ``batch_size`` frequency-weighted draws, de-duplicated and sorted."""
    if pool.shots == 0:
        raise EmptySubspaceError("no valid configurations to build a subspace from")
    keys = list(pool.counts)
    dets = [from_bitstring(k) for k in keys]
    freq = np.array([pool.counts[k] for k in keys], dtype=float)
    freq /= freq.sum()
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(n_batches)
    batches = []
    for ss in streams:
        picks = np.unique(np.random.default_rng(ss).choice(len(keys), size=batch_size, p=freq))
        batches.append(sorted(dets[i] for i in picks))
    return batches


@dataclass(frozen=True)
class SqdRound:
    """One self-consistency round: per-batch energies and the updated occupancies."""

    iteration: int
    batch_energies: list[float]
    batch_dimensions: list[int]
    occupancies: list[float]
    recovered_shots: int

    @property
    def min_energy(self) -> float:
        return min(self.batch_energies)


@dataclass(frozen=True)
class SqdResult:
    energy: float
    wavefunction: SubspaceWavefunction
    rounds: list[SqdRound]
    initial_occupancies: list[float]
    valid_shots: int
    invalid_shots: int
    config: SqdConfig = field(default_factory=SqdConfig)

    @property
    def dimension(self) -> int:
        return len(self.wavefunction)

    def to_json(self) -> dict:
        m = self.wavefunction.n_orbitals
        return {
            "energy": self.energy,
            "dimension": self.dimension,
            "valid_shots": self.valid_shots,
            "invalid_shots": self.invalid_shots,
            # Thread count is scheduling only and must not perturb the numeric record.
            "config": {k: getattr(self.config, k) for k in self.config.__dataclass_fields__ if k != "threads"},
            "initial_occupancies": self.initial_occupancies,
            "rounds": [
                {
                    "iteration": r.iteration,
                    "min_energy": r.min_energy,
                    "batch_energies": r.batch_energies,
                    "batch_dimensions": r.batch_dimensions,
                    "recovered_shots": r.recovered_shots,
                    "occupancies": r.occupancies,
                }
                for r in self.rounds
            ],
            "wavefunction": {
                to_bitstring(d, m): c for d, c in zip(self.wavefunction.dets, self.wavefunction.coeffs.tolist())
            },
        }


def _round_seeds(root: int, round_: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    recover, batches = np.random.SeedSequence([root, round_]).spawn(2)
    return recover, batches


def sqd_run(H: MolecularHamiltonian, raw: SampleSet, config: SqdConfig = SqdConfig()) -> SqdResult:
    """Self-consistent SQD over noisy samples.

    Round 0 builds batches from the particle-number-valid shots alone. Every
    later round repairs the broken shots afresh with the occupancies averaged
    over the previous round's batch wavefunctions. The best batch energy ever
    seen is returned together with its wavefunction.

    Raises:
        EmptySubspaceError: if no shot is valid and recovery is disabled.
    """
    if raw.n_orbitals != H.n_orbitals:
        raise ValidationError(
            f"samples span {raw.n_orbitals} orbitals, Hamiltonian has {H.n_orbitals}"
        )
    if raw.shots == 0:
        raise ValidationError("no samples given")
    valid, invalid = partition_by_particle_number(raw, H.n_alpha, H.n_beta)
    valid_set = SampleSet.from_determinants(valid, H.n_orbitals)
    if valid_set.shots:
        n = valid_set.mean_occupancy()
    elif config.score_iterations == 0:
        raise EmptySubspaceError("every shot breaks particle number and recovery is disabled")
    else:
        n = raw.mean_occupancy()
    initial = n.tolist()

    best: tuple[float, SubspaceWavefunction] | None = None
    rounds: list[SqdRound] = []
    previous = None
    with ThreadPoolExecutor(max_workers=config.threads) as pool_exec:
        for it in range(config.score_iterations + 1):
            recover_seed, batch_seed = _round_seeds(config.seed, it)
            recovered = 0
            if it == 0 and valid_set.shots:
                pool = valid_set
            else:
                fixed = score_recover(
                    invalid, n, H.n_alpha, H.n_beta, recover_seed, exponent=config.exponent
                )
                recovered = fixed.shots
                merged = Counter(dict(valid_set.counts))
                merged.update(fixed.counts)
                pool = SampleSet(merged, H.n_orbitals)
            batches = draw_batches(pool, config.n_batches, config.batch_size, batch_seed)
            results = list(
                pool_exec.map(
                    lambda dets: solve_subspace(H, dets, tol=config.tol, dense_limit=config.dense_limit),
                    batches,
                )
            )
            energies = [e for e, _ in results]
            n = np.mean([occupancies(psi) for _, psi in results], axis=0)
            rounds.append(SqdRound(it, energies, [len(b) for b in batches], n.tolist(), recovered))
            k = int(np.argmin(energies))
            if best is None or energies[k] < best[0]:
                best = results[k]
            log.info("SQD round %d: min energy %.10f over %d batches", it, energies[k], len(batches))
            if previous is not None and abs(energies[k] - previous) < CONVERGENCE_TOL:
                break
            previous = energies[k]

    return SqdResult(best[0], best[1], rounds, initial, valid_set.shots, invalid.shots, config)


def dimension_bound(D: int, M: int, n_alpha: int, n_beta: int) -> int:
    """Product bound ``D * n_alpha (M - n_alpha) * n_beta (M - n_beta)`` on singles growth."""
    if min(D, M, n_alpha, n_beta) < 0 or n_alpha > M or n_beta > M:
        raise ValidationError("dimension_bound needs non-negative counts with electrons <= orbitals")
    return D * n_alpha * (M - n_alpha) * n_beta * (M - n_beta)


@dataclass(frozen=True)
class ExtendedSubspace:
    base: tuple[Determinant, ...]
    extension: tuple[Determinant, ...]
    bound: int

    @property
    def dimension(self) -> int:
        return len(self.base) + len(self.extension)

    @property
    def within_bound(self) -> bool:
        """Whether ``D_E <= bound + D`` (the base is retained by the identity term)."""
        return self.dimension <= self.bound + len(self.base)


def extsqd_extend(
    H: MolecularHamiltonian,
    psi0: SubspaceWavefunction,
    cutoff: float = 1e-5,
    *,
    tol: float = 1e-8,
    dense_limit: int = AUTO_DENSE_LIMIT,
) -> tuple[ExtendedSubspace, float, SubspaceWavefunction]:
    """Add single excitations of every base configuration with ``|c_k| >= cutoff``.

    The enlarged space contains the base, so the returned energy never
    exceeds the energy of ``psi0``.
    """
    m = H.n_orbitals
    base = set(psi0.dets)
    extra: set[Determinant] = set()
    for det, c in zip(psi0.dets, psi0.coeffs):
        if abs(c) >= cutoff:
            extra.update(d for d, _ in enumerate_singles(det, m))
    extra -= base
    space = ExtendedSubspace(
        tuple(psi0.dets), tuple(sorted(extra)), dimension_bound(len(base), m, H.n_alpha, H.n_beta)
    )
    if not space.within_bound:
        log.warning(
            "extended dimension %d exceeds the product bound %d plus the base %d",
            space.dimension, space.bound, len(base),
        )
    energy, psi = solve_subspace(H, sorted(base | extra), tol=tol, dense_limit=dense_limit)
    return space, energy, psi
