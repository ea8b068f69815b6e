"""Measured bitstring multisets and the ``count_dict`` text format.

A bitstring has ``2M`` characters: alpha orbitals ``0..M-1`` from the left,
then the beta block; ``1`` marks an occupied spin-orbital.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping, TextIO

import numpy as np

from bookend.determinant import Determinant, from_bitstring, to_bitstring
from bookend.errors import ValidationError


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Bitstring -> positive shot count, over ``n_orbitals`` spatial orbitals."""

    counts: Mapping[str, int]
    n_orbitals: int

    def __post_init__(self):
        width = 2 * self.n_orbitals
        clean = {}
        for key, count in self.counts.items():
            if len(key) != width or set(key) - {"0", "1"}:
                raise ValidationError(f"bitstring {key!r} is not {width} binary digits")
            count = int(count)
            if count < 0:
                raise ValidationError(f"negative count for {key}")
            if count:
                clean[key] = count
        object.__setattr__(self, "counts", MappingProxyType(dict(sorted(clean.items()))))

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return self.n_orbitals == other.n_orbitals and dict(self.counts) == dict(other.counts)

    __hash__ = None  # type: ignore[assignment]

    def __len__(self):
        return len(self.counts)

    @property
    def shots(self) -> int:
        return sum(self.counts.values())

    def items(self):
        return self.counts.items()

    @classmethod
    def from_determinants(cls, counts: Mapping[Determinant, int], n_orbitals: int) -> "SampleSet":
        merged: Counter[str] = Counter()
        for det, c in counts.items():
            merged[to_bitstring(det, n_orbitals)] += c
        return cls(merged, n_orbitals)

    @classmethod
    def from_shots(cls, bitstrings: Iterable[str], n_orbitals: int) -> "SampleSet":
        return cls(Counter(bitstrings), n_orbitals)

    def determinant_counts(self) -> Counter[Determinant]:
        return Counter({from_bitstring(k): v for k, v in self.counts.items()})

    def bit_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique bitstrings as a ``(n_unique, 2M)`` 0/1 array, plus their counts."""
        keys = list(self.counts)
        bits = np.array([[ch == "1" for ch in k] for k in keys], dtype=np.uint8)
        bits = bits.reshape(len(keys), 2 * self.n_orbitals)
        return bits, np.array([self.counts[k] for k in keys], dtype=np.int64)

    def mean_occupancy(self) -> np.ndarray:
        """Shot-weighted average of each bit, in canonical spin-orbital order."""
        bits, counts = self.bit_matrix()
        if counts.sum() == 0:
            return np.zeros(2 * self.n_orbitals)
        return (bits * counts[:, None]).sum(axis=0) / counts.sum()


def write_count_dict(samples: SampleSet, fh: TextIO) -> None:
    for key, count in samples.items():
        fh.write(f"{key} {count}\n")


def parse_count_dict(text: str, n_orbitals: int | None = None) -> SampleSet:
    """Parse ``bitstring count`` lines; blank lines and ``#`` comments are skipped."""
    counts: Counter[str] = Counter()
    width = None if n_orbitals is None else 2 * n_orbitals
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValidationError(f"line {lineno}: expected 'bitstring count'")
        key, raw = parts
        if set(key) - {"0", "1"} or len(key) % 2:
            raise ValidationError(f"line {lineno}: invalid bitstring {key!r}")
        if width is None:
            width = len(key)
        elif len(key) != width:
            raise ValidationError(f"line {lineno}: bitstring length {len(key)}, expected {width}")
        try:
            count = int(raw)
        except ValueError:
            raise ValidationError(f"line {lineno}: non-integer count {raw!r}") from None
        if count < 1:
            raise ValidationError(f"line {lineno}: counts must be positive")
        counts[key] += count
    if width is None:
        raise ValidationError("count_dict contains no samples and no orbital count was given")
    return SampleSet(counts, width // 2)


def load_count_dict(path: str | Path, n_orbitals: int | None = None) -> SampleSet:
    return parse_count_dict(Path(path).read_text(), n_orbitals)


def save_count_dict(samples: SampleSet, path: str | Path) -> None:
    with open(path, "w") as fh:
        write_count_dict(samples, fh)
