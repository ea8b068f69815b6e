"""Molecular Hamiltonian integrals and the FCIDUMP interchange format.

Orbital indices follow the FCIDUMP convention (1-based) everywhere a user
names an integral; the dense array views (:attr:`MolecularHamiltonian.h`,
:attr:`MolecularHamiltonian.eri`) are 0-based for the solvers.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, TextIO

import numpy as np

from bookend.errors import FcidumpError, ValidationError

Index4 = tuple[int, int, int, int]


def symmetry_partners(p: int, q: int, r: int, s: int) -> set[Index4]:
    """The (up to) 8 index tuples equivalent to ``(pq|rs)`` for real orbitals."""
    return {
        (p, q, r, s), (q, p, r, s), (p, q, s, r), (q, p, s, r),
        (r, s, p, q), (s, r, p, q), (r, s, q, p), (s, r, q, p),
    }


def canonical_index(p: int, q: int, r: int, s: int) -> Index4:
    """Lexicographically smallest member of the 8-fold symmetry class."""
    return min(symmetry_partners(p, q, r, s))


@dataclass(frozen=True, eq=False)
class MolecularHamiltonian:
    """Second-quantized electronic Hamiltonian in a spatial-orbital basis.

    Attributes:
        n_orbitals: Number of spatial orbitals ``M``.
        n_alpha: Number of spin-up electrons.
        n_beta: Number of spin-down electrons.
        e_nuc: Constant (nuclear repulsion / core) energy in Hartree.
        h: Symmetric ``M x M`` one-electron integrals, 0-based, read-only.
        v: Two-electron integrals ``(pq|rs)`` in chemists' notation, keyed by
            the canonical 1-based index tuple of each 8-fold symmetry class.
            Zero-valued classes are not stored.
    """

    n_orbitals: int
    n_alpha: int
    n_beta: int
    e_nuc: float = 0.0
    h: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: Mapping[Index4, float] = field(default_factory=dict)

    def __post_init__(self):
        m = self.n_orbitals
        if m < 1:
            raise ValidationError(f"n_orbitals must be positive, got {m}")
        if m > 64:
            raise ValidationError("at most 64 spatial orbitals are supported")
        if not (0 <= self.n_alpha <= m and 0 <= self.n_beta <= m):
            raise ValidationError(
                f"electron counts ({self.n_alpha}, {self.n_beta}) do not fit in {m} orbitals"
            )
        h = np.zeros((m, m)) if self.h is None else np.array(self.h, dtype=float)
        if h.shape != (m, m):
            raise ValidationError(f"one-body integrals must be {m}x{m}, got {h.shape}")
        if not np.array_equal(h, h.T):
            raise ValidationError("one-body integrals are not symmetric")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

        canon: dict[Index4, float] = {}
        for key, value in self.v.items():
            if len(key) != 4 or not all(1 <= i <= m for i in key):
                raise ValidationError(f"two-body index {key} outside [1, {m}]")
            ckey = canonical_index(*key)
            if value != 0.0:
                canon[ckey] = float(value)
            else:
                canon.pop(ckey, None)
        object.__setattr__(self, "v", MappingProxyType(dict(sorted(canon.items()))))
        object.__setattr__(self, "e_nuc", float(self.e_nuc))

    @classmethod
    def from_arrays(
        cls,
        h: np.ndarray,
        eri: np.ndarray,
        n_alpha: int,
        n_beta: int,
        e_nuc: float = 0.0,
        atol: float = 1e-10,
    ) -> "MolecularHamiltonian":
        """Build from dense 0-based arrays, checking the 8-fold symmetry."""
        h = np.asarray(h, dtype=float)
        eri = np.asarray(eri, dtype=float)
        m = h.shape[0]
        if eri.shape != (m, m, m, m):
            raise ValidationError(f"eri must have shape {(m,) * 4}, got {eri.shape}")
        if not np.allclose(h, h.T, atol=atol):
            raise ValidationError("one-body integrals are not symmetric")
        for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
            if not np.allclose(eri, eri.transpose(perm), atol=atol):
                raise ValidationError("two-body integrals lack 8-fold symmetry")
        lower = np.tril(h)
        h_sym = lower + np.tril(h, -1).T
        v = {}
        for p, q, r, s in zip(*np.nonzero(eri)):
            key = (int(p) + 1, int(q) + 1, int(r) + 1, int(s) + 1)
            if key == canonical_index(*key):
                v[key] = float(eri[p, q, r, s])
        return cls(m, n_alpha, n_beta, e_nuc, h_sym, v)

    @property
    def n_electrons(self) -> int:
        return self.n_alpha + self.n_beta

    @cached_property
    def eri(self) -> np.ndarray:
        """Dense 0-based ``(pq|rs)`` tensor with all symmetry partners filled."""
        m = self.n_orbitals
        out = np.zeros((m, m, m, m))
        for key, value in self.v.items():
            for p, q, r, s in symmetry_partners(*key):
                out[p - 1, q - 1, r - 1, s - 1] = value
        out.setflags(write=False)
        return out

    def get_one_body(self, p: int, q: int) -> float:
        """``h_pq`` for 1-based orbital indices."""
        self._check_index(p, q)
        return float(self.h[p - 1, q - 1])

    def get_two_body(self, p: int, q: int, r: int, s: int) -> float:
        """``(pq|rs)`` for 1-based orbital indices; unset classes give 0.0."""
        self._check_index(p, q, r, s)
        return self.v.get(canonical_index(p, q, r, s), 0.0)

    def _check_index(self, *indices: int) -> None:
        for i in indices:
            if not 1 <= i <= self.n_orbitals:
                raise IndexError(f"orbital index {i} outside [1, {self.n_orbitals}]")

    def __eq__(self, other):
        if not isinstance(other, MolecularHamiltonian):
            return NotImplemented
        return (
            self.n_orbitals == other.n_orbitals
            and self.n_alpha == other.n_alpha
            and self.n_beta == other.n_beta
            and self.e_nuc == other.e_nuc
            and np.array_equal(self.h, other.h)
            and dict(self.v) == dict(other.v)
        )

    __hash__ = None  # type: ignore[assignment]


def get_two_body(H: MolecularHamiltonian, p: int, q: int, r: int, s: int) -> float:
    return H.get_two_body(p, q, r, s)


_KEY = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\s*=")


def _parse_header(lines: list[tuple[int, str]]) -> dict[str, tuple[list[int], int]]:
    """Parse namelist assignments into ``{KEY: (values, line_no)}``."""
    entries: dict[str, tuple[list[str], int]] = {}
    current: str | None = None
    for lineno, text in lines:
        parts = _KEY.split(text)
        # parts = [leading, key1, value1, key2, value2, ...]
        leading = parts[0]
        if leading.strip(" ,\t"):
            if current is None:
                raise FcidumpError(f"unexpected header text {leading.strip()!r}", lineno)
            entries[current][0].append(leading)
        for key, value in zip(parts[1::2], parts[2::2]):
            current = key.upper()
            entries[current] = ([value], lineno)
    parsed = {}
    for key, (chunks, lineno) in entries.items():
        tokens = [t for t in re.split(r"[,\s]+", " ".join(chunks)) if t]
        try:
            parsed[key] = ([int(t) for t in tokens], lineno)
        except ValueError:
            raise FcidumpError(f"non-integer value for header field {key}", lineno) from None
    return parsed


def _header_int(fields, key: str, default: int | None, start_line: int) -> int:
    if key not in fields:
        if default is None:
            raise FcidumpError(f"header is missing {key}", start_line)
        return default
    values, lineno = fields[key]
    if len(values) != 1:
        raise FcidumpError(f"header field {key} must be a single integer", lineno)
    return values[0]


def parse_fcidump(text: str | TextIO) -> MolecularHamiltonian:
    """Parse FCIDUMP content into a :class:`MolecularHamiltonian`.

    Both namelist terminators (``&END`` and ``/``) are accepted. ORBSYM and
    ISYM are read and discarded. Any problem raises :class:`FcidumpError`
    carrying the offending line number; no partial object is returned.
    """
    if not isinstance(text, str):
        text = text.read()
    raw_lines = text.splitlines()

    start = next((i for i, line in enumerate(raw_lines) if line.strip()), None)
    if start is None or not raw_lines[start].lstrip().upper().startswith("&FCI"):
        raise FcidumpError("expected '&FCI' namelist header", (start or 0) + 1)

    header: list[tuple[int, str]] = []
    end = None
    for i in range(start, len(raw_lines)):
        line = raw_lines[i]
        if i == start:
            line = re.sub(r"^\s*&FCI", "", line, flags=re.IGNORECASE)
        term = re.search(r"&END|/", line, flags=re.IGNORECASE)
        if term:
            header.append((i + 1, line[: term.start()]))
            if line[term.end():].strip():
                raise FcidumpError("text after header terminator", i + 1)
            end = i
            break
        header.append((i + 1, line))
    if end is None:
        raise FcidumpError("header is not terminated by '&END' or '/'", start + 1)

    fields = _parse_header(header)
    norb = _header_int(fields, "NORB", None, start + 1)
    nelec = _header_int(fields, "NELEC", None, start + 1)
    ms2 = _header_int(fields, "MS2", 0, start + 1)
    if norb < 1:
        raise FcidumpError(f"NORB must be positive, got {norb}", fields["NORB"][1])
    if (nelec + ms2) % 2:
        raise FcidumpError(f"NELEC={nelec} and MS2={ms2} have mismatched parity", start + 1)
    n_alpha, n_beta = (nelec + ms2) // 2, (nelec - ms2) // 2
    if not (0 <= n_alpha <= norb and 0 <= n_beta <= norb):
        raise FcidumpError(
            f"NELEC={nelec}, MS2={ms2} cannot be placed in {norb} orbitals", start + 1
        )

    h = np.zeros((norb, norb))
    v: dict[Index4, float] = {}
    e_nuc = 0.0
    for i in range(end + 1, len(raw_lines)):
        lineno = i + 1
        parts = raw_lines[i].split()
        if not parts:
            continue
        if len(parts) != 5:
            raise FcidumpError(f"expected 'value i j k l', got {len(parts)} fields", lineno)
        try:
            value = float(parts[0].replace("D", "E").replace("d", "e"))
        except ValueError:
            raise FcidumpError(f"non-numeric integral value {parts[0]!r}", lineno) from None
        try:
            p, q, r, s = (int(t) for t in parts[1:])
        except ValueError:
            raise FcidumpError("non-integer orbital index", lineno) from None
        if not all(0 <= x <= norb for x in (p, q, r, s)):
            raise FcidumpError(f"orbital index outside [0, {norb}]", lineno)
        if p == q == r == s == 0:
            e_nuc = value
        elif r == s == 0:
            if p == 0 or q == 0:
                raise FcidumpError("one-body entry needs two nonzero indices", lineno)
            h[p - 1, q - 1] = h[q - 1, p - 1] = value
        else:
            if 0 in (p, q, r, s):
                raise FcidumpError("two-body entry needs four nonzero indices", lineno)
            v[canonical_index(p, q, r, s)] = value
    return MolecularHamiltonian(norb, n_alpha, n_beta, e_nuc, h, v)


def load_fcidump(path: str | Path) -> MolecularHamiltonian:
    return parse_fcidump(Path(path).read_text())


def _fmt(value: float) -> str:
    # repr is the shortest string that round-trips the double exactly.
    return repr(float(value))


def write_fcidump(H: MolecularHamiltonian) -> str:
    """Serialize ``H`` with one body line per nonzero symmetry class."""
    m = H.n_orbitals
    out = io.StringIO()
    out.write(f"&FCI NORB={m},NELEC={H.n_electrons},MS2={H.n_alpha - H.n_beta},\n")
    out.write(" ORBSYM=" + "1," * m + "\n")
    out.write(" ISYM=1,\n&END\n")
    for (p, q, r, s), value in H.v.items():
        out.write(f"{_fmt(value)} {p} {q} {r} {s}\n")
    for p in range(m):
        for q in range(p, m):
            if H.h[p, q] != 0.0:
                out.write(f"{_fmt(H.h[p, q])} {p + 1} {q + 1} 0 0\n")
    out.write(f"{_fmt(H.e_nuc)} 0 0 0 0\n")
    return out.getvalue()


def save_fcidump(H: MolecularHamiltonian, path: str | Path) -> None:
    Path(path).write_text(write_fcidump(H))


def builtin_fixture(name: str) -> MolecularHamiltonian:
    """Load one of the bundled FCIDUMP fixtures (``h2``, ``h4``, ``h6``)."""
    from importlib.resources import files

    resource = files("bookend") / "data" / f"{name}.fcidump"
    if not resource.is_file():
        raise ValidationError(f"no bundled fixture named {name!r}")
    return parse_fcidump(resource.read_text())


def builtin_golden() -> dict:
    """Reference energies for the bundled fixtures (external program output)."""
    import json
    from importlib.resources import files

    return json.loads((files("bookend") / "data" / "golden.json").read_text())

