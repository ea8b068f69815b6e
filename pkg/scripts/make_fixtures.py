"""Regenerate the committed FCIDUMP fixtures and golden energies.

Needs pyscf, which is not a runtime dependency of the package; the outputs
are committed under ``src/bookend/data`` so the test suite never calls it.

    python scripts/make_fixtures.py
"""

from __future__ import annotations

import json
from pathlib import Path

from pyscf import ao2mo, fci, gto, scf
from pyscf.tools import fcidump

DATA = Path(__file__).resolve().parents[1] / "src" / "bookend" / "data"

GEOMETRIES = {
    # H2 near equilibrium.
    "h2": "H 0 0 0; H 0 0 0.7414",
    # Rectangular H4, 1.5 x 1.65 angstrom: every symmetry-allowed determinant
    # carries FCI weight above 3e-3, so finite-shot SQD can resolve FCI.
    "h4": "H 0 0 0; H 1.5 0 0; H 0 1.65 0; H 1.5 1.65 0",
    # Linear H6 chain at 1.0 angstrom: wide spread of FCI weights, used for
    # the HCI cutoff study.
    "h6": "; ".join(f"H 0 0 {1.0 * i:.1f}" for i in range(6)),
}


def main() -> None:
    golden = {}
    for name, atom in GEOMETRIES.items():
        mol = gto.M(atom=atom, basis="sto-3g", unit="angstrom", verbose=0, symmetry=False)
        mf = scf.RHF(mol)
        mf.conv_tol = 1e-12
        mf.kernel()
        mo = mf.mo_coeff
        h1 = mo.T @ mf.get_hcore() @ mo
        eri = ao2mo.restore(8, ao2mo.full(mol, mo), mo.shape[1])
        fcidump.from_integrals(
            str(DATA / f"{name}.fcidump"), h1, eri, mo.shape[1], mol.nelectron,
            nuc=mol.energy_nuc(), ms=0, tol=1e-14,
        )
        cis = fci.FCI(mf)
        cis.conv_tol = 1e-13
        e_fci, _ = cis.kernel()
        golden[name] = {
            "geometry_angstrom": atom,
            "basis": "sto-3g",
            "e_rhf": float(mf.e_tot),
            "e_fci": float(e_fci),
            "norb": int(mf.mo_coeff.shape[1]),
            "nelec": int(mol.nelectron),
        }
    (DATA / "golden.json").write_text(json.dumps(golden, indent=2) + "\n")


if __name__ == "__main__":
    main()
