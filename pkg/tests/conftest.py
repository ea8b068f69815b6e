import numpy as np
import pytest

from bookend.integrals import MolecularHamiltonian, builtin_fixture, builtin_golden


@pytest.fixture(scope="session")
def golden():
    return builtin_golden()


@pytest.fixture(scope="session")
def h2():
    return builtin_fixture("h2")


@pytest.fixture(scope="session")
def h4():
    return builtin_fixture("h4")


@pytest.fixture(scope="session")
def h6():
    return builtin_fixture("h6")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hamiltonian(n_orbitals, n_alpha, n_beta, seed, e_nuc=0.0):
    from oracles import random_hamiltonian_arrays

    h, eri = random_hamiltonian_arrays(n_orbitals, np.random.default_rng(seed))
    return MolecularHamiltonian.from_arrays(h, eri, n_alpha, n_beta, e_nuc)
