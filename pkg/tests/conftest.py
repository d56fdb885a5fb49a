from __future__ import annotations

import functools

import numpy as np
import pytest

from cse_expansion.integrals import IntegralSet
from cse_expansion.pipelines import prepare_system
from cse_expansion.scf import mo_transform


@functools.lru_cache(maxsize=None)
def _chain(n: int, r: float):
    return prepare_system(n, r)


@pytest.fixture(scope="session")
def h4():
    """``h4(r)`` -> cached H4 system at bond length r (angstrom)."""
    return functools.partial(_chain, 4)


@pytest.fixture(scope="session")
def h5():
    return functools.partial(_chain, 5)


def _random_hamiltonian(n_orb: int, seed: int):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n_orb, n_orb))
    h = 0.5 * (h + h.T)
    eri = rng.normal(scale=0.3, size=(n_orb,) * 4)
    # (pq|rs) with full 8-fold permutational symmetry
    eri = eri + eri.transpose(1, 0, 2, 3)
    eri = eri + eri.transpose(0, 1, 3, 2)
    eri = eri + eri.transpose(2, 3, 0, 1)
    integrals = IntegralSet(
        overlap=np.eye(n_orb),
        kinetic=h,
        nuclear=np.zeros((n_orb, n_orb)),
        eri=eri / 8.0,
        e_nuc=0.0,
    )
    return mo_transform(integrals, np.eye(n_orb))


@pytest.fixture(scope="session")
def random_hamiltonian():
    """``random_hamiltonian(n_orb, seed)`` -> spin-conserving test Hamiltonian."""
    return _random_hamiltonian
