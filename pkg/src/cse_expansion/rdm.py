"""Reduced density matrices of sector states."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

from cse_expansion.fockspace import fock_space

if TYPE_CHECKING:
    from cse_expansion.fockspace import StateVector
    from cse_expansion.scf import SpinOrbitalHamiltonian
    from cse_expansion.typing import FloatArray

__all__ = ("energy_from_rdms", "one_particle_rdm", "two_particle_rdm")


def one_particle_rdm(psi: StateVector) -> FloatArray:
    """``gamma[i, k] = <psi|a+_i a_k|psi> / <psi|psi>``; trace ``N``."""
    space = fock_space(psi.basis)
    amps = space.single_amplitudes(psi.normalized().coefficients)
    return amps @ amps.T


def two_particle_rdm(psi: StateVector) -> FloatArray:
    """Pair-indexed two-particle reduced density matrix.

    ``D[P, Q] = <psi|a+_i a+_j a_l a_k|psi> / <psi|psi>`` for
    ``P = (i, j)`` and ``Q = (k, l)`` with ``i < j`` and ``k < l``.
    Symmetric, with trace ``N (N - 1) / 2``.

    """
    space = fock_space(psi.basis)
    amps = space.pair_amplitudes(psi.normalized().coefficients)
    return amps @ amps.T


def energy_from_rdms(hamiltonian: SpinOrbitalHamiltonian, psi: StateVector) -> float:
    """Expectation value of `hamiltonian` contracted from the RDMs of `psi`."""
    space = fock_space(psi.basis)
    pair_integrals = space.hamiltonian_pair_matrix(hamiltonian)
    return (
        float(np.sum(hamiltonian.h * one_particle_rdm(psi)))
        + float(np.sum(pair_integrals * two_particle_rdm(psi)))
        + hamiltonian.e_nuc
    )
