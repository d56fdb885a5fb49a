"""Dense full configuration interaction within one determinant sector."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from cse_expansion import config
from cse_expansion.exceptions import DomainError, SectorSizeError
from cse_expansion.fockspace import (
    StateVector,
    fock_space,
    multiplicity,
    s_squared_expectation,
)

if TYPE_CHECKING:
    from cse_expansion.fockspace import DeterminantBasis
    from cse_expansion.scf import ScfResult, SpinOrbitalHamiltonian
    from cse_expansion.typing import FloatArray

__all__ = ("Spectrum", "correlation_energy", "fci_spectrum")

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Lowest eigenpairs of a Hamiltonian in one sector.

    Eigenvalues include nuclear repulsion and are ascending. Each
    eigenvector's sign is fixed so that its largest-magnitude
    coefficient is positive.

    """

    eigenvalues: FloatArray
    states: tuple[StateVector, ...]
    s_squared: FloatArray

    @property
    def n_states(self) -> int:
        return len(self.eigenvalues)

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def multiplicities(self) -> list[int]:
        return [multiplicity(s2) for s2 in self.s_squared]

    def eigenvector_matrix(self) -> FloatArray:
        """Eigenvectors as the columns of a ``(dim, n_states)`` array."""
        return np.column_stack([s.coefficients for s in self.states])


def fci_spectrum(
    hamiltonian: SpinOrbitalHamiltonian,
    basis: DeterminantBasis,
    n_states: int = 1,
    *,
    max_dimension: int | None = None,
) -> Spectrum:
    """Diagonalize `hamiltonian` over `basis`.

    Parameters
    ----------
    hamiltonian : SpinOrbitalHamiltonian
        Spin-orbital Hamiltonian, nuclear repulsion included.
    basis : DeterminantBasis
        Fixed particle-number, fixed-Sz sector.
    n_states : int
        Number of lowest eigenpairs to keep; clipped to the sector
        dimension.
    max_dimension : int, optional
        Largest sector accepted; ``cse.fci.max-dimension`` by default.

    Returns
    -------
    Spectrum

    Raises
    ------
    SectorSizeError
        If the sector is larger than `max_dimension`.

    """
    max_dimension = config.get("fci.max-dimension", max_dimension)
    if basis.dim > max_dimension:
        raise SectorSizeError(
            f"sector dimension {basis.dim} exceeds the dense-solver cap {max_dimension}"
        )
    if n_states < 1:
        raise DomainError(f"n_states must be positive, got {n_states}")
    n_states = min(n_states, basis.dim)

    matrix = fock_space(basis).hamiltonian_matrix(hamiltonian)
    evals, evecs = scipy.linalg.eigh(matrix, subset_by_index=[0, n_states - 1])
    states = []
    for col in evecs.T:
        if col[np.argmax(np.abs(col))] < 0:
            col = -col
        states.append(StateVector(basis, col))
    s2 = np.array([s_squared_expectation(s) for s in states])
    logger.debug(
        "FCI over %d determinants: lowest eigenvalues %s", basis.dim, evals[:n_states]
    )
    evals.setflags(write=False)
    s2.setflags(write=False)
    return Spectrum(eigenvalues=evals, states=tuple(states), s_squared=s2)


def correlation_energy(spectrum: Spectrum, scf: ScfResult) -> float:
    """``E0 - e_hf``.

    Raises
    ------
    DomainError
        If `scf` carries no Hartree-Fock energy.

    """
    if scf.e_hf is None:
        raise DomainError("orbital set has no Hartree-Fock energy")
    return spectrum.ground_energy - scf.e_hf
