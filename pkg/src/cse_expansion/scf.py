"""Restricted Hartree-Fock, orbital sets, MO transformation and MP2."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from cse_expansion import config
from cse_expansion.exceptions import (
    ConditioningError,
    ConvergenceError,
    DimensionError,
    DomainError,
    SingularityError,
)

if TYPE_CHECKING:
    from cse_expansion.integrals import IntegralSet
    from cse_expansion.typing import FloatArray

__all__ = (
    "ScfResult",
    "SpinOrbitalHamiltonian",
    "hartree_fock_hamiltonian",
    "mo_transform",
    "mp2_energy",
    "orthonormal_orbitals_open_shell",
    "rhf_solve",
    "symmetric_orthogonalizer",
    "zeroth_order_hamiltonian",
)

logger = logging.getLogger(__name__)


def _readonly(values) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScfResult:
    """Orthonormal molecular orbitals.

    ``e_hf`` is ``None`` for orbital sets that do not come from an SCF
    (see :func:`orthonormal_orbitals_open_shell`).

    """

    mo_coefficients: FloatArray
    orbital_energies: FloatArray
    e_hf: float | None
    converged: bool
    n_iterations: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "mo_coefficients", _readonly(self.mo_coefficients))
        object.__setattr__(self, "orbital_energies", _readonly(self.orbital_energies))

    @property
    def n_mo(self) -> int:
        return self.mo_coefficients.shape[1]

    @property
    def spin_orbital_energies(self) -> FloatArray:
        """Orbital energies repeated for the interleaved alpha/beta ordering."""
        return np.repeat(self.orbital_energies, 2)


@dataclass(frozen=True, eq=False)
class SpinOrbitalHamiltonian:
    """Second-quantized Hamiltonian over spin orbitals.

    ``H = sum_pq h[p,q] a+_p a_q + 1/4 sum_pqrs g[p,q,r,s] a+_p a+_q a_s a_r
    + e_nuc`` with ``g[p,q,r,s] = <pq||rs>``. Spin orbitals are
    interleaved: index ``2*i`` is the alpha and ``2*i + 1`` the beta
    partner of spatial orbital ``i``.

    """

    h: FloatArray
    g: FloatArray
    e_nuc: float = 0.0

    def __post_init__(self) -> None:
        h = _readonly(self.h)
        g = _readonly(self.g)
        n = h.shape[0]
        if h.shape != (n, n) or g.shape != (n, n, n, n):
            raise DimensionError(
                f"one-body shape {h.shape} and two-body shape {g.shape} disagree"
            )
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "e_nuc", float(self.e_nuc))

    @property
    def n_so(self) -> int:
        return self.h.shape[0]

    def __add__(self, other: SpinOrbitalHamiltonian) -> SpinOrbitalHamiltonian:
        return SpinOrbitalHamiltonian(
            self.h + other.h, self.g + other.g, self.e_nuc + other.e_nuc
        )

    def __sub__(self, other: SpinOrbitalHamiltonian) -> SpinOrbitalHamiltonian:
        return SpinOrbitalHamiltonian(
            self.h - other.h, self.g - other.g, self.e_nuc - other.e_nuc
        )

    def scaled(self, factor: float) -> SpinOrbitalHamiltonian:
        return SpinOrbitalHamiltonian(
            factor * self.h, factor * self.g, factor * self.e_nuc
        )

    def shifted(self, constant: float) -> SpinOrbitalHamiltonian:
        """Copy with ``constant`` times the identity added."""
        return SpinOrbitalHamiltonian(self.h, self.g, self.e_nuc + constant)


def symmetric_orthogonalizer(overlap: FloatArray) -> FloatArray:
    """Löwdin ``S^-1/2``.

    Raises
    ------
    ConditioningError
        If `overlap` is not positive definite.

    """
    evals, evecs = np.linalg.eigh(overlap)
    if evals[0] <= 1e-10:
        raise ConditioningError(float(evals[0]))
    return (evecs / np.sqrt(evals)) @ evecs.T


def _fock(hcore: FloatArray, eri: FloatArray, density: FloatArray) -> FloatArray:
    # density is the total (alpha + beta) density matrix
    coulomb = np.einsum("pqrs,rs->pq", eri, density)
    exchange = np.einsum("prqs,rs->pq", eri, density)
    return hcore + coulomb - 0.5 * exchange


def rhf_solve(
    integrals: IntegralSet,
    n_electrons: int,
    *,
    max_iterations: int | None = None,
    energy_tolerance: float | None = None,
    density_tolerance: float | None = None,
    damping: float | None = None,
    damping_iterations: int | None = None,
    damping_threshold: float | None = None,
) -> ScfResult:
    """Closed-shell Roothaan SCF.

    Starts from the core-Hamiltonian guess and uses symmetric
    orthogonalization. The density is damped for the first
    ``damping_iterations`` steps and afterwards whenever the undamped
    density change is above ``damping_threshold`` or grew since the
    previous step, so oscillating Roothaan iterations are always damped.

    Parameters
    ----------
    integrals : IntegralSet
        AO integrals.
    n_electrons : int
        Even number of electrons, at most ``2 * n_ao``.
    max_iterations, energy_tolerance, density_tolerance : optional
        Convergence settings; ``cse.scf.*`` configuration by default.
    damping, damping_iterations, damping_threshold : optional
        Weight of the previous density, the number of unconditionally
        damped iterations and the density change below which plain steps
        are allowed; ``cse.scf.*`` configuration by default.

    Returns
    -------
    ScfResult
        Canonical orbitals with ascending energies and the total RHF
        energy including nuclear repulsion.

    Raises
    ------
    DomainError
        For odd or too many electrons.
    ConvergenceError
        If the tolerances are not met within `max_iterations`.

    """
    max_iterations = config.get("scf.max-iterations", max_iterations)
    energy_tolerance = config.get("scf.energy-tolerance", energy_tolerance)
    density_tolerance = config.get("scf.density-tolerance", density_tolerance)
    damping = config.get("scf.damping", damping)
    damping_iterations = config.get("scf.damping-iterations", damping_iterations)
    damping_threshold = config.get("scf.damping-threshold", damping_threshold)

    n_ao = integrals.n_ao
    if n_electrons % 2 or not 0 <= n_electrons <= 2 * n_ao:
        raise DomainError(
            f"RHF needs an even electron count between 0 and {2 * n_ao}, got {n_electrons}"
        )
    n_occ = n_electrons // 2
    hcore = integrals.core_hamiltonian
    X = symmetric_orthogonalizer(integrals.overlap)

    def diagonalize(fock: FloatArray) -> tuple[FloatArray, FloatArray]:
        eps, c_prime = np.linalg.eigh(X.T @ fock @ X)
        return eps, X @ c_prime

    def density_of(coeffs: FloatArray) -> FloatArray:
        occ = coeffs[:, :n_occ]
        return 2.0 * occ @ occ.T

    def energy_of(density: FloatArray) -> float:
        fock = _fock(hcore, integrals.eri, density)
        return 0.5 * float(np.sum(density * (hcore + fock))) + integrals.e_nuc

    eps, coeffs = diagonalize(hcore)
    density = density_of(coeffs)
    energy = energy_of(density)
    delta_e = np.inf
    last_delta_d = np.inf
    for iteration in range(1, max_iterations + 1):
        eps, coeffs = diagonalize(_fock(hcore, integrals.eri, density))
        new_density = density_of(coeffs)
        delta_d = float(np.max(np.abs(new_density - density)))
        damped = (
            iteration <= damping_iterations
            or delta_d > damping_threshold
            or delta_d > last_delta_d
        )
        if damped:
            new_density = (1.0 - damping) * new_density + damping * density
        last_delta_d = delta_d
        new_energy = energy_of(new_density)
        delta_e = new_energy - energy
        density, energy = new_density, new_energy
        logger.debug(
            "RHF iteration %d: E = %.12f, dE = %.3e, dD = %.3e%s",
            iteration,
            energy,
            delta_e,
            delta_d,
            " (damped)" if damped else "",
        )
        if (
            iteration > damping_iterations
            and abs(delta_e) < energy_tolerance
            and delta_d < density_tolerance
        ):
            break
    else:
        raise ConvergenceError(
            f"RHF did not converge in {max_iterations} iterations", float(delta_e)
        )

    # canonical orbitals of the converged density
    eps, coeffs = diagonalize(_fock(hcore, integrals.eri, density))
    e_hf = energy_of(density_of(coeffs))
    logger.info("RHF converged in %d iterations: E = %.12f", iteration, e_hf)
    return ScfResult(
        mo_coefficients=coeffs,
        orbital_energies=eps,
        e_hf=e_hf,
        converged=True,
        n_iterations=iteration,
    )


def orthonormal_orbitals_open_shell(integrals: IntegralSet) -> ScfResult:
    """Löwdin-orthogonalized AOs ordered by diagonal core energy.

    Used for odd electron counts where no closed-shell SCF exists; the
    full-CI and CSE results are invariant to the orthonormal orbital
    choice.

    """
    coeffs = symmetric_orthogonalizer(integrals.overlap)
    diag = np.einsum("pi,pq,qi->i", coeffs, integrals.core_hamiltonian, coeffs)
    order = np.argsort(diag, kind="stable")
    return ScfResult(
        mo_coefficients=coeffs[:, order],
        orbital_energies=diag[order],
        e_hf=None,
        converged=True,
        n_iterations=0,
    )


def mo_transform(
    integrals: IntegralSet, orbitals: ScfResult | FloatArray
) -> SpinOrbitalHamiltonian:
    """Build the spin-orbital Hamiltonian in an orthonormal orbital basis.

    The AO to MO two-electron transformation is done one index at a time
    (four O(n^5) stages).

    """
    C = orbitals.mo_coefficients if isinstance(orbitals, ScfResult) else np.asarray(orbitals)
    h_mo = C.T @ integrals.core_hamiltonian @ C
    eri = np.einsum("pqrs,pi->iqrs", integrals.eri, C)
    eri = np.einsum("iqrs,qj->ijrs", eri, C)
    eri = np.einsum("ijrs,rk->ijks", eri, C)
    eri = np.einsum("ijks,sl->ijkl", eri, C)

    spin = np.eye(2)
    h_so = np.kron(h_mo, spin)
    # chemist (pq|rs) with spin deltas on (p,q) and (r,s)
    chem = np.kron(eri, np.einsum("ab,cd->abcd", spin, spin))
    phys = chem.transpose(0, 2, 1, 3)
    g = phys - phys.transpose(0, 1, 3, 2)
    return SpinOrbitalHamiltonian(h_so, g, integrals.e_nuc)


def hartree_fock_hamiltonian(scf: ScfResult) -> SpinOrbitalHamiltonian:
    """Canonical Fock operator ``sum_p eps_p a+_p a_p`` in spin orbitals."""
    return zeroth_order_hamiltonian(scf.spin_orbital_energies)


def zeroth_order_hamiltonian(
    spin_orbital_energies: FloatArray, splitting: float = 0.0
) -> SpinOrbitalHamiltonian:
    """Diagonal one-body operator ``sum_p (eps_p + splitting * sqrt(p + 1)) n_p``.

    Every determinant is an eigenstate. A positive `splitting` lifts the
    degeneracies between determinants that differ only by spin or by
    symmetry-equivalent orbitals while keeping the aufbau determinant of
    ascending `spin_orbital_energies` the lowest one.

    """
    eps = np.asarray(spin_orbital_energies, dtype=np.float64)
    if splitting < 0.0:
        raise DomainError(f"splitting must be nonnegative, got {splitting}")
    n = len(eps)
    diagonal = eps + splitting * np.sqrt(np.arange(1.0, n + 1.0))
    return SpinOrbitalHamiltonian(np.diag(diagonal), np.zeros((n, n, n, n)), 0.0)


def mp2_energy(
    hamiltonian: SpinOrbitalHamiltonian, scf: ScfResult, n_electrons: int
) -> float:
    """Second-order Møller-Plesset correlation energy.

    ``E2 = 1/4 sum_ijab |<ij||ab>|^2 / (e_i + e_j - e_a - e_b)`` over
    occupied ``i, j`` and virtual ``a, b`` spin orbitals.

    Raises
    ------
    SingularityError
        If an occupied-virtual gap is below 1e-8 hartree.

    """
    eps = scf.spin_orbital_energies
    if len(eps) != hamiltonian.n_so:
        raise DimensionError(
            f"{len(eps)} spin-orbital energies for a {hamiltonian.n_so}-spin-orbital Hamiltonian"
        )
    occ = slice(0, n_electrons)
    vir = slice(n_electrons, hamiltonian.n_so)
    e_occ, e_vir = eps[occ], eps[vir]
    if len(e_occ) and len(e_vir) and np.min(e_vir) - np.max(e_occ) < 1e-8:
        raise SingularityError(
            "occupied and virtual orbital energies are degenerate; MP2 is undefined"
        )
    denom = (
        e_occ[:, None, None, None]
        + e_occ[None, :, None, None]
        - e_vir[None, None, :, None]
        - e_vir[None, None, None, :]
    )
    oovv = hamiltonian.g[occ, occ, vir, vir]
    return 0.25 * float(np.sum(oovv**2 / denom))
