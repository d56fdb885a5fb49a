"""Contracted Schrödinger equation residuals and the Dalgarno-Lewis solve.

For a normalized state ``psi`` with ``E = <psi|H|psi>`` the residual of
the contracted Schrödinger equation is

    R[i,j,k,l] = <psi| a+_i a+_j a_l a_k (H - E) |psi>

which vanishes for every quadruple exactly when ``psi`` is an
eigenstate. Differentiating along ``H(lam) = H0 + lam V`` gives a
linear equation for the Dalgarno-Lewis operator ``F`` with
``d psi / d lam = F psi``; :func:`dl_cse_lsq` solves its contracted form
in the least-squares sense over rank-1 or rank-2 operators.

"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
import scipy.linalg

from cse_expansion import config
from cse_expansion.exceptions import DimensionError, DomainError
from cse_expansion.fockspace import TwoBodyCoefficients, fock_space, pair_list
from cse_expansion.scf import hartree_fock_hamiltonian

if TYPE_CHECKING:
    from cse_expansion.fockspace import StateVector
    from cse_expansion.scf import ScfResult, SpinOrbitalHamiltonian
    from cse_expansion.typing import FloatArray

__all__ = (
    "DlSolveReport",
    "PerturbationSplit",
    "ResidualTensor",
    "dispersion",
    "dl_cse_lsq",
    "energy_and_residual",
    "shift_invariance_check",
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PerturbationSplit:
    """``H(lam) = h0 + lam * v``."""

    h0: SpinOrbitalHamiltonian
    v: SpinOrbitalHamiltonian
    lam: float = 0.0

    def __post_init__(self) -> None:
        if self.h0.n_so != self.v.n_so:
            raise DimensionError(
                f"reference over {self.h0.n_so} and perturbation over {self.v.n_so} "
                "spin orbitals"
            )
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"lambda must lie in [0, 1], got {self.lam}")

    @classmethod
    def hartree_fock_complement(
        cls, hamiltonian: SpinOrbitalHamiltonian, scf: ScfResult
    ) -> PerturbationSplit:
        """``h0 = H`` and ``v = H - H_HF`` at ``lam = 0``."""
        return cls(hamiltonian, hamiltonian - hartree_fock_hamiltonian(scf), 0.0)

    @property
    def hamiltonian(self) -> SpinOrbitalHamiltonian:
        if self.lam == 0.0:
            return self.h0
        return self.h0 + self.v.scaled(self.lam)

    def shifted(self, constant: float) -> PerturbationSplit:
        """Same split with ``constant`` times the identity added to ``v``."""
        return PerturbationSplit(self.h0, self.v.shifted(constant), self.lam)


@dataclass(frozen=True, eq=False)
class ResidualTensor:
    """Residual over spin-orbital quadruples.

    Only the ``i < j``, ``k < l`` block is stored (``pair_matrix``);
    the full tensor is antisymmetric in ``i, j`` and in ``k, l``, so
    each stored entry occurs four times in it.

    """

    n_so: int
    pair_matrix: FloatArray

    @property
    def entries(self) -> FloatArray:
        """The full ``(n_so,) * 4`` tensor."""
        pairs = np.array(pair_list(self.n_so)).reshape(-1, 2)
        i, j = pairs[:, 0][:, None], pairs[:, 1][:, None]
        k, l = pairs[:, 0][None, :], pairs[:, 1][None, :]
        out = np.zeros((self.n_so,) * 4)
        R = self.pair_matrix
        out[i, j, k, l] = R
        out[j, i, k, l] = -R
        out[i, j, l, k] = -R
        out[j, i, l, k] = R
        return out

    @property
    def squared_norm(self) -> float:
        return 4.0 * float(np.sum(self.pair_matrix**2))

    @property
    def frobenius_norm(self) -> float:
        return float(np.sqrt(self.squared_norm))


def _normalized(psi: StateVector) -> FloatArray:
    return psi.normalized().coefficients


def energy_and_residual(
    hamiltonian: SpinOrbitalHamiltonian, psi: StateVector
) -> tuple[float, ResidualTensor]:
    """Rayleigh quotient and contracted Schrödinger residual of `psi`.

    Raises
    ------
    ZeroStateError
        If `psi` is the zero vector.

    """
    space = fock_space(psi.basis)
    vec = _normalized(psi)
    hvec = space.apply_hamiltonian(hamiltonian, vec)
    energy = float(vec @ hvec)
    phi = hvec - energy * vec
    residual = space.pair_amplitudes(vec) @ space.pair_amplitudes(phi).T
    return energy, ResidualTensor(psi.basis.n_so, residual)


def dispersion(hamiltonian: SpinOrbitalHamiltonian, psi: StateVector) -> float:
    """``<psi|(H - E)^2|psi>`` of the normalized state."""
    space = fock_space(psi.basis)
    vec = _normalized(psi)
    hvec = space.apply_hamiltonian(hamiltonian, vec)
    phi = hvec - float(vec @ hvec) * vec
    return float(phi @ phi)


@dataclass(frozen=True, eq=False)
class DlSolveReport:
    """Outcome of a contracted Dalgarno-Lewis least-squares solve.

    Attributes
    ----------
    rank : int
        1 for one-body, 2 for two-body ``F``.
    coefficients : TwoBodyCoefficients
        Minimum-norm least-squares ``F``.
    dl_cse_error : float
        Frobenius norm of the contracted residual at ``F``, over all
        spin-orbital quadruples.
    dl_error : float
        Norm of the uncontracted residual vector
        ``(H - E) F psi + (V - dE) psi``.
    lsq_conditioning : float
        Smallest over largest singular value of the design matrix.
    lsq_rank : int
        Numerical rank of the design matrix.
    energy, de_dlambda : float
        ``E`` and ``dE/dlam = <psi|V|psi>``.

    """

    rank: int
    coefficients: TwoBodyCoefficients
    dl_cse_error: float
    dl_error: float
    lsq_conditioning: float
    lsq_rank: int
    energy: float
    de_dlambda: float


def _unit_responses(space, rank: int, vec: FloatArray, mask: np.ndarray) -> FloatArray:
    """Columns ``E_c psi`` for every free coefficient ``c``."""
    if rank == 2:
        responses = space.pair_responses(space.pair_amplitudes(vec))
    else:
        responses = space.single_responses(space.single_amplitudes(vec))
    return responses[mask].T


def dl_cse_lsq(
    split: PerturbationSplit,
    psi: StateVector,
    rank: int = 2,
    *,
    cutoff: float | None = None,
) -> DlSolveReport:
    """Least-squares solve of the differentiated contracted equation.

    The residual ``<psi| a+a+aa |(H - E) F psi + (V - dE) psi>`` is
    linear in the free coefficients of ``F``; every coefficient
    contributes one design-matrix column, its residual response. The
    minimum-norm solution is taken with an SVD-based solver.

    Parameters
    ----------
    split : PerturbationSplit
        ``H(lam)`` and its perturbation.
    psi : StateVector
        An eigenstate of ``split.hamiltonian``.
    rank : {1, 2}
        Body rank of ``F``.
    cutoff : float, optional
        Relative singular-value cutoff; ``cse.lsq.cutoff`` by default.

    Returns
    -------
    DlSolveReport

    """
    cutoff = config.get("lsq.cutoff", cutoff)
    if rank not in (1, 2):
        raise DomainError(f"rank must be 1 or 2, got {rank}")
    hamiltonian = split.hamiltonian
    space = fock_space(psi.basis)
    vec = _normalized(psi)
    shifted = space.hamiltonian_matrix(hamiltonian)
    energy = float(vec @ shifted @ vec)
    shifted -= energy * np.eye(len(vec))
    phi = shifted @ vec
    if float(phi @ phi) > 1e-16:
        warnings.warn(
            f"state is not an eigenstate of H(lambda={split.lam}); "
            f"dispersion {float(phi @ phi):.3e}",
            stacklevel=2,
        )

    vpsi = space.apply_hamiltonian(split.v, vec)
    de_dlambda = float(vec @ vpsi)
    source = vpsi - de_dlambda * vec

    row_mask = TwoBodyCoefficients.zeros(psi.basis.n_so, 2).mask
    # <psi| a+_i a+_j a_l a_k: the transpose of the pair responses
    responses_of_psi = space.pair_responses(space.pair_amplitudes(vec))
    projector = responses_of_psi.swapaxes(0, 1)[row_mask]
    col_mask = TwoBodyCoefficients.zeros(psi.basis.n_so, rank).mask
    responses = _unit_responses(space, rank, vec, col_mask)
    design = projector @ (shifted @ responses)
    rhs = -(projector @ source)

    if design.size:
        x, _, lsq_rank, sv = scipy.linalg.lstsq(
            design, rhs, cond=cutoff, lapack_driver="gelsd"
        )
        conditioning = float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0
    else:
        x, lsq_rank, conditioning = np.zeros(design.shape[1]), 0, 0.0
    logger.debug(
        "rank-%d DL solve: %d residual rows, %d coefficients, numerical rank %d, "
        "conditioning %.3e",
        rank,
        design.shape[0],
        design.shape[1],
        lsq_rank,
        conditioning,
    )

    coefficients = TwoBodyCoefficients.from_parameters(psi.basis.n_so, rank, x)
    # stored rows cover i<j, k<l; each occurs four times in the full tensor
    dl_cse_error = 2.0 * float(np.linalg.norm(design @ x - rhs))
    full = shifted @ (responses @ x) + source
    dl_error = float(np.linalg.norm(full))
    return DlSolveReport(
        rank=rank,
        coefficients=coefficients,
        dl_cse_error=dl_cse_error,
        dl_error=dl_error,
        lsq_conditioning=conditioning,
        lsq_rank=int(lsq_rank),
        energy=energy,
        de_dlambda=de_dlambda,
    )


def shift_invariance_check(
    split: PerturbationSplit, psi: StateVector, constant: float, rank: int = 1
) -> tuple[DlSolveReport, DlSolveReport]:
    """Solve with ``V`` and with ``V + constant``; the errors must agree."""
    return dl_cse_lsq(split, psi, rank), dl_cse_lsq(split.shifted(constant), psi, rank)
