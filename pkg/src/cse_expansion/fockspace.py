"""Determinant sectors and sign-correct fermionic operator algebra.

Sign convention
---------------
A determinant is an integer whose bit ``p`` is set when spin orbital
``p`` is occupied. Creation and annihilation operators act on the
canonically ordered product ``a+_{p1} a+_{p2} ... |0>`` with
``p1 < p2 < ...``, so that ``a_p`` and ``a+_p`` pick up the sign
``(-1)**n`` where ``n`` is the number of occupied orbitals below ``p``
at the moment the operator is applied. Operator strings are applied
right to left: for ``a+_i a+_j a_l a_k`` the order is ``a_k``, ``a_l``,
``a+_j``, ``a+_i``.

Worked examples (orbitals listed left to right from 0)::

    a+_2 a+_3 a_1 a_0 |1100>  = +|0011>
    a+_0 a+_1 a_1 a_0 |1100>  = +|1100>
    a+_3 a+_0 a_2 a_0 |1110>  = -|1101>

Every operator is restricted to a fixed particle number and spin
projection sector. Spin orbitals are interleaved: even indices are
alpha, odd indices beta.

"""

from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import TYPE_CHECKING, Iterator, Optional, Tuple

import numpy as np
import scipy.sparse

from cse_expansion.exceptions import DimensionError, DomainError, ZeroStateError

if TYPE_CHECKING:
    from cse_expansion.scf import SpinOrbitalHamiltonian
    from cse_expansion.typing import Determinant, FloatArray, Pair

__all__ = (
    "DeterminantBasis",
    "FockSpace",
    "StateVector",
    "TwoBodyCoefficients",
    "annihilate",
    "apply_hamiltonian",
    "apply_pair_string",
    "apply_two_body",
    "create",
    "enumerate_basis",
    "fock_space",
    "multiplicity",
    "occupied_orbitals",
    "pair_list",
    "s_squared_expectation",
    "spin_projection",
)

logger = logging.getLogger(__name__)


_ALPHA_BITS = int("01" * 64, 2)


def _popcount(x: int) -> int:
    return bin(x).count("1")


def _phase(det: int, p: int) -> int:
    """(-1) ** (number of occupied orbitals below p)."""
    return -1 if _popcount(det & ((1 << p) - 1)) & 1 else 1


def annihilate(det: Determinant, p: int) -> Optional[Tuple[Determinant, int]]:
    """Apply ``a_p``; ``None`` when orbital `p` is empty."""
    if not (det >> p) & 1:
        return None
    return det & ~(1 << p), _phase(det, p)


def create(det: Determinant, p: int) -> Optional[Tuple[Determinant, int]]:
    """Apply ``a+_p``; ``None`` when orbital `p` is already occupied."""
    if (det >> p) & 1:
        return None
    return det | (1 << p), _phase(det, p)


def apply_pair_string(
    det: Determinant, i: int, j: int, l: int, k: int
) -> Optional[Tuple[Determinant, int]]:
    """Apply ``a+_i a+_j a_l a_k`` to a determinant.

    Parameters
    ----------
    det : int
        Occupation bitstring.
    i, j : int
        Creation indices, ``i != j``.
    l, k : int
        Annihilation indices, ``k != l``; ``a_k`` acts first.

    Returns
    -------
    (int, int) or None
        The resulting determinant and its sign, or ``None`` if the
        string annihilates `det`.

    Examples
    --------
    >>> apply_pair_string(0b0011, 2, 3, 1, 0)
    (12, 1)

    """
    if i == j or k == l:
        raise DomainError("pair strings need distinct creation and annihilation indices")
    sign = 1
    for op, p in ((annihilate, k), (annihilate, l), (create, j), (create, i)):
        res = op(det, p)
        if res is None:
            return None
        det, s = res
        sign *= s
    return det, sign


def occupied_orbitals(det: Determinant, n_so: int) -> list[int]:
    return [p for p in range(n_so) if (det >> p) & 1]


def spin_projection(det: Determinant) -> float:
    """``(n_alpha - n_beta) / 2`` with alpha on even bits."""
    alpha = _popcount(det & _ALPHA_BITS)
    beta = _popcount(det) - alpha
    return 0.5 * (alpha - beta)


@functools.lru_cache(maxsize=None)
def pair_list(n_so: int) -> tuple[Pair, ...]:
    """Ordered pairs ``(i, j)`` with ``i < j`` in lexicographic order."""
    return tuple(combinations(range(n_so), 2))


def _pair_spin(pair: Pair) -> int:
    return pair[0] % 2 + pair[1] % 2


@dataclass(frozen=True)
class DeterminantBasis:
    """All determinants of a fixed particle-number, fixed-Sz sector.

    Determinants are kept in lexicographic order of their occupied
    orbital lists.

    """

    n_so: int
    n_electrons: int
    sz: float
    determinants: Tuple[Determinant, ...]
    index: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self) -> None:
        self.index.clear()
        self.index.update({det: pos for pos, det in enumerate(self.determinants)})

    def __len__(self) -> int:
        return len(self.determinants)

    def __iter__(self) -> Iterator[Determinant]:
        return iter(self.determinants)

    def __contains__(self, det: object) -> bool:
        return det in self.index

    @property
    def dim(self) -> int:
        return len(self.determinants)

    @property
    def n_alpha(self) -> int:
        return int(round(self.n_electrons / 2 + self.sz))

    @property
    def n_beta(self) -> int:
        return self.n_electrons - self.n_alpha

    def index_of(self, det: Determinant) -> int:
        try:
            return self.index[det]
        except KeyError:
            raise DimensionError(f"determinant {det:#b} is not in this sector") from None

    def aufbau_determinant(self) -> Determinant:
        """Lowest-index occupation: alpha orbitals 0, 2, ... and beta 1, 3, ..."""
        det = 0
        for i in range(self.n_alpha):
            det |= 1 << (2 * i)
        for i in range(self.n_beta):
            det |= 1 << (2 * i + 1)
        return det


@functools.lru_cache(maxsize=64)
def enumerate_basis(n_so: int, n_electrons: int, sz: float) -> DeterminantBasis:
    """Enumerate a complete fixed-Sz determinant sector.

    Parameters
    ----------
    n_so : int
        Even number of spin orbitals.
    n_electrons : int
        Number of electrons, ``0 <= n_electrons <= n_so``.
    sz : float
        Spin projection, a multiple of 1/2 with the parity of
        `n_electrons`.

    Raises
    ------
    DomainError
        If the arguments do not describe a non-empty sector.

    Examples
    --------
    >>> len(enumerate_basis(8, 4, 0))
    36
    >>> len(enumerate_basis(10, 5, 0.5))
    100

    """
    if n_so % 2 or n_so <= 0:
        raise DomainError(f"spin orbitals come in alpha/beta pairs, got n_so={n_so}")
    if not 0 <= n_electrons <= n_so:
        raise DomainError(f"cannot place {n_electrons} electrons in {n_so} spin orbitals")
    twice = 2 * sz
    if abs(twice - round(twice)) > 1e-12 or (round(twice) - n_electrons) % 2:
        raise DomainError(f"sz={sz} is inconsistent with {n_electrons} electrons")
    n_alpha = (n_electrons + round(twice)) // 2
    n_beta = n_electrons - n_alpha
    if not (0 <= n_alpha <= n_so // 2 and 0 <= n_beta <= n_so // 2):
        raise DomainError(
            f"sz={sz} is inconsistent with {n_electrons} electrons in {n_so} spin orbitals"
        )
    dets = []
    for occ in combinations(range(n_so), n_electrons):
        det = sum(1 << p for p in occ)
        if sum(1 for p in occ if p % 2 == 0) == n_alpha:
            dets.append(det)
    return DeterminantBasis(n_so, n_electrons, 0.5 * round(twice), tuple(dets))


@dataclass(frozen=True, eq=False)
class StateVector:
    """Real wave function expanded in a determinant sector."""

    basis: DeterminantBasis
    coefficients: FloatArray

    def __post_init__(self) -> None:
        coeffs = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if len(coeffs) != self.basis.dim:
            raise DimensionError(
                f"{len(coeffs)} coefficients for a sector of dimension {self.basis.dim}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise DomainError("state coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_determinant(cls, basis: DeterminantBasis, det: Determinant) -> StateVector:
        coeffs = np.zeros(basis.dim)
        coeffs[basis.index_of(det)] = 1.0
        return cls(basis, coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    def normalized(self) -> StateVector:
        norm = self.norm()
        if norm == 0.0:
            raise ZeroStateError("cannot normalize the zero vector")
        return StateVector(self.basis, self.coefficients / norm)

    def overlap(self, other: StateVector) -> float:
        if other.basis != self.basis:
            raise DimensionError("states live in different sectors")
        return float(self.coefficients @ other.coefficients)

    def __add__(self, other: StateVector) -> StateVector:
        if other.basis != self.basis:
            raise DimensionError("states live in different sectors")
        return StateVector(self.basis, self.coefficients + other.coefficients)

    def __mul__(self, factor: float) -> StateVector:
        return StateVector(self.basis, factor * self.coefficients)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class TwoBodyCoefficients:
    """Coefficients of a particle-number conserving operator.

    For ``rank == 2`` the operator is ``sum F[P, Q] a+_i a+_j a_l a_k``
    with ``P = (i, j)`` and ``Q = (k, l)`` running over :func:`pair_list`;
    for ``rank == 1`` it is ``sum F[i, k] a+_i a_k``. Only entries that
    conserve Sz are free parameters (:attr:`mask`); the others stay zero.

    """

    n_so: int
    rank: int
    matrix: FloatArray

    def __post_init__(self) -> None:
        if self.rank not in (1, 2):
            raise DomainError(f"rank must be 1 or 2, got {self.rank}")
        matrix = np.array(self.matrix, dtype=np.float64)
        size = len(pair_list(self.n_so)) if self.rank == 2 else self.n_so
        if matrix.shape != (size, size):
            raise DimensionError(
                f"rank-{self.rank} coefficients over {self.n_so} spin orbitals need "
                f"shape {(size, size)}, got {matrix.shape}"
            )
        if not np.all(np.isfinite(matrix)):
            raise DomainError("operator coefficients must be finite")
        matrix = np.where(self.mask, matrix, 0.0)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def mask(self) -> np.ndarray:
        return _coefficient_mask(self.n_so, self.rank)

    @property
    def n_parameters(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def zeros(cls, n_so: int, rank: int = 2) -> TwoBodyCoefficients:
        size = len(pair_list(n_so)) if rank == 2 else n_so
        return cls(n_so, rank, np.zeros((size, size)))

    @classmethod
    def from_parameters(
        cls, n_so: int, rank: int, parameters: FloatArray
    ) -> TwoBodyCoefficients:
        mask = _coefficient_mask(n_so, rank)
        matrix = np.zeros(mask.shape)
        matrix[mask] = parameters
        return cls(n_so, rank, matrix)

    def parameters(self) -> FloatArray:
        """Free coefficients in row-major mask order."""
        return self.matrix[self.mask]


@functools.lru_cache(maxsize=None)
def _coefficient_mask(n_so: int, rank: int) -> np.ndarray:
    if rank == 2:
        spins = np.array([_pair_spin(p) for p in pair_list(n_so)])
    else:
        spins = np.arange(n_so) % 2
    mask = spins[:, None] == spins[None, :]
    mask.setflags(write=False)
    return mask


def _stacked_map(terms, n_ops: int, dim: int) -> tuple[scipy.sparse.csr_matrix, int]:
    """CSR matrix of ``(op, target, column, sign)`` terms and the target count."""
    targets = sorted({target for _, target, _, _ in terms})
    index = {det: m for m, det in enumerate(targets)}
    width = len(targets)
    rows = [op * width + index[target] for op, target, _, _ in terms]
    cols = [col for _, _, col, _ in terms]
    data = [float(sign) for _, _, _, sign in terms]
    stacked = scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n_ops * width, dim))
    return stacked, width


def _sandwich(
    ops: scipy.sparse.csr_matrix, K: FloatArray, n_ops: int, width: int
) -> FloatArray:
    """Dense ``sum_PQ K[P, Q] ops[P].T @ ops[Q]``."""
    dim = ops.shape[1]
    if width == 0:
        return np.zeros((dim, dim))
    by_op = ops.reshape((n_ops, width * dim)).tocsr()
    mixed = (scipy.sparse.csr_matrix(K) @ by_op).reshape((n_ops * width, dim))
    return (ops.T @ mixed).toarray()


def _responses(
    ops: scipy.sparse.csr_matrix, n_ops: int, width: int, amps: FloatArray
) -> FloatArray:
    """``[P, Q, d] = (ops[P].T @ amps[Q])[d]``."""
    dim = ops.shape[1]
    amps = np.atleast_2d(np.asarray(amps, dtype=np.float64))
    if width == 0:
        return np.zeros((n_ops, len(amps), dim))
    by_column = ops.T.tocsr().reshape((dim * n_ops, width))
    out = np.asarray(by_column @ amps.T).reshape(dim, n_ops, len(amps))
    return out.transpose(1, 2, 0)


class FockSpace:
    """Sparse single and pair annihilation maps for one sector.

    ``singles`` stacks the matrices of ``a_p`` for every ``p`` (rows
    ``p * n_minus_one + m``) from the sector into the ``N - 1`` electron
    determinants it reaches; ``pairs`` stacks ``a_j a_i`` for every pair
    ``P = (i, j)`` (rows ``P * n_minus_two + m``) into the reachable
    ``N - 2`` electron determinants. Only determinants reachable from the
    sector are kept, so the intermediate spaces carry the sector's Sz
    restriction. Every number-conserving operator used in the package is
    assembled from these, e.g. ``a+_i a+_j a_l a_k = pairs[P].T @ pairs[Q]``.

    """

    def __init__(self, basis: DeterminantBasis) -> None:
        self.basis = basis
        n_so = basis.n_so
        self.pairs_index = {pair: n for n, pair in enumerate(pair_list(n_so))}
        self.n_pairs = len(self.pairs_index)

        single_terms = []
        for d, det in enumerate(basis):
            for p in range(n_so):
                res = annihilate(det, p)
                if res is not None:
                    single_terms.append((p, res[0], d, res[1]))
        self.singles, self.n_minus_one = _stacked_map(single_terms, n_so, basis.dim)

        pair_terms = []
        for d, det in enumerate(basis):
            for n, (i, j) in enumerate(pair_list(n_so)):
                res = annihilate(det, i)
                if res is None:
                    continue
                res2 = annihilate(res[0], j)
                if res2 is None:
                    continue
                pair_terms.append((n, res2[0], d, res[1] * res2[1]))
        self.pairs, self.n_minus_two = _stacked_map(pair_terms, self.n_pairs, basis.dim)
        logger.debug(
            "Fock space for %d determinants: %d (N-1) and %d (N-2) intermediates",
            basis.dim,
            self.n_minus_one,
            self.n_minus_two,
        )

    def single_amplitudes(self, vec: FloatArray) -> FloatArray:
        """``a_p |vec>`` for every ``p``, shape ``(n_so, n_minus_one)``."""
        return (self.singles @ vec).reshape(self.basis.n_so, self.n_minus_one)

    def single_creation(self, amps: FloatArray) -> FloatArray:
        """``sum_p a+_p |amps[p]>`` back in the sector."""
        return self.singles.T @ np.ravel(amps)

    def pair_amplitudes(self, vec: FloatArray) -> FloatArray:
        """``a_j a_i |vec>`` for every pair, shape ``(n_pairs, n_minus_two)``."""
        return (self.pairs @ vec).reshape(self.n_pairs, self.n_minus_two)

    def pair_creation(self, amps: FloatArray) -> FloatArray:
        """``sum_P a+_i a+_j |amps[P]>`` back in the sector."""
        return self.pairs.T @ np.ravel(amps)

    def single_responses(self, amps: FloatArray) -> FloatArray:
        """``[p, k, d]``: ``a+_p |amps[k]>`` for every ``p`` and row ``k``."""
        return _responses(self.singles, self.basis.n_so, self.n_minus_one, amps)

    def pair_responses(self, amps: FloatArray) -> FloatArray:
        """``[P, Q, d]``: ``a+_i a+_j |amps[Q]>`` for every pair ``P = (i, j)``."""
        return _responses(self.pairs, self.n_pairs, self.n_minus_two, amps)

    def apply_one_body_matrix(self, h: FloatArray, vec: FloatArray) -> FloatArray:
        return self.single_creation(h @ self.single_amplitudes(vec))

    def apply_two_body_matrix(self, K: FloatArray, vec: FloatArray) -> FloatArray:
        return self.pair_creation(K @ self.pair_amplitudes(vec))

    def one_body_operator_matrix(self, h: FloatArray) -> FloatArray:
        return _sandwich(self.singles, h, self.basis.n_so, self.n_minus_one)

    def two_body_operator_matrix(self, K: FloatArray) -> FloatArray:
        return _sandwich(self.pairs, K, self.n_pairs, self.n_minus_two)

    def hamiltonian_pair_matrix(self, hamiltonian: SpinOrbitalHamiltonian) -> FloatArray:
        """``g[i, j, k, l]`` arranged as a pair-by-pair matrix."""
        idx = np.array(pair_list(self.basis.n_so)).reshape(-1, 2)
        i, j = idx[:, 0], idx[:, 1]
        return hamiltonian.g[i[:, None], j[:, None], i[None, :], j[None, :]]

    def apply_hamiltonian(
        self, hamiltonian: SpinOrbitalHamiltonian, vec: FloatArray
    ) -> FloatArray:
        self._check(hamiltonian.n_so)
        return (
            self.apply_one_body_matrix(hamiltonian.h, vec)
            + self.apply_two_body_matrix(self.hamiltonian_pair_matrix(hamiltonian), vec)
            + hamiltonian.e_nuc * vec
        )

    def hamiltonian_matrix(self, hamiltonian: SpinOrbitalHamiltonian) -> FloatArray:
        """Dense sector matrix of `hamiltonian`, nuclear repulsion included."""
        self._check(hamiltonian.n_so)
        return (
            self.one_body_operator_matrix(hamiltonian.h)
            + self.two_body_operator_matrix(self.hamiltonian_pair_matrix(hamiltonian))
            + hamiltonian.e_nuc * np.eye(self.basis.dim)
        )

    def operator_matrix(self, coefficients: TwoBodyCoefficients) -> FloatArray:
        self._check(coefficients.n_so)
        if coefficients.rank == 2:
            return self.two_body_operator_matrix(coefficients.matrix)
        return self.one_body_operator_matrix(coefficients.matrix)

    def apply(self, coefficients: TwoBodyCoefficients, vec: FloatArray) -> FloatArray:
        self._check(coefficients.n_so)
        if coefficients.rank == 2:
            return self.apply_two_body_matrix(coefficients.matrix, vec)
        return self.apply_one_body_matrix(coefficients.matrix, vec)

    def apply_transpose(
        self, coefficients: TwoBodyCoefficients, vec: FloatArray
    ) -> FloatArray:
        """Apply the adjoint operator (coefficient matrix transposed)."""
        self._check(coefficients.n_so)
        if coefficients.rank == 2:
            return self.apply_two_body_matrix(coefficients.matrix.T, vec)
        return self.apply_one_body_matrix(coefficients.matrix.T, vec)

    def _check(self, n_so: int) -> None:
        if n_so != self.basis.n_so:
            raise DimensionError(
                f"operator over {n_so} spin orbitals applied in a sector over "
                f"{self.basis.n_so}"
            )


@functools.lru_cache(maxsize=32)
def fock_space(basis: DeterminantBasis) -> FockSpace:
    """Cached :class:`FockSpace` of a sector."""
    return FockSpace(basis)


def apply_two_body(coefficients: TwoBodyCoefficients, psi: StateVector) -> StateVector:
    """Return ``F|psi>`` inside the sector of `psi`.

    Raises
    ------
    DimensionError
        If `coefficients` and `psi` disagree on the number of spin
        orbitals.

    """
    return StateVector(psi.basis, fock_space(psi.basis).apply(coefficients, psi.coefficients))


def apply_hamiltonian(hamiltonian: SpinOrbitalHamiltonian, psi: StateVector) -> StateVector:
    """Return ``H|psi>`` including the nuclear repulsion constant."""
    space = fock_space(psi.basis)
    return StateVector(psi.basis, space.apply_hamiltonian(hamiltonian, psi.coefficients))


def _spin_flip(det: Determinant, n_spatial: int, raising: bool) -> dict[Determinant, float]:
    # S+ = sum_i a+_{i alpha} a_{i beta}; S- the reverse
    out: dict[Determinant, float] = {}
    for i in range(n_spatial):
        src, dst = (2 * i + 1, 2 * i) if raising else (2 * i, 2 * i + 1)
        res = annihilate(det, src)
        if res is None:
            continue
        res2 = create(res[0], dst)
        if res2 is None:
            continue
        out[res2[0]] = out.get(res2[0], 0.0) + res[1] * res2[1]
    return out


@functools.lru_cache(maxsize=32)
def spin_squared_matrix(basis: DeterminantBasis) -> FloatArray:
    """Dense matrix of ``S^2 = S- S+ + Sz^2 + Sz`` over a sector."""
    n_spatial = basis.n_so // 2
    mat = np.zeros((basis.dim, basis.dim))
    for col, det in enumerate(basis):
        mat[col, col] += basis.sz**2 + basis.sz
        for mid, c1 in _spin_flip(det, n_spatial, raising=True).items():
            for out, c2 in _spin_flip(mid, n_spatial, raising=False).items():
                mat[basis.index_of(out), col] += c1 * c2
    mat.setflags(write=False)
    return mat


def s_squared_expectation(psi: StateVector) -> float:
    """``<psi|S^2|psi> / <psi|psi>``."""
    norm2 = float(psi.coefficients @ psi.coefficients)
    if norm2 == 0.0:
        raise ZeroStateError("S^2 of the zero vector is undefined")
    return float(psi.coefficients @ spin_squared_matrix(psi.basis) @ psi.coefficients) / norm2


def multiplicity(s_squared: float) -> int:
    """``2S + 1`` from ``<S^2> = S(S + 1)``."""
    return int(round(np.sqrt(1.0 + 4.0 * max(s_squared, 0.0))))
