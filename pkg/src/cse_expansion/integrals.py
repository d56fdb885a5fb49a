"""Contracted s-Gaussian integrals for hydrogen chains."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from itertools import combinations, product
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
from scipy.special import erf

from cse_expansion import config
from cse_expansion.exceptions import (
    BasisError,
    ConditioningError,
    DomainError,
    GeometryError,
)

if TYPE_CHECKING:
    from cse_expansion.typing import FloatArray

__all__ = (
    "BOHR_PER_ANGSTROM",
    "ContractedShell",
    "Geometry",
    "IntegralSet",
    "boys_f0",
    "build_integral_set",
    "hydrogen_chain",
    "load_basis",
    "sto6g_shells",
)

logger = logging.getLogger(__name__)

BOHR_PER_ANGSTROM = 1.8897261254578281

DEFAULT_BASIS_FILE = os.path.join(os.path.dirname(__file__), "data", "sto-6g.basis")


def _readonly(values: Any) -> FloatArray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Geometry:
    """Nuclear framework.

    Parameters
    ----------
    centers : array_like
        Nuclear positions in bohr, shape ``(natoms, 3)``.
    charges : array_like
        Nuclear charges, one per center.
    label : str
        Free-form description carried into reports.

    """

    centers: FloatArray
    charges: FloatArray
    label: str = ""

    def __post_init__(self) -> None:
        centers = np.array(self.centers, dtype=np.float64).reshape(-1, 3)
        charges = np.array(self.charges, dtype=np.float64).reshape(-1)
        if len(charges) != len(centers):
            raise GeometryError(
                f"got {len(centers)} centers but {len(charges)} charges"
            )
        if np.any(charges <= 0):
            raise GeometryError("nuclear charges must be positive")
        for a, b in combinations(range(len(centers)), 2):
            if np.linalg.norm(centers[a] - centers[b]) <= 1e-10:
                raise GeometryError(f"centers {a} and {b} coincide")
        object.__setattr__(self, "centers", _readonly(centers))
        object.__setattr__(self, "charges", _readonly(charges))

    @property
    def natoms(self) -> int:
        return len(self.charges)

    def translated(self, shift: Sequence[float]) -> Geometry:
        """Rigidly shifted copy of the geometry."""
        return Geometry(self.centers + np.asarray(shift), self.charges, self.label)

    def nuclear_repulsion(self) -> float:
        """Sum of Z_A Z_B / |R_A - R_B| over distinct pairs."""
        total = 0.0
        for a, b in combinations(range(self.natoms), 2):
            dist = np.linalg.norm(self.centers[a] - self.centers[b])
            total += self.charges[a] * self.charges[b] / dist
        return float(total)


def _primitive_self_overlap(
    exponents: FloatArray, coefficients: FloatArray
) -> float:
    a = exponents[:, None]
    b = exponents[None, :]
    pair = (2.0 * np.sqrt(a * b) / (a + b)) ** 1.5
    return float(coefficients @ pair @ coefficients)


@dataclass(frozen=True, eq=False)
class ContractedShell:
    """Contracted s-type Gaussian on one center.

    The coefficients weigh *normalized* primitives and are rescaled on
    construction so that the contracted function has unit norm.
    Primitives are stored with exponents in decreasing order.

    """

    center: int
    exponents: FloatArray
    coefficients: FloatArray

    def __post_init__(self) -> None:
        exponents = np.array(self.exponents, dtype=np.float64).reshape(-1)
        coefficients = np.array(self.coefficients, dtype=np.float64).reshape(-1)
        if len(exponents) == 0 or len(exponents) != len(coefficients):
            raise BasisError(
                "a shell needs at least one primitive and one coefficient per "
                "exponent"
            )
        if np.any(exponents <= 0):
            raise BasisError("primitive exponents must be strictly positive")
        order = np.argsort(-exponents, kind="stable")
        exponents = exponents[order]
        coefficients = coefficients[order]
        if np.any(np.diff(exponents) >= 0):
            raise BasisError("primitive exponents must be distinct")
        norm2 = _primitive_self_overlap(exponents, coefficients)
        if norm2 <= 0:
            raise BasisError("contracted function has zero norm")
        coefficients = coefficients / np.sqrt(norm2)
        object.__setattr__(self, "exponents", _readonly(exponents))
        object.__setattr__(self, "coefficients", _readonly(coefficients))

    @property
    def nprim(self) -> int:
        return len(self.exponents)

    @property
    def weights(self) -> FloatArray:
        """Coefficients of the raw Gaussians ``exp(-a r^2)``."""
        return self.coefficients * (2.0 * self.exponents / np.pi) ** 0.75

    def self_overlap(self) -> float:
        return _primitive_self_overlap(self.exponents, self.coefficients)


@dataclass(frozen=True, eq=False)
class IntegralSet:
    """Atomic-orbital integrals in atomic units.

    ``eri`` holds the two-electron integrals ``(pq|rs)`` in chemist
    notation as a dense four-index array.

    """

    overlap: FloatArray
    kinetic: FloatArray
    nuclear: FloatArray
    eri: FloatArray
    e_nuc: float

    def __post_init__(self) -> None:
        for name in ("overlap", "kinetic", "nuclear", "eri"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def n_ao(self) -> int:
        return self.overlap.shape[0]

    @property
    def core_hamiltonian(self) -> FloatArray:
        return self.kinetic + self.nuclear


def load_basis(path: str | os.PathLike | None = None) -> list[tuple[FloatArray, FloatArray]]:
    """Read shells from a plain-text basis file.

    Parameters
    ----------
    path : str or PathLike, optional
        File to read. Defaults to ``cse.basis.file`` from the
        configuration and then to the bundled STO-6G hydrogen data.

    Returns
    -------
    list of (numpy.ndarray, numpy.ndarray)
        ``(exponents, coefficients)`` for every shell, in file order.

    Raises
    ------
    BasisError
        If a line does not hold exactly two numbers or the file holds
        no shell.

    """
    path = config.get("basis.file", path) or DEFAULT_BASIS_FILE
    shells: list[tuple[FloatArray, FloatArray]] = []
    current: list[tuple[float, float]] = []

    def close() -> None:
        if current:
            data = np.array(current)
            shells.append((data[:, 0], data[:, 1]))
            current.clear()

    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                # only a genuinely blank line separates shells
                if not raw.lstrip().startswith("#"):
                    close()
                continue
            fields = line.split()
            if len(fields) != 2:
                raise BasisError(
                    f"{path}:{lineno}: expected 'exponent coefficient', got {line!r}"
                )
            try:
                current.append((float(fields[0]), float(fields[1])))
            except ValueError as err:
                raise BasisError(f"{path}:{lineno}: {err}") from None
    close()
    if not shells:
        raise BasisError(f"{path}: no shells found")
    return shells


def sto6g_shells(
    geometry: Geometry, path: str | os.PathLike | None = None
) -> list[ContractedShell]:
    """One minimal-basis 1s shell on every center of `geometry`."""
    shells = load_basis(path)
    if len(shells) != 1:
        raise BasisError(
            f"a minimal hydrogen basis holds one shell, the file holds {len(shells)}"
        )
    exponents, coefficients = shells[0]
    return [ContractedShell(i, exponents, coefficients) for i in range(geometry.natoms)]


def boys_f0(x: Any, threshold: float | None = None) -> Any:
    """Zeroth-order Boys function.

    ``F0(x) = 1/2 sqrt(pi/x) erf(sqrt(x))``, replaced below `threshold`
    by the series ``1 - x/3 + x^2/10 - x^3/42``.

    Parameters
    ----------
    x : float or array_like
        Non-negative argument(s).
    threshold : float, optional
        Series/closed-form switch point; ``cse.integrals.boys-threshold``
        by default.

    Returns
    -------
    float or numpy.ndarray
        Same shape as `x`.

    Raises
    ------
    DomainError
        If any argument is negative.

    """
    threshold = config.get("integrals.boys-threshold", threshold)
    xs = np.asarray(x, dtype=np.float64)
    if np.any(xs < 0):
        raise DomainError("the Boys function is defined for x >= 0 only")
    small = xs < threshold
    safe = np.where(small, 1.0, xs)
    closed = 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe))
    series = 1.0 - xs / 3.0 + xs**2 / 10.0 - xs**3 / 42.0
    out = np.where(small, series, closed)
    if out.ndim == 0:
        return float(out)
    return out


class _Primitives:
    """Flattened view of every primitive in a list of shells."""

    def __init__(self, geometry: Geometry, shells: Sequence[ContractedShell]) -> None:
        self.exponents = np.concatenate([s.exponents for s in shells])
        self.weights = np.concatenate([s.weights for s in shells])
        self.positions = np.concatenate(
            [np.repeat(geometry.centers[s.center][None, :], s.nprim, axis=0) for s in shells]
        )
        bounds = np.cumsum([0] + [s.nprim for s in shells])
        self.slices = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
        # contraction matrix: primitive -> shell
        self.contraction = np.zeros((len(self.exponents), len(shells)))
        for i, sl in enumerate(self.slices):
            self.contraction[sl, i] = self.weights[sl]

        a = self.exponents[:, None]
        b = self.exponents[None, :]
        self.p = a + b
        self.mu = a * b / self.p
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        self.r2 = np.einsum("abx,abx->ab", diff, diff)
        self.kab = np.exp(-self.mu * self.r2)
        self.centers = (
            a[..., None] * self.positions[:, None, :]
            + b[..., None] * self.positions[None, :, :]
        ) / self.p[..., None]


def build_integral_set(
    geometry: Geometry, shells: Sequence[ContractedShell]
) -> IntegralSet:
    """Evaluate all AO integrals for s-type shells.

    Closed-form Gaussian-product expressions are used throughout; the
    Coulomb kernels go through :func:`boys_f0`.

    Parameters
    ----------
    geometry : Geometry
        Nuclear framework; supplies the shell centers and charges.
    shells : sequence of ContractedShell
        One basis function per shell.

    Returns
    -------
    IntegralSet
        Overlap, kinetic, nuclear attraction, electron repulsion and
        nuclear repulsion.

    Raises
    ------
    BasisError
        If a shell points to a center that does not exist.
    ConditioningError
        If the overlap matrix is not positive definite.

    """
    for shell in shells:
        if not 0 <= shell.center < geometry.natoms:
            raise BasisError(
                f"shell refers to center {shell.center} of a {geometry.natoms}-center geometry"
            )
    prims = _Primitives(geometry, shells)
    W = prims.contraction

    s_prim = (np.pi / prims.p) ** 1.5 * prims.kab
    t_prim = prims.mu * (3.0 - 2.0 * prims.mu * prims.r2) * s_prim

    v_prim = np.zeros_like(s_prim)
    for center, charge in zip(geometry.centers, geometry.charges):
        pc = prims.centers - center
        arg = prims.p * np.einsum("abx,abx->ab", pc, pc)
        v_prim -= charge * (2.0 * np.pi / prims.p) * prims.kab * boys_f0(arg)

    overlap = W.T @ s_prim @ W
    kinetic = W.T @ t_prim @ W
    nuclear = W.T @ v_prim @ W
    # exact symmetry of the one-electron matrices
    overlap = 0.5 * (overlap + overlap.T)
    kinetic = 0.5 * (kinetic + kinetic.T)
    nuclear = 0.5 * (nuclear + nuclear.T)

    n = len(shells)
    eri = np.empty((n, n, n, n))
    for mu, nu in product(range(n), repeat=2):
        if nu > mu:
            continue
        sl_mu, sl_nu = prims.slices[mu], prims.slices[nu]
        p = prims.p[sl_mu, sl_nu]
        q = prims.p
        pq = p[:, :, None, None] * q[None, None, :, :]
        psum = p[:, :, None, None] + q[None, None, :, :]
        d = prims.centers[sl_mu, sl_nu][:, :, None, None, :] - prims.centers[None, None]
        arg = pq / psum * np.einsum("abcdx,abcdx->abcd", d, d)
        block = (
            2.0
            * np.pi**2.5
            / (pq * np.sqrt(psum))
            * prims.kab[sl_mu, sl_nu][:, :, None, None]
            * prims.kab[None, None]
            * boys_f0(arg)
        )
        val = np.einsum(
            "a,b,abcd,cr,ds->rs",
            prims.weights[sl_mu],
            prims.weights[sl_nu],
            block,
            W,
            W,
        )
        val = 0.5 * (val + val.T)
        eri[mu, nu] = val
        eri[nu, mu] = val
    # (pq|rs) = (rs|pq)
    eri = 0.5 * (eri + eri.transpose(2, 3, 0, 1))

    smallest = float(np.linalg.eigvalsh(overlap)[0])
    if smallest <= 1e-10:
        raise ConditioningError(smallest)
    logger.debug(
        "integrals for %s: n_ao=%d, smallest overlap eigenvalue %.3e",
        geometry.label or "geometry",
        n,
        smallest,
    )
    return IntegralSet(
        overlap=overlap,
        kinetic=kinetic,
        nuclear=nuclear,
        eri=eri,
        e_nuc=geometry.nuclear_repulsion(),
    )


def hydrogen_chain(n: int, r_angstrom: float) -> Geometry:
    """Linear chain of `n` hydrogens spaced `r_angstrom` apart along z.

    Examples
    --------
    >>> geom = hydrogen_chain(4, 1.4)
    >>> geom.centers[:, 2]  # doctest: +SKIP
    array([0.        , 2.64561658, 5.29123316, 7.93684974])

    """
    if n < 2:
        raise DomainError(f"a chain needs at least two atoms, got {n}")
    if not r_angstrom > 0:
        raise DomainError(f"bond length must be positive, got {r_angstrom}")
    spacing = r_angstrom * BOHR_PER_ANGSTROM
    centers = np.zeros((n, 3))
    centers[:, 2] = spacing * np.arange(n)
    return Geometry(centers, np.ones(n), label=f"H{n} R={r_angstrom:g}A")
