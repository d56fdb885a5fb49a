"""Two-body product expansions solved through the contracted Schrödinger equation.

A state is built from a reference determinant by ``M`` layers,

    linear:       psi = (1 + F_M) ... (1 + F_1) |ref>
    exponential:  psi = exp(F_M) ... exp(F_1) |ref>

and the layer coefficients are optimized so that the contracted
Schrödinger residual of the normalized state vanishes. The objective is
the squared Frobenius norm of that residual over all spin-orbital
quadruples; its gradient is evaluated by an adjoint sweep through the
layers.

"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np

from cse_expansion import config
from cse_expansion.dalgarno_lewis import PerturbationSplit
from cse_expansion.exceptions import (
    DimensionError,
    DomainError,
    SeriesError,
    ZeroStateError,
)
from cse_expansion.fockspace import (
    StateVector,
    TwoBodyCoefficients,
    enumerate_basis,
    fock_space,
    spin_projection,
)
from cse_expansion.lbfgs import OptimizerOptions, lbfgs_minimize

if TYPE_CHECKING:
    from cse_expansion.fci import Spectrum
    from cse_expansion.fockspace import DeterminantBasis, FockSpace
    from cse_expansion.scf import SpinOrbitalHamiltonian
    from cse_expansion.typing import Determinant, FloatArray, GradientMode

__all__ = (
    "CseObjective",
    "CseSolveResult",
    "ExpansionForm",
    "ExpansionParams",
    "build_state",
    "cse_gradient",
    "cse_objective",
    "excited_references",
    "identify_state",
    "solve_cse",
    "solve_cse_excited",
)

logger = logging.getLogger(__name__)

# the objective sums each stored i<j, k<l residual entry four times
_FULL_TENSOR_WEIGHT = 4.0


class ExpansionForm(str, Enum):
    LINEAR = "linear"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True, eq=False)
class ExpansionParams:
    """Layers of a product expansion acting on a reference determinant."""

    form: ExpansionForm
    layers: tuple[TwoBodyCoefficients, ...]
    reference: Determinant

    def __post_init__(self) -> None:
        object.__setattr__(self, "form", ExpansionForm(self.form))
        layers = tuple(self.layers)
        if not layers:
            raise DomainError("an expansion needs at least one layer")
        if len({(layer.n_so, layer.rank) for layer in layers}) != 1:
            raise DimensionError("all layers must share n_so and rank")
        if self.reference < 0 or self.reference >> layers[0].n_so:
            raise DomainError(
                f"reference {self.reference:#b} does not fit in {layers[0].n_so} spin orbitals"
            )
        object.__setattr__(self, "layers", layers)

    @classmethod
    def zeros(
        cls,
        n_so: int,
        reference: Determinant,
        n_layers: int,
        form: ExpansionForm | str = ExpansionForm.LINEAR,
        rank: int = 2,
    ) -> ExpansionParams:
        layers = tuple(TwoBodyCoefficients.zeros(n_so, rank) for _ in range(n_layers))
        return cls(ExpansionForm(form), layers, reference)

    @property
    def n_so(self) -> int:
        return self.layers[0].n_so

    @property
    def rank(self) -> int:
        return self.layers[0].rank

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_parameters(self) -> int:
        return sum(layer.n_parameters for layer in self.layers)

    @property
    def basis(self) -> DeterminantBasis:
        """The sector of the reference determinant."""
        return enumerate_basis(
            self.n_so, bin(self.reference).count("1"), spin_projection(self.reference)
        )

    def parameters(self) -> FloatArray:
        return np.concatenate([layer.parameters() for layer in self.layers])

    def with_parameters(self, x: FloatArray) -> ExpansionParams:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if len(x) != self.n_parameters:
            raise DimensionError(
                f"{len(x)} parameters for an expansion with {self.n_parameters}"
            )
        per_layer = self.layers[0].n_parameters
        layers = tuple(
            TwoBodyCoefficients.from_parameters(
                self.n_so, self.rank, x[k * per_layer : (k + 1) * per_layer]
            )
            for k in range(self.n_layers)
        )
        return ExpansionParams(self.form, layers, self.reference)


def _apply(space: FockSpace, rank: int, matrix: FloatArray, vec: FloatArray) -> FloatArray:
    if rank == 2:
        return space.apply_two_body_matrix(matrix, vec)
    return space.apply_one_body_matrix(matrix, vec)


def _amplitudes(space: FockSpace, rank: int, vec: FloatArray) -> FloatArray:
    if rank == 2:
        return space.pair_amplitudes(vec)
    return space.single_amplitudes(vec)


def _exp_apply(
    space: FockSpace,
    rank: int,
    matrix: FloatArray,
    vec: FloatArray,
    tolerance: float,
    max_terms: int,
) -> tuple[FloatArray, int]:
    """``exp(F) vec`` by Taylor series; also returns the number of terms."""
    total = vec.copy()
    term = vec
    for n in range(1, max_terms + 1):
        term = _apply(space, rank, matrix, term) / n
        total += term
        if np.linalg.norm(term) < tolerance * np.linalg.norm(total):
            return total, n
    raise SeriesError(
        f"exponential series did not converge in {max_terms} terms; "
        f"coefficient norm {np.linalg.norm(matrix):.3e}"
    )


class _Forward:
    """States after each layer of an expansion."""

    def __init__(
        self,
        space: FockSpace,
        form: ExpansionForm,
        rank: int,
        matrices: list[FloatArray],
        start: FloatArray,
        tolerance: float,
        max_terms: int,
    ) -> None:
        self.states = [start]
        self.terms = []
        vec = start
        for matrix in matrices:
            if form is ExpansionForm.LINEAR:
                vec = vec + _apply(space, rank, matrix, vec)
                self.terms.append(1)
            else:
                vec, n = _exp_apply(space, rank, matrix, vec, tolerance, max_terms)
                self.terms.append(n)
            self.states.append(vec)


def _layer_gradient(
    space: FockSpace,
    form: ExpansionForm,
    rank: int,
    matrix: FloatArray,
    adjoint: FloatArray,
    state: FloatArray,
    n_terms: int,
) -> FloatArray:
    """Derivative of ``adjoint . L(F) state`` with respect to every entry of F."""
    if form is ExpansionForm.LINEAR:
        return _amplitudes(space, rank, adjoint) @ _amplitudes(space, rank, state).T
    # sum_{i,j} (A_P (F^T)^j adjoint).(A_Q F^i state) / (i + j + 1)!
    order = n_terms + 1
    powers = [state]
    adjoint_powers = [adjoint]
    for _ in range(order):
        powers.append(_apply(space, rank, matrix, powers[-1]))
        adjoint_powers.append(_apply(space, rank, matrix.T, adjoint_powers[-1]))
    grad = np.zeros_like(matrix)
    for i in range(order + 1):
        weighted = sum(
            adjoint_powers[j] / math.factorial(i + j + 1) for j in range(order + 1 - i)
        )
        grad += _amplitudes(space, rank, weighted) @ _amplitudes(space, rank, powers[i]).T
    return grad


class CseObjective:
    """Squared contracted Schrödinger residual as a function of parameters.

    Calling the object with a flat parameter vector returns
    ``(value, gradient)`` and is directly usable with
    :func:`~cse_expansion.lbfgs.lbfgs_minimize`.

    Parameters
    ----------
    hamiltonian : SpinOrbitalHamiltonian
        Hamiltonian whose eigenstates are targeted.
    template : ExpansionParams
        Supplies the form, rank, layer count and reference.
    gradient_mode : {"analytic", "finite-difference"}
        Adjoint sweep or central differences.

    """

    def __init__(
        self,
        hamiltonian: SpinOrbitalHamiltonian,
        template: ExpansionParams,
        gradient_mode: GradientMode = "analytic",
        *,
        taylor_tolerance: float | None = None,
        taylor_max_terms: int | None = None,
        fd_step: float = 1e-5,
    ) -> None:
        if hamiltonian.n_so != template.n_so:
            raise DimensionError(
                f"Hamiltonian over {hamiltonian.n_so} and expansion over "
                f"{template.n_so} spin orbitals"
            )
        if gradient_mode not in ("analytic", "finite-difference"):
            raise DomainError(f"unknown gradient mode {gradient_mode!r}")
        self.hamiltonian = hamiltonian
        self.template = template
        self.gradient_mode = gradient_mode
        self.taylor_tolerance = config.get("ansatz.taylor-tolerance", taylor_tolerance)
        self.taylor_max_terms = config.get("ansatz.taylor-max-terms", taylor_max_terms)
        self.fd_step = fd_step
        self.basis = template.basis
        self.space = fock_space(self.basis)
        self.mask = template.layers[0].mask
        self._start = np.zeros(self.basis.dim)
        self._start[self.basis.index_of(template.reference)] = 1.0

    def _matrices(self, x: FloatArray) -> list[FloatArray]:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if len(x) != self.template.n_parameters:
            raise DimensionError(
                f"{len(x)} parameters for an expansion with {self.template.n_parameters}"
            )
        per_layer = int(self.mask.sum())
        matrices = []
        for k in range(self.template.n_layers):
            matrix = np.zeros(self.mask.shape)
            matrix[self.mask] = x[k * per_layer : (k + 1) * per_layer]
            matrices.append(matrix)
        return matrices

    def _forward(self, matrices: list[FloatArray]) -> _Forward:
        return _Forward(
            self.space,
            self.template.form,
            self.template.rank,
            matrices,
            self._start,
            self.taylor_tolerance,
            self.taylor_max_terms,
        )

    def state(self, x: FloatArray) -> StateVector:
        """Unnormalized expansion state at `x`."""
        return StateVector(self.basis, self._forward(self._matrices(x)).states[-1])

    def _residual(self, psi: FloatArray):
        norm = float(np.linalg.norm(psi))
        if norm == 0.0:
            raise ZeroStateError("expansion produced the zero vector")
        u = psi / norm
        hu = self.space.apply_hamiltonian(self.hamiltonian, u)
        energy = float(u @ hu)
        phi = hu - energy * u
        yu = self.space.pair_amplitudes(u)
        yphi = self.space.pair_amplitudes(phi)
        residual = yu @ yphi.T
        return norm, u, hu, energy, phi, yu, yphi, residual

    def value(self, x: FloatArray) -> tuple[float, float]:
        """``(objective, energy)`` at `x`."""
        psi = self._forward(self._matrices(x)).states[-1]
        *_, energy, _, _, _, residual = self._residual(psi)
        return _FULL_TENSOR_WEIGHT * float(np.sum(residual**2)), energy

    def gradient(self, x: FloatArray) -> FloatArray:
        if self.gradient_mode == "finite-difference":
            return self._fd_gradient(x)
        return self._analytic(x)[1]

    def __call__(self, x: FloatArray) -> tuple[float, FloatArray]:
        if self.gradient_mode == "finite-difference":
            return self.value(x)[0], self._fd_gradient(x)
        return self._analytic(x)

    def _analytic(self, x: FloatArray) -> tuple[float, FloatArray]:
        matrices = self._matrices(x)
        forward = self._forward(matrices)
        psi = forward.states[-1]
        norm, u, hu, energy, phi, yu, yphi, residual = self._residual(psi)
        value = _FULL_TENSOR_WEIGHT * float(np.sum(residual**2))

        space = self.space
        g_phi = space.pair_creation(residual @ yphi)
        gt_u = space.pair_creation(residual.T @ yu)
        u_g_u = float(np.sum(residual * (yu @ yu.T)))
        h_gt_u = space.apply_hamiltonian(self.hamiltonian, gt_u) - energy * gt_u
        grad_u = 2.0 * _FULL_TENSOR_WEIGHT * (g_phi + h_gt_u - 2.0 * u_g_u * hu)
        adjoint = (grad_u - u * float(u @ grad_u)) / norm

        rank = self.template.rank
        form = self.template.form
        grads = [None] * len(matrices)
        for k in reversed(range(len(matrices))):
            matrix = matrices[k]
            grads[k] = _layer_gradient(
                space, form, rank, matrix, adjoint, forward.states[k], forward.terms[k]
            )[self.mask]
            if k == 0:
                break
            if form is ExpansionForm.LINEAR:
                adjoint = adjoint + _apply(space, rank, matrix.T, adjoint)
            else:
                adjoint, _ = _exp_apply(
                    space,
                    rank,
                    matrix.T,
                    adjoint,
                    self.taylor_tolerance,
                    self.taylor_max_terms,
                )
        return value, np.concatenate(grads)

    def _fd_gradient(self, x: FloatArray) -> FloatArray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        grad = np.empty_like(x)
        for n in range(len(x)):
            step = np.zeros_like(x)
            step[n] = self.fd_step
            grad[n] = (self.value(x + step)[0] - self.value(x - step)[0]) / (
                2.0 * self.fd_step
            )
        return grad


def build_state(params: ExpansionParams) -> StateVector:
    """Unnormalized expansion state.

    Raises
    ------
    SeriesError
        If an exponential layer's Taylor series does not converge.

    """
    basis = params.basis
    space = fock_space(basis)
    start = StateVector.from_determinant(basis, params.reference).coefficients.copy()
    forward = _Forward(
        space,
        params.form,
        params.rank,
        [layer.matrix for layer in params.layers],
        start,
        config.get("ansatz.taylor-tolerance"),
        config.get("ansatz.taylor-max-terms"),
    )
    return StateVector(basis, forward.states[-1])


def cse_objective(
    params: ExpansionParams, hamiltonian: SpinOrbitalHamiltonian
) -> tuple[float, float]:
    """Squared residual norm and Rayleigh-quotient energy of the expansion."""
    return CseObjective(hamiltonian, params).value(params.parameters())


def cse_gradient(
    params: ExpansionParams,
    hamiltonian: SpinOrbitalHamiltonian,
    mode: GradientMode = "analytic",
) -> FloatArray:
    """Gradient of :func:`cse_objective` with respect to all layer parameters."""
    return CseObjective(hamiltonian, params, mode).gradient(params.parameters())


@dataclass(frozen=True, eq=False)
class CseSolveResult:
    """Converged (or best) expansion of a contracted Schrödinger solve.

    ``fci_index`` and ``fci_overlap`` are filled in when the state was
    identified against a full-CI spectrum.

    """

    energy: float
    residual_norm: float
    parameters: ExpansionParams
    n_iterations: int
    grad_norm: float
    state: StateVector
    converged: bool
    message: str
    fci_index: Optional[int] = None
    fci_overlap: Optional[float] = None

    @property
    def objective(self) -> float:
        return self.residual_norm**2


def solve_cse(
    hamiltonian: SpinOrbitalHamiltonian,
    reference: Determinant,
    n_layers: int = 2,
    form: ExpansionForm | str | None = None,
    options: OptimizerOptions | None = None,
    seed: int | None = None,
    *,
    rank: int = 2,
    init_scale: float | None = None,
    callback: Optional[Callable[[FloatArray, float], None]] = None,
    reference_hamiltonian: SpinOrbitalHamiltonian | None = None,
    continuation_steps: int | None = None,
) -> CseSolveResult:
    """Solve the contracted Schrödinger equation with a product expansion.

    Without a `reference_hamiltonian` the residual of `hamiltonian` is
    minimized directly from the near-zero starting coefficients, which
    finds the stationary state nearest the reference determinant. With
    one, the solve follows ``H(lam) = h0 + lam * (H - h0)`` from
    ``lam = 0``, where the reference must be an eigenstate of ``h0``, to
    ``lam = 1`` in `continuation_steps` equal steps, each warm-started
    from the previous solution. The result is then the state adiabatically
    connected to the reference, e.g. the ground state for the aufbau
    determinant of the Hartree-Fock operator.

    Parameters
    ----------
    hamiltonian : SpinOrbitalHamiltonian
        Target Hamiltonian.
    reference : int
        Reference determinant; fixes the sector.
    n_layers : int
        Number of layers ``M``.
    form : {"linear", "exponential"}, optional
        ``cse.ansatz.form`` by default.
    options : OptimizerOptions, optional
        ``cse.optimizer`` configuration by default.
    seed : int, optional
        Seed of the uniform ``[-init_scale, init_scale]`` starting
        coefficients; ``cse.ansatz.seed`` by default.
    rank : {1, 2}
        Body rank of the layers.
    init_scale : float, optional
        ``cse.ansatz.init-scale`` by default.
    callback : callable, optional
        Forwarded to the optimizer of the final (``lam = 1``) solve;
        receives ``(x, objective)``.
    reference_hamiltonian : SpinOrbitalHamiltonian, optional
        ``h0`` of the continuation path, e.g.
        :func:`~cse_expansion.scf.zeroth_order_hamiltonian`.
    continuation_steps : int, optional
        ``cse.ansatz.continuation-steps`` by default.

    Returns
    -------
    CseSolveResult
        Energy is the Rayleigh quotient of the normalized final state;
        ``n_iterations`` counts the optimizer iterations of the whole path.

    """
    form = ExpansionForm(config.get("ansatz.form", form))
    seed = config.get("ansatz.seed", seed)
    init_scale = config.get("ansatz.init-scale", init_scale)
    if options is None:
        options = OptimizerOptions.from_config()
    if n_layers < 1:
        raise DomainError(f"need at least one layer, got {n_layers}")

    template = ExpansionParams.zeros(hamiltonian.n_so, reference, n_layers, form, rank)
    objective = CseObjective(hamiltonian, template, options.gradient_mode)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-init_scale, init_scale, template.n_parameters)
    logger.info(
        "CSE(%d) %s solve from reference %#b: %d parameters, seed %d",
        n_layers,
        form.value,
        reference,
        template.n_parameters,
        seed,
    )
    n_path_iterations = 0
    if reference_hamiltonian is not None:
        x0, n_path_iterations = _follow_path(
            hamiltonian, reference_hamiltonian, template, x0, options, continuation_steps
        )
    report = lbfgs_minimize(objective, x0, options, callback=callback)

    state = objective.state(report.x).normalized()
    value, energy = objective.value(report.x)
    return CseSolveResult(
        energy=energy,
        residual_norm=float(np.sqrt(value)),
        parameters=template.with_parameters(report.x),
        n_iterations=n_path_iterations + report.n_iterations,
        grad_norm=report.grad_norm,
        state=state,
        converged=report.converged,
        message=report.message,
    )


def _follow_path(
    hamiltonian: SpinOrbitalHamiltonian,
    h0: SpinOrbitalHamiltonian,
    template: ExpansionParams,
    x: FloatArray,
    options: OptimizerOptions,
    steps: int | None,
) -> tuple[FloatArray, int]:
    """Coefficients solving ``H(lam)`` just below ``lam = 1``."""
    steps = config.get("ansatz.continuation-steps", steps)
    tolerance = config.get("ansatz.continuation-tolerance")
    if steps < 1:
        raise DomainError(f"need at least one continuation step, got {steps}")
    if h0.n_so != hamiltonian.n_so:
        raise DimensionError(
            f"reference Hamiltonian over {h0.n_so} spin orbitals for a "
            f"{hamiltonian.n_so}-spin-orbital problem"
        )
    path_options = replace(
        options, gradient_tolerance=max(options.gradient_tolerance, tolerance)
    )
    split = PerturbationSplit(h0, hamiltonian - h0)
    n_iterations = 0
    for k in range(1, steps):
        lam = k / steps
        objective = CseObjective(
            replace(split, lam=lam).hamiltonian, template, options.gradient_mode
        )
        with warnings.catch_warnings():
            # intermediate points only seed the next one
            warnings.simplefilter("ignore")
            report = lbfgs_minimize(objective, x, path_options)
        x = report.x
        n_iterations += report.n_iterations
        logger.debug(
            "continuation lambda = %.3f: objective %.3e after %d iterations",
            lam,
            report.fun,
            report.n_iterations,
        )
    return x, n_iterations


def identify_state(state: StateVector, spectrum: Spectrum) -> tuple[int, float]:
    """Index of the eigenvector with the largest ``|overlap|`` and that overlap."""
    overlaps = np.abs(spectrum.eigenvector_matrix().T @ state.normalized().coefficients)
    index = int(np.argmax(overlaps))
    return index, float(overlaps[index])


def solve_cse_excited(
    hamiltonian: SpinOrbitalHamiltonian,
    reference: Determinant,
    n_layers: int = 2,
    options: OptimizerOptions | None = None,
    seed: int | None = None,
    *,
    spectrum: Spectrum | None = None,
    overlap_threshold: float | None = None,
    form: ExpansionForm | str | None = None,
    reference_hamiltonian: SpinOrbitalHamiltonian | None = None,
) -> CseSolveResult:
    """:func:`solve_cse` from an excited reference, identified against FCI.

    The solve converges to the stationary state nearest the reference,
    or, with a `reference_hamiltonian` in which the reference is a
    nondegenerate eigenstate, to the state connected to it along the
    continuation path.
    With a `spectrum`, the result carries the index of the eigenvector
    it overlaps most; an overlap below `overlap_threshold` triggers a
    warning instead of silently accepting the state.

    """
    overlap_threshold = config.get("excited.overlap-threshold", overlap_threshold)
    result = solve_cse(
        hamiltonian,
        reference,
        n_layers,
        form,
        options,
        seed,
        reference_hamiltonian=reference_hamiltonian,
    )
    if spectrum is None:
        return result
    index, overlap = identify_state(result.state, spectrum)
    if overlap < overlap_threshold:
        warnings.warn(
            f"CSE state from reference {reference:#b} is not identified: largest FCI "
            f"overlap {overlap:.4f} (state {index})",
            stacklevel=2,
        )
    return replace(result, fci_index=index, fci_overlap=overlap)


def excited_references(
    basis: DeterminantBasis,
    orbital_energies: FloatArray,
    reference: Determinant,
) -> list[Determinant]:
    """Single and double promotions of `reference` within `basis`.

    Ordered by zeroth-order energy (sum of occupied spin-orbital
    energies), ties broken by position in `basis`.

    """
    eps = np.asarray(orbital_energies, dtype=np.float64)
    if len(eps) != basis.n_so:
        raise DimensionError(
            f"{len(eps)} spin-orbital energies for {basis.n_so} spin orbitals"
        )
    candidates = []
    for pos, det in enumerate(basis):
        level = bin(det & ~reference).count("1")
        if level in (1, 2):
            energy = sum(eps[p] for p in range(basis.n_so) if (det >> p) & 1)
            candidates.append((energy, pos, det))
    candidates.sort()
    return [det for _, _, det in candidates]
