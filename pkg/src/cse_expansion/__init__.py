from cse_expansion import config  # isort:skip; load cse-expansion config

try:
    from cse_expansion.version import __version__
except ImportError:  # not installed from a VCS checkout
    __version__ = "0.1.0"

from cse_expansion.ansatz import (
    CseSolveResult,
    ExpansionForm,
    ExpansionParams,
    build_state,
    cse_gradient,
    cse_objective,
    identify_state,
    solve_cse,
    solve_cse_excited,
)
from cse_expansion.dalgarno_lewis import (
    PerturbationSplit,
    dispersion,
    dl_cse_lsq,
    energy_and_residual,
)
from cse_expansion.fci import Spectrum, correlation_energy, fci_spectrum
from cse_expansion.fockspace import (
    DeterminantBasis,
    StateVector,
    TwoBodyCoefficients,
    apply_hamiltonian,
    apply_two_body,
    enumerate_basis,
    s_squared_expectation,
)
from cse_expansion.integrals import build_integral_set, hydrogen_chain, sto6g_shells
from cse_expansion.lbfgs import OptimizerOptions, lbfgs_minimize
from cse_expansion.scf import (
    SpinOrbitalHamiltonian,
    hartree_fock_hamiltonian,
    mo_transform,
    mp2_energy,
    orthonormal_orbitals_open_shell,
    rhf_solve,
    zeroth_order_hamiltonian,
)

__all__ = (
    "__version__",
    "CseSolveResult",
    "DeterminantBasis",
    "ExpansionForm",
    "ExpansionParams",
    "OptimizerOptions",
    "PerturbationSplit",
    "Spectrum",
    "SpinOrbitalHamiltonian",
    "StateVector",
    "TwoBodyCoefficients",
    "apply_hamiltonian",
    "apply_two_body",
    "build_integral_set",
    "build_state",
    "correlation_energy",
    "cse_gradient",
    "cse_objective",
    "dispersion",
    "dl_cse_lsq",
    "energy_and_residual",
    "enumerate_basis",
    "fci_spectrum",
    "hartree_fock_hamiltonian",
    "hydrogen_chain",
    "identify_state",
    "lbfgs_minimize",
    "mo_transform",
    "mp2_energy",
    "orthonormal_orbitals_open_shell",
    "rhf_solve",
    "s_squared_expectation",
    "solve_cse",
    "solve_cse_excited",
    "sto6g_shells",
    "zeroth_order_hamiltonian",
)
