from __future__ import annotations

import numpy as np
import pytest

from cse_expansion.dalgarno_lewis import (
    PerturbationSplit,
    dispersion,
    dl_cse_lsq,
    energy_and_residual,
    shift_invariance_check,
)
from cse_expansion.exceptions import DimensionError, DomainError, ZeroStateError
from cse_expansion.fci import fci_spectrum
from cse_expansion.fockspace import (
    StateVector,
    TwoBodyCoefficients,
    apply_pair_string,
    enumerate_basis,
    fock_space,
)
from cse_expansion.pipelines import DEFAULT_R, convention_factor, literature
from cse_expansion.scf import SpinOrbitalHamiltonian

H4 = literature()["h4"]


def _zero_hamiltonian(n_so):
    return SpinOrbitalHamiltonian(np.zeros((n_so, n_so)), np.zeros((n_so,) * 4))


def _ground(system, n_states=1):
    return fci_spectrum(system.hamiltonian, system.basis, n_states)


def _split(system):
    return PerturbationSplit.hartree_fock_complement(system.hamiltonian, system.orbitals)


def _contracted_dl_error(split, psi, F):
    space = fock_space(psi.basis)
    vec = psi.normalized().coefficients
    H = split.hamiltonian
    energy = float(vec @ space.apply_hamiltonian(H, vec))
    vpsi = space.apply_hamiltonian(split.v, vec)
    fpsi = space.apply(F, vec)
    w = space.apply_hamiltonian(H, fpsi) - energy * fpsi + vpsi - float(vec @ vpsi) * vec
    R = space.pair_amplitudes(vec) @ space.pair_amplitudes(w).T
    return 2.0 * float(np.linalg.norm(R))


@pytest.mark.parametrize("r", [0.6, 1.4, 2.6])
def test_eigenstates_have_zero_residual(h4, r):
    system = h4(r)
    spectrum = _ground(system, 4)
    for energy, state in zip(spectrum.eigenvalues, spectrum.states):
        e, residual = energy_and_residual(system.hamiltonian, state)
        assert e == pytest.approx(energy, abs=1e-10)
        assert residual.frobenius_norm <= 1e-10
        assert dispersion(system.hamiltonian, state) <= 1e-18


def test_reference_determinant_residual(h4):
    system = h4(1.4)
    hf = StateVector.from_determinant(system.basis, system.reference)
    energy, residual = energy_and_residual(system.hamiltonian, hf)
    assert energy == pytest.approx(system.orbitals.e_hf, abs=1e-10)
    assert residual.frobenius_norm > 1e-3
    assert dispersion(system.hamiltonian, hf) > 0


def test_residual_tensor(h4):
    system = h4(1.0)
    hf = StateVector.from_determinant(system.basis, system.reference)
    _, residual = energy_and_residual(system.hamiltonian, hf)
    R = residual.entries
    np.testing.assert_array_equal(R, -R.transpose(1, 0, 2, 3))
    np.testing.assert_array_equal(R, -R.transpose(0, 1, 3, 2))
    assert residual.frobenius_norm == pytest.approx(np.sqrt(np.sum(R**2)), rel=1e-12)

    # one entry straight from the operator string
    space = fock_space(system.basis)
    vec = hf.coefficients
    hvec = space.apply_hamiltonian(system.hamiltonian, vec)
    phi = hvec - float(vec @ hvec) * vec
    i, j, k, l = 4, 5, 0, 1
    value = 0.0
    for col, det in enumerate(system.basis):
        res = apply_pair_string(det, i, j, l, k)
        if res is not None:
            value += vec[system.basis.index_of(res[0])] * res[1] * phi[col]
    assert R[i, j, k, l] == pytest.approx(value, abs=1e-14)


def test_residual_vanishes_only_for_eigenstates(random_hamiltonian):
    basis = enumerate_basis(6, 3, 0.5)
    rng = np.random.default_rng(42)
    for seed in range(20):
        H = random_hamiltonian(3, seed)
        spectrum = fci_spectrum(H, basis, basis.dim)
        for state in spectrum.states:
            assert energy_and_residual(H, state)[1].frobenius_norm <= 1e-10
        for _ in range(5):
            psi = StateVector(basis, rng.normal(size=basis.dim))
            assert energy_and_residual(H, psi)[1].frobenius_norm > 1e-6


def test_dispersion_of_superposition(h4):
    system = h4(1.4)
    spectrum = _ground(system, 2)
    a, b = spectrum.states
    mix = a + b
    gap = spectrum.eigenvalues[1] - spectrum.eigenvalues[0]
    assert dispersion(system.hamiltonian, mix) == pytest.approx(gap**2 / 4, rel=1e-10)


def test_zero_state():
    basis = enumerate_basis(4, 2, 0)
    with pytest.raises(ZeroStateError):
        energy_and_residual(_zero_hamiltonian(4), StateVector(basis, np.zeros(4)))


@pytest.mark.parametrize("r", DEFAULT_R)
def test_two_body_operator_is_exact(h4, r):
    system = h4(r)
    report = dl_cse_lsq(_split(system), _ground(system).states[0], rank=2)
    assert report.dl_cse_error <= 1e-10
    assert report.dl_error <= 1e-9
    assert report.coefficients.rank == 2


@pytest.mark.parametrize("r", DEFAULT_R)
def test_one_body_operator_is_not(h4, r):
    system = h4(r)
    report = dl_cse_lsq(_split(system), _ground(system).states[0], rank=1)
    assert report.dl_cse_error >= 1e-4
    assert report.dl_error >= 1e-3


# rank-1 contracted residuals of the RHF/STO-6G chain at DEFAULT_R; the
# published table sits 20x to 140x lower with no common factor
ONE_BODY_DL_CSE_ERRORS = {
    0.6: 0.0939,
    1.0: 0.1498,
    1.4: 0.1749,
    1.8: 0.1155,
    2.2: 0.0570,
    2.6: 0.0265,
}


def test_one_body_errors_against_published_values(h4):
    computed = {}
    for r in DEFAULT_R:
        system = h4(r)
        report = dl_cse_lsq(_split(system), _ground(system).states[0], rank=1)
        computed[r] = report.dl_cse_error
        assert report.dl_cse_error == pytest.approx(ONE_BODY_DL_CSE_ERRORS[r], rel=2e-3)
    check = convention_factor(computed, H4["dl-cse-error-one-body"])
    assert not check["matches"]
    assert not check["constant-factor"]
    ratios = [check["ratios"][str(r)] for r in DEFAULT_R]
    assert all(a < b for a, b in zip(ratios, ratios[1:]))
    assert 15.0 < ratios[0] and ratios[-1] < 200.0


def test_least_squares_optimality(h4):
    system = h4(1.0)
    split = _split(system)
    psi = _ground(system).states[0]
    report = dl_cse_lsq(split, psi, rank=1)
    best = report.coefficients
    assert _contracted_dl_error(split, psi, best) == pytest.approx(
        report.dl_cse_error, rel=1e-10
    )
    rng = np.random.default_rng(7)
    for _ in range(10):
        delta = rng.normal(size=best.n_parameters)
        delta *= 1e-4 / np.linalg.norm(delta)
        trial = TwoBodyCoefficients.from_parameters(8, 1, best.parameters() + delta)
        assert _contracted_dl_error(split, psi, trial) >= report.dl_cse_error - 1e-12


@pytest.mark.parametrize("rank, constant", [(1, 1.0), (2, -5.0), (1, 0.0)])
def test_shift_invariance(h4, rank, constant):
    system = h4(1.0)
    psi = _ground(system).states[0]
    plain, shifted = shift_invariance_check(_split(system), psi, constant, rank)
    assert shifted.dl_cse_error == pytest.approx(plain.dl_cse_error, abs=1e-12)
    assert shifted.dl_error == pytest.approx(plain.dl_error, abs=1e-12)
    assert shifted.de_dlambda == pytest.approx(plain.de_dlambda + constant, abs=1e-12)


def test_zero_perturbation(h4):
    system = h4(1.4)
    split = PerturbationSplit(system.hamiltonian, _zero_hamiltonian(8))
    report = dl_cse_lsq(split, _ground(system).states[0], rank=2)
    assert report.dl_cse_error == 0.0
    assert report.dl_error == 0.0
    assert np.all(report.coefficients.matrix == 0.0)
    assert report.de_dlambda == 0.0


def test_warns_for_non_eigenstate(h4):
    system = h4(1.4)
    hf = StateVector.from_determinant(system.basis, system.reference)
    with pytest.warns(UserWarning, match="not an eigenstate"):
        dl_cse_lsq(_split(system), hf, rank=1)


def test_split_validation(h4):
    H = h4(1.0).hamiltonian
    with pytest.raises(DomainError, match="lambda"):
        PerturbationSplit(H, _zero_hamiltonian(8), lam=1.5)
    with pytest.raises(DimensionError):
        PerturbationSplit(H, _zero_hamiltonian(6))
    with pytest.raises(DomainError, match="rank"):
        dl_cse_lsq(PerturbationSplit(H, _zero_hamiltonian(8)), _ground(h4(1.0)).states[0], 3)


def test_hartree_fock_complement(h4):
    system = h4(1.4)
    split = _split(system)
    assert split.hamiltonian is system.hamiltonian
    np.testing.assert_allclose(
        split.v.h,
        system.hamiltonian.h - np.diag(system.orbitals.spin_orbital_energies),
        atol=1e-14,
    )
    np.testing.assert_array_equal(split.v.g, system.hamiltonian.g)
    halfway = PerturbationSplit(split.h0, split.v, 0.5)
    np.testing.assert_allclose(
        halfway.hamiltonian.h, system.hamiltonian.h + 0.5 * split.v.h, atol=1e-14
    )


def test_conditioning_is_reported(h4):
    system = h4(1.8)
    report = dl_cse_lsq(_split(system), _ground(system).states[0], rank=2)
    assert 0.0 <= report.lsq_conditioning <= 1.0
    assert 0 < report.lsq_rank <= report.coefficients.n_parameters
