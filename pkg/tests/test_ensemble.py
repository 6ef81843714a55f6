"""
Covariance construction, validation and Hamiltonian sampling
"""

import numpy as np
import pytest

from app.core.ensemble import (EnsembleSpec, LatticeSpec, band_spec, bilinear_form, block_unitary, build_covariance,
                               characteristic_fn, covariance_from_matrix, draw_hamiltonians,
                               ensemble_from_config, gue_spec, sample, validate_covariance, variance_matrix)
from app.exceptions import ConstructionError, InvalidInput, Refusal
from app.utils.parallel import make_rng


def test_samples_are_exactly_hermitian():
    spec = band_spec(3, 2, 'exponential_band', 1.5)
    H = draw_hamiltonians(spec, make_rng(1, 0, 0), 50)
    assert H.shape == (50, 6, 6)
    assert np.array_equal(H, np.conj(np.swapaxes(H, -1, -2)))


def test_entry_variances_follow_the_profile():
    spec = band_spec(2, 1, 'exponential_band', 1.0)
    H = draw_hamiltonians(spec, make_rng(5, 0, 0), 20000)
    second_moment = np.mean(np.abs(H) ** 2, axis=0)
    V = variance_matrix(spec)
    # |H_xy|^2 has standard deviation V off the diagonal and sqrt(2) V on it
    assert np.all(np.abs(second_moment - V) < 6 * np.sqrt(2) * V / np.sqrt(20000))


def test_sample_is_reproducible_per_draw_index():
    spec = band_spec(2, 2, 'gaussian_band', 1.0)
    first = sample(spec, 11, 3)
    again = sample(spec, 11, 3)
    other = sample(spec, 11, 4)
    assert np.array_equal(first.matrix, again.matrix)
    assert not np.array_equal(first.matrix, other.matrix)
    assert first.spec_id == other.spec_id


def test_characteristic_function_matches_monte_carlo():
    spec = gue_spec(2, 0.5)
    K = np.array([[0.4, 0.3 - 0.2j], [0.3 + 0.2j, -0.1]])
    H = draw_hamiltonians(spec, make_rng(2, 0, 0), 40000)
    phases = np.exp(-1j * np.einsum('kab,ba->k', H, K))
    assert abs(phases.mean() - characteristic_fn(spec, K)) < 5 / np.sqrt(40000)


def test_bilinear_form_is_symmetric():
    spec = band_spec(2, 2, 'exponential_band', 2.0)
    rng = np.random.default_rng(0)
    K = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    K2 = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.isclose(bilinear_form(spec, K, K2), bilinear_form(spec, K2, K))


def test_bilinear_form_rejects_wrong_shape():
    with pytest.raises(InvalidInput):
        bilinear_form(gue_spec(2), np.eye(3), np.eye(3))


def test_block_unitary_is_unitary_and_block_diagonal():
    spec = band_spec(3, 2, 'exponential_band', 1.0)
    U = block_unitary(spec, np.random.default_rng(4))
    assert np.allclose(U @ np.conj(U.T), np.eye(6), atol=1e-12)
    assert np.all(U[0:2, 2:6] == 0)


def test_gue_profile_on_two_sites_is_singular():
    with pytest.raises(ConstructionError):
        build_covariance(LatticeSpec(2), 'gue', 1.0)


def test_unknown_profile_is_rejected():
    with pytest.raises(InvalidInput):
        build_covariance(LatticeSpec(2), 'lorentzian', 1.0)


def test_asymmetric_matrix_is_rejected():
    with pytest.raises(InvalidInput):
        covariance_from_matrix([[1.0, 0.2], [0.1, 1.0]])


def test_exponential_band_has_nonpositive_inverse_off_diagonal():
    cov = build_covariance(LatticeSpec(6), 'exponential_band', 1.0, width=2.0)
    report = validate_covariance(cov)
    assert report.valid
    assert report.w_sign_ok
    assert np.allclose(cov.J @ cov.w, np.eye(6), atol=1e-10)


def test_indefinite_matrix_reports_invalid_without_raising():
    cov = covariance_from_matrix([[1.0, 2.0], [2.0, 1.0]])
    report = validate_covariance(cov)
    assert not report.valid
    assert report.result_of('Positive definiteness') == 'FAIL'
    assert report.min_eigenvalue == pytest.approx(-1.0)


def test_invalid_covariance_refuses_to_sample():
    cov = covariance_from_matrix([[1.0, 2.0], [2.0, 1.0]])
    spec = EnsembleSpec(LatticeSpec(2), 1, cov)
    with pytest.raises(Refusal):
        sample(spec, 0)


def test_config_accepts_rational_scale():
    spec = ensemble_from_config({'lattice': {'num_sites': 1}, 'orbitals': 3,
                                 'covariance': {'profile': 'gue', 'scale': '1/4'}})
    assert spec.J[0, 0] == 0.25
    assert spec.dim == 3


def test_explicit_profile_needs_matching_entry_count():
    with pytest.raises(InvalidInput):
        ensemble_from_config({'lattice': {'num_sites': 2}, 'orbitals': 1,
                              'covariance': {'profile': 'explicit', 'scale': 1, 'matrix': [1.0, 0.1, 0.1]}})


def test_characteristic_function_is_block_unitary_invariant():
    spec = band_spec(3, 2, 'exponential_band', 1.0)
    rng = np.random.default_rng(8)
    A = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    K = 0.3 * (A + np.conj(A.T))
    U = block_unitary(spec, rng)
    rotated = U @ K @ np.conj(U.T)
    assert np.isclose(characteristic_fn(spec, rotated), characteristic_fn(spec, K), rtol=1e-12, atol=1e-15)
    assert np.isclose(bilinear_form(spec, rotated, rotated), bilinear_form(spec, K, K), rtol=1e-12)


def test_two_site_covariance_and_inverse():
    cov = build_covariance(LatticeSpec(2), lambda r: np.where(r == 0, 2.0, 1.0), 1.0)
    assert np.array_equal(cov.J, [[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(cov.w, np.array([[2.0, -1.0], [-1.0, 2.0]]) / 3.0, atol=1e-14)
    assert cov.report.valid
    assert cov.report.min_eigenvalue == pytest.approx(1.0)


def test_negative_profile_is_rejected():
    with pytest.raises(InvalidInput):
        build_covariance(LatticeSpec(3), lambda r: 1.0 - r, 1.0)


def test_underflowed_profile_fails_the_entry_check():
    cov = build_covariance(LatticeSpec(32), 'gaussian_band', 1.0, width=1.0)
    # exp(-31^2) is below the smallest double
    assert cov.J[0, 31] == 0.0
    assert cov.report.result_of('Positive definiteness') == 'PASS'
    assert cov.report.result_of('Positive entries') == 'FAIL'
    assert not cov.report.valid


def gaussian_band_sweep():
    """(sites, width) -> validation report, or 'singular' when J cannot be inverted"""
    cells = {}
    for sites in (2, 4, 8, 16, 32, 64):
        for width in (1, 2, 4, 8):
            try:
                cells[sites, width] = build_covariance(LatticeSpec(sites), 'gaussian_band', 1.0, width).report
            except ConstructionError:
                cells[sites, width] = 'singular'
    return cells


def test_gaussian_band_sweep():
    cells = gaussian_band_sweep()
    for (sites, width), report in cells.items():
        if width <= 2:
            assert report != 'singular', (sites, width)
            assert report.positive_definite, (sites, width)
    # the smallest eigenvalue of exp(-r^2/W^2) decays like exp(-pi^2 W^2 / 4)
    assert cells[64, 4] == 'singular'
    assert cells[64, 8] == 'singular'
    assert cells[2, 8] != 'singular' and cells[2, 8].valid
    singular = sorted(cell for cell, report in cells.items() if report == 'singular')
    assert all(width >= 4 for _, width in singular)
