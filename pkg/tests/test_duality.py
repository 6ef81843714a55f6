"""
Fermionic, bosonic and Fyodorov dual representations
"""

import numpy as np
import pytest

from app.core.duality import (SignatureSpec, bosonic_gaussian_check, falsify_naive, fermionic_kernel_quadrature,
                              fyodorov_symmetry_check, parse_signature, sample_q, signature_phase,
                              verify_bosonic_same_half, verify_fermionic, verify_fyodorov)
from app.core.ensemble import band_spec, gue_spec
from app.exceptions import BudgetError, InvalidInput, Refusal
from app.utils.parallel import make_rng
from app.utils.stats import CONSISTENT


def test_parse_signature_accepts_pairs():
    signature = parse_signature([[0.3, 0.5], [-0.2, -0.7]])
    assert signature.z == (0.3 + 0.5j, -0.2 - 0.7j)
    assert (signature.p, signature.q) == (1, 1)
    assert signature.mixed
    assert signature.to_list() == [[0.3, 0.5], [-0.2, -0.7]]


def test_parse_signature_rejects_malformed_pair():
    with pytest.raises(InvalidInput):
        parse_signature([[0.3, 0.5, 1.0]])


def test_bosonic_order_is_enforced():
    with pytest.raises(InvalidInput):
        SignatureSpec((-0.5j, 0.5j)).require_ordered()
    with pytest.raises(InvalidInput):
        SignatureSpec((0.5, 0.5j)).require_ordered()


def test_signature_phase():
    assert signature_phase([1.0, -1.0], 1, 1) == pytest.approx(1.0)
    assert signature_phase([1.0], 1, 1) == pytest.approx(-1j)
    assert signature_phase([1.0], 2, 1) == pytest.approx(-1.0)


def test_site_matrices_have_the_dual_covariance():
    J = band_spec(2, 1, 'exponential_band', 1.0).J
    n, count = 2, 20000
    Q = sample_q(J, n, make_rng(3, 1, 0), count)
    assert Q.shape == (count, 2, n, n)
    assert np.allclose(Q, np.conj(np.swapaxes(Q, -1, -2)))
    second = np.einsum('ciab,cjba->ij', Q, Q).real / count
    tolerance = 8 * np.sqrt(2) * n * J.max() / np.sqrt(count)
    assert np.all(np.abs(second - n * n * J) < tolerance)


def test_kernel_quadrature_closed_forms():
    z1, z2 = 0.3 + 0.5j, -0.2 - 0.7j
    assert fermionic_kernel_quadrature(1.0, (z1, z2)) == pytest.approx(z1 * z2 + 1.0)
    assert fermionic_kernel_quadrature(0.5, (z1, z2)) == pytest.approx(z1 * z2 + 0.5)
    assert fermionic_kernel_quadrature(0.5, (z1,), 2) == pytest.approx(z1 ** 2 - 0.5)


def test_fermionic_single_parameter_is_exact_with_antithetic_pairs():
    z = 0.3 + 0.4j
    report = verify_fermionic(gue_spec(1), SignatureSpec((z,)), 2000, seed=1)
    assert report.lhs.value == pytest.approx(z)
    assert report.rhs.value == pytest.approx(z)
    assert report.z_score < 1.0
    assert report.verdict == CONSISTENT


def test_fermionic_two_parameters_agree():
    z1, z2 = 0.3 + 0.5j, -0.2 - 0.7j
    report = verify_fermionic(gue_spec(1), SignatureSpec((z1, z2)), 20000, seed=5)
    assert report.z_score < 5.0
    kernel = complex(*report.extra['quadrature_rhs'])
    assert kernel == pytest.approx(z1 * z2 + 1.0)
    assert abs(report.lhs.value.real - kernel.real) < 5 * report.lhs.se_re + 1e-12
    assert abs(report.lhs.value.imag - kernel.imag) < 5 * report.lhs.se_im + 1e-12


def test_fermionic_report_serializes():
    report = verify_fermionic(gue_spec(1), SignatureSpec((0.1 + 0.2j,)), 1000, seed=0)
    data = report.to_dict()
    assert data['operation'] == 'verify_fermionic'
    assert data['config']['n'] == 1
    assert len(data['lhs']['value']) == 2


def test_budget_below_minimum_is_rejected():
    with pytest.raises(BudgetError):
        verify_fermionic(gue_spec(1), SignatureSpec((0.5j,)), 999, seed=0)


def test_fermionic_refuses_large_n():
    with pytest.raises(Refusal):
        verify_fermionic(gue_spec(1), SignatureSpec((0.5j, 0.6j, 0.7j, 0.8j)), 1000, seed=0)


@pytest.mark.parametrize('A', [
    [[1.5 + 0.3j]],
    [[2.0 + 0.2j, 0.3 + 0.1j], [0.2 - 0.1j, 1.5]],
])
def test_bosonic_gaussian_quadrature_matches_inverse_determinant(A):
    result = bosonic_gaussian_check(A)
    assert result['quadrature_agrees']
    assert 'monte_carlo' not in result


def test_bosonic_gaussian_monte_carlo():
    result = bosonic_gaussian_check([[2.0, 0.5j, 0.0], [0.5j, 1.5, 0.2], [0.0, 0.2, 1.0]], 20000, seed=2)
    assert 'quadrature' not in result
    assert result['z_score'] < 5.0


def test_bosonic_gaussian_needs_positive_real_part():
    with pytest.raises(InvalidInput):
        bosonic_gaussian_check([[-1.0]])


def test_bosonic_same_half_agrees():
    report = verify_bosonic_same_half(gue_spec(1), SignatureSpec((0.3 + 0.8j,)), 20000, seed=7)
    assert report.z_score < 5.0
    assert 'oracle' in report.extra
    assert report.verdict != 'inconsistent'


def test_bosonic_same_half_refuses_mixed_signs():
    with pytest.raises(Refusal):
        verify_bosonic_same_half(gue_spec(1), SignatureSpec((0.5j, -0.5j)), 1000, seed=0)


def test_falsify_naive_refuses_same_half():
    with pytest.raises(Refusal):
        falsify_naive(gue_spec(1), SignatureSpec((0.5j, 0.6j)), 1000, seed=0)


def test_falsify_naive_reports_robust_statistics():
    report = falsify_naive(gue_spec(1), SignatureSpec((0.5j, -0.5j)), 2000, seed=3)
    assert report.lhs.median_of_means is not None
    assert report.rhs.tail_ratio is not None
    # 1 / |z - h|^2 draw by draw
    assert report.lhs.value.real > 0
    assert report.config['p'] == 1


def test_fyodorov_needs_enough_orbitals():
    with pytest.raises(Refusal):
        verify_fyodorov(gue_spec(1), SignatureSpec((0.5j, -0.5j)), 1000, seed=0)


def test_fyodorov_single_parameter_quadrature():
    report = verify_fyodorov(gue_spec(1), SignatureSpec((0.2 + 0.7j,)), 20000, seed=11)
    assert report.config['method'] == 'quadrature'
    assert report.z_score < 5.0


def test_fyodorov_quadrature_is_only_for_one_parameter():
    with pytest.raises(InvalidInput):
        verify_fyodorov(gue_spec(2), SignatureSpec((0.5j, -0.5j)), 1000, seed=0, method='quadrature')


def test_fyodorov_integrand_is_upq_invariant():
    J = band_spec(2, 2, 'exponential_band', 1.0).J
    signature = SignatureSpec((0.3 + 0.5j, -0.3 - 0.6j))
    result = fyodorov_symmetry_check(J, signature, 2, seed=4)
    assert result['invariant']
    assert result['energy'] == pytest.approx(0.0)
