"""
Superintegral form of the two-point function
"""

import numpy as np
import pytest

from app.core.duality import SignatureSpec, fermionic_kernel_quadrature
from app.core.ensemble import band_spec, gue_spec
from app.core.susy import ff_cross_check, fermion_phase, verify_susy_g2
from app.exceptions import InvalidInput, Refusal

Z_MIXED = (0.2 + 0.8j, -0.3 - 1.0j)


def test_fermion_phase():
    assert fermion_phase() == pytest.approx(-1.0)
    assert fermion_phase(1, 2) == pytest.approx(1.0)


@pytest.mark.parametrize('J', [0.5, 1.0, 2.0])
def test_fermion_sector_reproduces_the_kernel(J):
    z1, z2 = Z_MIXED
    value = ff_cross_check(J, Z_MIXED)
    assert value == pytest.approx(z1 * z2 + J)
    assert value == pytest.approx(fermionic_kernel_quadrature(J, Z_MIXED))


def test_refuses_more_than_one_site():
    with pytest.raises(Refusal):
        verify_susy_g2(band_spec(2, 1, 'exponential_band', 1.0), SignatureSpec(Z_MIXED), 1000, seed=0)


def test_refuses_more_than_one_orbital():
    with pytest.raises(Refusal):
        verify_susy_g2(gue_spec(2), SignatureSpec(Z_MIXED), 1000, seed=0)


def test_refuses_same_half_signature():
    with pytest.raises(Refusal):
        verify_susy_g2(gue_spec(1), SignatureSpec((0.5j, 0.7j)), 1000, seed=0)


def test_unordered_signature_is_invalid():
    with pytest.raises(InvalidInput):
        verify_susy_g2(gue_spec(1), SignatureSpec((-0.5j, 0.7j)), 1000, seed=0)


def test_small_run_reports_all_source_coefficients():
    report = verify_susy_g2(gue_spec(1), SignatureSpec(Z_MIXED), 1000, seed=4, subset=8)
    results = {entry['check_name']: entry['result'] for entry in report.checks}
    assert results['ff_cross_check'] == 'PASS'
    assert set(report.extra['coefficients']) == {'W00', 'W10', 'W01', 'W11'}
    assert np.isfinite(report.extra['normalization_z'])
    assert report.config['proposal_variance'] == pytest.approx(1.5 / 0.8)
