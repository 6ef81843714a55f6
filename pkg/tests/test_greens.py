"""
Green's function estimators and spectral diagnostics
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from app.core.ensemble import band_spec, gue_spec
from app.core.greens import (_draw_clean, dos_profile, estimate_g1, estimate_g2, estimate_g2_detratio,
                             ks_to_wigner, lyapunov_fit, lyapunov_scan, spacing_stats, spacing_stats_from_spectra,
                             unfold_spacings, wigner_surmise_gue, wigner_surmise_pdf)
from app.exceptions import InvalidInput, Refusal
from app.utils.quadrature import gaussian_average


def test_g1_single_site_matches_quadrature():
    z = complex(0.3, 0.8)
    estimate = estimate_g1(gue_spec(1), 0, z, 20000, seed=3)
    oracle, _ = gaussian_average(lambda h: 1.0 / (z - h), 1.0)
    assert abs(estimate.value.real - oracle.real) < 5 * estimate.se_re
    assert abs(estimate.value.imag - oracle.imag) < 5 * estimate.se_im


def test_g1_rejects_real_probe():
    with pytest.raises(InvalidInput):
        estimate_g1(gue_spec(1), 0, 0.5, 100, seed=0)


def test_g1_rejects_site_outside_lattice():
    with pytest.raises(InvalidInput):
        estimate_g1(gue_spec(1), 2, 0.5j, 100, seed=0)


def test_g1_is_seed_deterministic_across_workers():
    spec = band_spec(2, 2, 'exponential_band', 1.0)
    serial = estimate_g1(spec, 1, 0.1 + 0.4j, 3000, seed=9, workers=1)
    pooled = estimate_g1(spec, 1, 0.1 + 0.4j, 3000, seed=9, workers=2)
    assert serial.value == pooled.value
    assert serial.se_re == pooled.se_re


def test_g2_exchange_symmetry():
    spec = band_spec(2, 2, 'exponential_band', 1.0)
    z1, z2 = 0.2 + 0.5j, -0.1 - 0.6j
    forward = estimate_g2(spec, 0, 1, z1, z2, 2000, seed=4)
    backward = estimate_g2(spec, 1, 0, z2, z1, 2000, seed=4)
    assert np.isclose(forward.value, backward.value, rtol=1e-10, atol=1e-12)


def test_cofactor_ratio_reproduces_resolvent_estimate():
    spec = band_spec(2, 2, 'exponential_band', 1.0)
    z1, z2 = 0.2 + 0.5j, -0.1 - 0.6j
    resolvent = estimate_g2(spec, 0, 1, z1, z2, 2000, seed=4)
    cofactor = estimate_g2_detratio(spec, 0, 1, None, None, z1, z2, 2000, seed=4, method='cofactor')
    assert cofactor.extra['flagged'] == 0
    assert np.isclose(cofactor.value, resolvent.value, rtol=1e-9, atol=1e-12)


def test_finite_difference_tracks_cofactor():
    spec = gue_spec(2)
    z1, z2 = 0.5j, -0.5j
    cofactor = estimate_g2_detratio(spec, 0, 0, 0, 1, z1, z2, 500, seed=2, method='cofactor')
    fd = estimate_g2_detratio(spec, 0, 0, 0, 1, z1, z2, 500, seed=2, method='finite_difference', fd_step=1e-4)
    assert np.isclose(fd.value, cofactor.value, rtol=1e-5, atol=1e-6)


def test_dos_near_semicircle_center():
    N = 20
    spec = gue_spec(N, 1.0 / N)
    rows = dos_profile(spec, 0, [-0.5, 0.0, 0.5], 0.05, 1000, seed=1)
    assert [row[0] for row in rows] == [-0.5, 0.0, 0.5]
    assert all(row[1] > 0 for row in rows)
    # semicircle of radius 2: N / pi levels per unit energy at E = 0
    assert rows[1][1] == pytest.approx(N / np.pi, rel=0.15)


def test_dos_requires_positive_epsilon():
    with pytest.raises(InvalidInput):
        dos_profile(gue_spec(2), 0, [0.0], 0.0, 100, seed=0)


def test_lyapunov_fit_recovers_exponential_decay():
    series = [(d, 3.0 * np.exp(-0.5 * d)) for d in range(10)]
    fit = lyapunov_fit(series)
    assert fit.lam == pytest.approx(0.5)
    assert fit.r_squared == pytest.approx(1.0)
    windowed = lyapunov_fit(series, (2, 7))
    assert windowed.fit_range == (2, 7)
    assert windowed.lam == pytest.approx(0.5)


def test_lyapunov_fit_needs_four_points():
    with pytest.raises(InvalidInput):
        lyapunov_fit([(0, 1.0), (1, 0.5), (2, 0.25)])


def test_surmise_density_is_the_chi_law():
    s = np.linspace(0.0, 3.5, 36)
    assert np.allclose(wigner_surmise_pdf(s), wigner_surmise_gue.pdf(s))
    assert wigner_surmise_gue.mean() == pytest.approx(1.0)


def test_unfolded_equally_spaced_levels_have_unit_spacing():
    spacings = unfold_spacings(np.arange(100) * 0.37, window=15)
    assert spacings.size > 0
    assert np.allclose(spacings, 1.0)


def test_gue_spectra_follow_wigner_and_poisson_does_not():
    N = 60
    stats = spacing_stats(gue_spec(N, 1.0 / N), 100, 15, seed=7)
    assert stats.num_spacings >= 1000
    assert stats.ks_distance < 0.06
    assert stats.counts.sum() <= stats.num_spacings

    rng = np.random.default_rng(0)
    poisson = np.sort(rng.random((100, N)), axis=1)
    control = spacing_stats_from_spectra(poisson, 15)
    assert control.ks_distance > 0.15


def test_too_few_spacings_are_refused():
    with pytest.raises(Refusal):
        spacing_stats_from_spectra(np.sort(np.random.default_rng(1).random((2, 30)), axis=1))


def test_ks_to_wigner_on_surmise_samples_is_small():
    samples = wigner_surmise_gue.rvs(size=5000, random_state=np.random.default_rng(3))
    assert ks_to_wigner(samples) < 0.03


def test_g1_conjugate_probe_on_paired_seeds():
    spec = band_spec(2, 2, 'exponential_band', 1.0)
    z = 0.25 + 0.6j
    upper = estimate_g1(spec, 1, z, 3000, seed=5)
    lower = estimate_g1(spec, 1, np.conj(z), 3000, seed=5)
    assert np.isclose(lower.value, np.conj(upper.value), rtol=1e-10, atol=1e-14)
    assert upper.extra['retries'] == 0


def test_singular_draws_are_redrawn_and_counted():
    calls = []

    def evaluate(H):
        values = np.trace(H, axis1=1, axis2=2).astype(complex)
        if not calls:
            values[3] = np.nan
        calls.append(len(H))
        return values

    values, retries = _draw_clean(gue_spec(2), 7, 0, 0, 10, evaluate)
    assert retries == 1
    assert calls == [10, 1]
    assert np.all(np.isfinite(values))


SPEC_TWO_SITES = band_spec(2, 1, 'exponential_band', 1.0)


@pytest.mark.parametrize('call', [
    lambda spec: estimate_g2(spec, 0, 2, 0.3 + 0.5j, -0.2 - 0.5j, 100, seed=1),
    lambda spec: estimate_g2(spec, -1, 0, 0.3 + 0.5j, -0.2 - 0.5j, 100, seed=1),
    lambda spec: estimate_g2_detratio(spec, 0, 2, 0, 0, 0.3 + 0.5j, -0.2 - 0.5j, 100, seed=1),
    lambda spec: estimate_g2_detratio(spec, 0, 1, 1, 0, 0.3 + 0.5j, -0.2 - 0.5j, 100, seed=1),
    lambda spec: estimate_g2_detratio(spec, 0, 1, 0, -1, 0.3 + 0.5j, -0.2 - 0.5j, 100, seed=1),
    lambda spec: dos_profile(spec, 2, [0.0], 0.1, 100, seed=1),
    lambda spec: lyapunov_scan(spec, 0.0, 0.1, 100, seed=1, origin=-1),
], ids=['g2_site_j', 'g2_negative_site', 'detratio_site', 'detratio_orbital_a', 'detratio_orbital_b', 'dos_site',
        'lyapunov_origin'])
def test_sites_and_orbitals_outside_the_lattice_are_rejected(call):
    with pytest.raises(InvalidInput):
        call(SPEC_TWO_SITES)


def test_detratio_refuses_when_every_draw_is_ill_conditioned():
    # cond >= 1 for every matrix
    with pytest.raises(Refusal):
        estimate_g2_detratio(gue_spec(2), 0, 0, 0, 1, 0.5j, -0.5j, 50, seed=2, cond_max=0.5)


def test_dos_integrates_to_orbitals_per_site():
    energies = np.linspace(-15.0, 15.0, 601)
    rows = dos_profile(gue_spec(2), 0, energies, 0.2, 200, seed=3)
    area = trapezoid([row[1] for row in rows], energies)
    assert area == pytest.approx(2.0, rel=0.05)


def test_narrow_band_green_function_decays_exponentially():
    spec = band_spec(12, 2, 'exponential_band', 1.0)
    scan = lyapunov_scan(spec, 0.0, 0.5, 2000, seed=4)
    assert [row[0] for row in scan] == list(range(12))
    fit = lyapunov_fit([(d, v) for d, v, _ in scan], (1, 11))
    assert fit.lam > 0
    assert fit.r_squared > 0.9


def test_wide_band_spacings_are_wigner_and_narrow_band_are_not():
    wide = spacing_stats(band_spec(64, 1, 'exponential_band', 32.0), 100, 15, seed=11)
    narrow = spacing_stats(band_spec(64, 1, 'exponential_band', 1.0), 100, 15, seed=11)
    assert wide.ks_distance < 0.06
    assert narrow.ks_distance > 0.1
