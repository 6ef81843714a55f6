"""
Supersymmetric Q-integral for the single-site, single-orbital generating
function

    Z(t1, t2) = <Det(z1 - H) Det(z2 + t2 - H) / (Det(z1 + t1 - H) Det(z2 - H))>

with signature s = diag(1, -1) on the boson side. The superintegral is
assembled sector by sector for every boson draw phi:

    BF / FB  odd blocks integrated with the Grassmann algebra
    FF       exact tensor Gauss-Hermite average on Herm(C^2)
    BB       Schafer-Wegner chart quadrature at M = phi phi^*

t1 = tau1 tau2 and t2 = tau3 tau4 are nilpotent even sources, so the
coefficients of 1, t1, t2 and t1 t2 of the final Berezin integral are read
off exactly.
"""

import logging
from typing import Sequence

import numpy as np

from app.core.duality import (DualityChecks, DualityReport, SignatureSpec, boson_matrices, build_report,
                              determinant_average, fermionic_kernel_quadrature, _require_budget)
from app.core.ensemble import EnsembleSpec
from app.core.grassmann import GeneratorSet, GrassmannElement, berezin_integral, bilinear, even_exp
from app.core.schafer_wegner import (QDomain, closed_form_ratio, domain_normalization, domain_ratio,
                                     saddle_lambda)
from app.exceptions import Refusal
from app.utils.check_engine import WARN
from app.utils.parallel import DEFAULT_BLOCK_SIZE, STREAM_CHECK, STREAM_PHI, make_rng, run_sampler
from app.utils.quadrature import gaussian_average, hermitian_gauss_hermite
from app.utils.stats import estimate_from_values, exact_estimate, z_score

logger = logging.getLogger(__name__)

SIGNATURE = np.array([1.0, -1.0])
GENERATORS = ('rho11', 'rho12', 'rho21', 'rho22',
              'sigma11', 'sigma12', 'sigma21', 'sigma22',
              'psibar1', 'psi1', 'psibar2', 'psi2',
              'tau1', 'tau2', 'tau3', 'tau4')
PSI_PAIRS = [('psibar1', 'psi1'), ('psibar2', 'psi2')]
SOURCES = {'W00': (), 'W10': ('tau1', 'tau2'), 'W01': ('tau3', 'tau4'), 'W11': ('tau1', 'tau2', 'tau3', 'tau4')}
FF_ORDER = 3
NORMALIZATION_TOL = 0.01
CROSS_CHECK_TOL = 1e-10


def susy_generators() -> GeneratorSet:
    return GeneratorSet(GENERATORS)


def fermion_phase(orbitals: int = 1, num_sites: int = 1) -> complex:
    """i^(2 N |Lambda|) from the two fermion species"""
    return complex(1j ** (2 * orbitals * num_sites))


def odd_block_factor(generators: GeneratorSet, alpha: int, b: int, phi_alpha, w: float) -> GrassmannElement:
    """
    Berezin integral over (rho_ab, sigma_ba) of
    exp(w s_a rho sigma - conj(phi_a) rho psi_b - phi_a psibar_b sigma),
    divided by the same integral at phi = 0.
    """
    rho, sigma = f"rho{alpha + 1}{b + 1}", f"sigma{b + 1}{alpha + 1}"
    psibar, psi = f"psibar{b + 1}", f"psi{b + 1}"
    coupling = generators.monomial([rho, sigma], w * SIGNATURE[alpha])
    x = (coupling
         + generators.monomial([rho, psi], -np.conj(phi_alpha))
         + generators.monomial([psibar, sigma], -phi_alpha))
    value = berezin_integral(even_exp(x), [(rho, sigma)])
    norm = berezin_integral(even_exp(coupling), [(rho, sigma)]).scalar_part
    return value / norm


def odd_sector(generators: GeneratorSet, phi: np.ndarray, J: float) -> GrassmannElement:
    """Product of the four odd-block factors; phi has shape (count, 2)"""
    w = 1.0 / J
    result = generators.scalar(1.0)
    for alpha in range(2):
        for b in range(2):
            result = result * odd_block_factor(generators, alpha, b, phi[:, alpha], w)
    return result


def ff_average(generators: GeneratorSet, J: float, order: int = FF_ORDER) -> GrassmannElement:
    """<exp(-(psibar, Q psi))> over Q in Herm(C^2) with variance J; exact since the series stops at Q^2"""
    nodes, weights = hermitian_gauss_hermite(2, float(J), order)
    Q = np.moveaxis(nodes, 0, -1)
    x = bilinear(generators, ['psibar1', 'psibar2'], ['psi1', 'psi2'], Q)
    integrand = even_exp(-x)
    return GrassmannElement(generators, {mask: np.sum(weights * coef) for mask, coef in integrand})


def source_factor(generators: GeneratorSet, z: Sequence[complex]) -> GrassmannElement:
    """(1 + i z1 n1)(1 + i (z2 + t2) n2) with n_b = psibar_b psi_b and t2 = tau3 tau4"""
    z1, z2 = z
    n1 = generators.monomial(['psibar1', 'psi1'])
    n2 = generators.monomial(['psibar2', 'psi2'])
    t2 = generators.monomial(['tau3', 'tau4'])
    return (1.0 + 1j * z1 * n1) * (1.0 + 1j * z2 * n2 + 1j * (t2 * n2))


def ff_cross_check(J: float, z: Sequence[complex]) -> complex:
    """phase * int dpsi F(psi) exp(i psibar z psi); equals <Det(z - iQ)> on Herm(C^2)"""
    generators = susy_generators()
    integrand = ff_average(generators, J) * source_factor(generators, z)
    value = berezin_integral(integrand.restrict(['tau3', 'tau4']), PSI_PAIRS).scalar_part
    return complex(fermion_phase() * value)


def source_coefficients(result: GrassmannElement, count: int) -> np.ndarray:
    """(count, 4) array of the 1, t1, t2, t1 t2 coefficients"""
    columns = []
    for names in SOURCES.values():
        coef = result.coefficient(names)
        columns.append(np.broadcast_to(np.asarray(coef, dtype=complex), (count,)))
    return np.stack(columns, axis=1)


def _susy_block(task):
    (J, z, variance, domain, normalization), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    shape = (count, 2)
    phi = np.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    generators = susy_generators()
    z1, z2 = z
    norms = np.abs(phi) ** 2

    odd = odd_sector(generators, phi, J)
    t1 = generators.monomial(['tau1', 'tau2'])
    boson_source = 1.0 - t1 * (1j * norms[:, 0])
    integrand = odd * ff_average(generators, J) * source_factor(generators, z) * boson_source
    result = berezin_integral(integrand, PSI_PAIRS)

    M = np.conj(boson_matrices(phi[:, None, None, :]))
    bb = domain_ratio(M, (0.0, 0.0), np.array([[J]]), domain, normalization)
    weight = (variance ** 2) * np.exp(norms.sum(axis=1) / variance)
    scalar = fermion_phase() * bb * np.exp(1j * (z1 * norms[:, 0] - z2 * norms[:, 1])) * weight
    return source_coefficients(result, count) * scalar[:, None]


def _require_single_site(spec: EnsembleSpec, signature: SignatureSpec):
    if spec.num_sites != 1 or spec.orbitals != 1:
        raise Refusal("supersymmetric check is implemented for one site and one orbital",
                      diagnostic={'sites': spec.num_sites, 'N': spec.orbitals})
    signature.require_ordered()
    if signature.n != 2 or signature.p != 1:
        raise Refusal("supersymmetric check needs Im z1 > 0 > Im z2", diagnostic={'z': signature.to_list()})


def verify_susy_g2(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int,
                   domain: QDomain = None, workers: int = 1, proposal_scale: float = 1.5,
                   subset: int = 64, tolerance: float = 1e-3,
                   block_size: int = DEFAULT_BLOCK_SIZE) -> DualityReport:
    """
    d^2 Z / dt1 dt2 at t = 0 from the superintegral against the Monte Carlo
    <(z1 - H)^-1 (z2 - H)^-1>. Z(0, 0) = 1 is checked as the normalization.
    """
    _require_budget(num_samples)
    spec.require_valid()
    _require_single_site(spec, signature)
    J = float(spec.J[0, 0])
    domain = domain or QDomain(lam=saddle_lambda(spec.w, spec.orbitals))
    z1, z2 = signature.z
    checks = DualityChecks('verify_susy_g2')

    cross = ff_cross_check(J, signature.z)
    kernel = fermionic_kernel_quadrature(J, signature.z)
    cross_gap = abs(cross - kernel)
    checks.expect('ff_cross_check', cross_gap < CROSS_CHECK_TOL,
                  f"FF sector reproduces the n=2 fermionic kernel ({cross_gap:.1e})",
                  f"FF sector differs from the n=2 fermionic kernel by {cross_gap:.1e}", gap=cross_gap)

    variance = float(proposal_scale) / signature.min_im
    J_matrix = np.array([[J]])
    normalization = domain_normalization(J_matrix, domain)
    audit_rng = make_rng(seed, STREAM_CHECK, 5)
    audit_phi = np.sqrt(variance / 2.0) * (audit_rng.standard_normal((subset, 2))
                                           + 1j * audit_rng.standard_normal((subset, 2)))
    audit = np.conj(boson_matrices(audit_phi[:, None, None, :]))
    coarse = domain_ratio(audit, (0.0, 0.0), J_matrix, domain, normalization)
    fine = domain_ratio(audit, (0.0, 0.0), J_matrix, domain.refined(1))
    scale = np.maximum(np.abs(fine), 1e-300)
    delta = float(np.max(np.abs(coarse - fine) / scale))
    checks.expect('node_doubling', delta < tolerance / 3.0, f"BB node-doubling delta {delta:.2e}",
                  f"BB node-doubling delta {delta:.2e} exceeds tolerance/3", delta=delta)
    closed_gap = float(np.max(np.abs(coarse - closed_form_ratio(audit, (0.0, 0.0), J_matrix)) / scale))

    payload = (J, (z1, z2), variance, domain, normalization)
    values = run_sampler(_susy_block, payload, num_samples, seed, STREAM_PHI, workers, block_size)
    values = values.reshape(-1, len(SOURCES))
    estimates = {key: estimate_from_values(values[:, k], seed, robust=True) for k, key in enumerate(SOURCES)}
    for estimate in estimates.values():
        estimate.se_re = float(np.hypot(estimate.se_re, delta * abs(estimate.value)))
        estimate.se_im = float(np.hypot(estimate.se_im, delta * abs(estimate.value)))

    w00 = estimates['W00']
    norm_z = z_score(w00, exact_estimate(1.0))
    checks.expect('normalization', norm_z <= 5.0, f"Z(0, 0) = 1 within {norm_z:.2f} se",
                  f"Z(0, 0) is {norm_z:.2f} se away from 1", z=norm_z)
    relative = abs(w00.value - 1.0)
    checks.expect('normalization_1pct', relative <= NORMALIZATION_TOL, f"Z(0, 0) within {relative:.2%} of 1",
                  f"Z(0, 0) off by {relative:.2%}", severity=WARN, relative_error=relative)

    one_point = {}
    for key, zeta in (('W10', z1), ('W01', z2)):
        oracle, error = gaussian_average(lambda h, zeta=zeta: 1.0 / (zeta - h), J)
        score = z_score(estimates[key], exact_estimate(oracle, error))
        one_point[key] = {'oracle': [oracle.real, oracle.imag], 'z_score': score}
        checks.expect(f'{key}_one_point', score < 3.0, f"{key} matches <(z - h)^-1> ({score:.2f})",
                      f"{key} misses <(z - h)^-1> by {score:.2f} se", severity=WARN, z=score)

    lhs = determinant_average(spec, signature.z, -1, num_samples, seed, workers, True, robust=True,
                              block_size=block_size)
    oracle, error = gaussian_average(lambda h: 1.0 / ((z1 - h) * (z2 - h)), J)
    checks.expect('oracle', z_score(lhs, exact_estimate(oracle, error)) < 3.0,
                  "left side agrees with the 1-D quadrature oracle",
                  "left side disagrees with the 1-D quadrature oracle", severity=WARN)

    config = {'n': 2, 'p': 1, 'N': 1, 'sites': 1, 'z': signature.to_list(), 'num_samples': num_samples,
              'seed': seed, 'cutoffs': domain.cutoffs(J_matrix), 'proposal_variance': variance}
    return build_report('verify_susy_g2', lhs, estimates['W11'], checks, config,
                        coefficients={key: est.to_dict() for key, est in estimates.items()},
                        normalization_z=norm_z, one_point=one_point,
                        ff_cross_check=[cross.real, cross.imag], fermionic_kernel=[kernel.real, kernel.imag],
                        node_doubling_delta=delta, closed_form_gap=closed_gap,
                        oracle=[oracle.real, oracle.imag])
