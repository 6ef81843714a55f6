"""
Dual matrix representations of determinant averages.

Each verify_* operation estimates both sides of one identity, reports the
two estimates with a z-score and a verdict, and never asserts. The left side
is always an average over the hierarchical ensemble; the right side is an
average over site matrices Q_j in Herm(C^n) or over the boson fields.

Conventions for spectral parameters z_1..z_n: the signature vector s has
s_alpha = sign(Im z_alpha), and the p parameters with Im z > 0 come first.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy import integrate, linalg, special

from app.core.ensemble import EnsembleSpec, draw_hamiltonians
from app.exceptions import BudgetError, InvalidInput, Refusal
from app.utils.check_engine import CheckEngine, WARN
from app.utils.parallel import (DEFAULT_BLOCK_SIZE, STREAM_CHECK, STREAM_H, STREAM_PHI, STREAM_Q,
                                make_rng, run_sampler)
from app.utils.quadrature import complex_quad, gaussian_average, hermitian_gauss_hermite
from app.utils.stats import (INCONCLUSIVE, GreensEstimate, estimate_from_values, exact_estimate,
                             verdict_for, z_score)

logger = logging.getLogger(__name__)

MIN_BUDGET = 1000
MIN_IM_Z = 0.1
TAIL_FLAG = 1000.0
SYMMETRY_TOL = 1e-10
QUAD_TOL = 1e-6
MAX_FERMIONIC = {'n': 3, 'N': 4, 'sites': 3}
MAX_BOSONIC = {'n': 4, 'sites': 3}


@dataclass(frozen=True)
class SignatureSpec:
    """Spectral parameters with their signature vector"""
    z: Tuple[complex, ...]

    def __post_init__(self):
        z = tuple(complex(v) for v in self.z)
        if not z:
            raise InvalidInput("at least one spectral parameter is required")
        if not all(np.isfinite(v) for v in z):
            raise InvalidInput("spectral parameters must be finite")
        object.__setattr__(self, 'z', z)

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def s(self) -> np.ndarray:
        return np.array([1.0 if v.imag > 0 else -1.0 for v in self.z])

    @property
    def p(self) -> int:
        return int(np.sum(self.s > 0))

    @property
    def q(self) -> int:
        return self.n - self.p

    @property
    def min_im(self) -> float:
        return float(min(abs(v.imag) for v in self.z))

    @property
    def mixed(self) -> bool:
        return 0 < self.p < self.n

    def require_ordered(self):
        """Bosonic representations need every Im z != 0 and the positive half first"""
        if any(v.imag == 0 for v in self.z):
            raise InvalidInput("bosonic averages need Im z != 0 for every parameter")
        s = self.s
        if np.any(np.diff(s) > 0):
            raise InvalidInput("parameters with Im z > 0 must precede those with Im z < 0")

    def to_list(self) -> List[List[float]]:
        return [[v.real, v.imag] for v in self.z]


def parse_signature(values: Sequence) -> SignatureSpec:
    """Accept complex numbers or [re, im] pairs"""
    parsed = []
    for v in values:
        if isinstance(v, (list, tuple)):
            if len(v) != 2:
                raise InvalidInput(f"spectral parameter {v!r} must be [re, im]")
            parsed.append(complex(float(v[0]), float(v[1])))
        else:
            parsed.append(complex(v))
    return SignatureSpec(tuple(parsed))


def signature_phase(s: Sequence[float], orbitals: int, num_sites: int) -> complex:
    """prod_alpha (-i s_alpha)^(N |Lambda|)"""
    phase = 1.0 + 0j
    for value in s:
        phase *= (-1j * value) ** (orbitals * num_sites)
    return complex(phase)


class DualityChecks(CheckEngine):
    """Pre-flight and numerical-health checks attached to a duality report"""

    def __init__(self, operation: str):
        super().__init__(subject=operation)

    def run_all_checks(self):
        return self.to_list()

    @property
    def blocking(self) -> bool:
        return bool(self.failures())


@dataclass
class DualityReport:
    """Both sides of an identity with z-score, verdict and run metadata"""
    operation: str
    lhs: GreensEstimate
    rhs: GreensEstimate
    z_score: float
    verdict: str
    config: Dict[str, Any] = field(default_factory=dict)
    checks: List[Dict[str, Any]] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'operation': self.operation,
            'lhs': self.lhs.to_dict(),
            'rhs': self.rhs.to_dict(),
            'z_score': self.z_score,
            'verdict': self.verdict,
            'config': self.config,
            'checks': self.checks,
            'extra': self.extra,
        }


def build_report(operation: str, lhs: GreensEstimate, rhs: GreensEstimate, checks: DualityChecks,
                 config: Dict[str, Any], **extra) -> DualityReport:
    """
    Compare the two sides. A failed check downgrades a consistent or
    inconsistent verdict to inconclusive.
    """
    for side, estimate in (('lhs', lhs), ('rhs', rhs)):
        if estimate.tail_ratio is not None:
            checks.expect(f'{side}_tail', estimate.tail_ratio < TAIL_FLAG,
                          f"tail ratio {estimate.tail_ratio:.3g}",
                          f"heavy tail: max|x|/mean|x| = {estimate.tail_ratio:.3g}",
                          severity=WARN, tail_ratio=estimate.tail_ratio)
    z = z_score(lhs, rhs)
    verdict = verdict_for(z)
    if checks.blocking:
        logger.warning("%s: %d check(s) failed, verdict set to inconclusive",
                       operation, len(checks.failures()))
        verdict = INCONCLUSIVE
    logger.info("%s: lhs=%s rhs=%s z=%.3f verdict=%s", operation, lhs.value, rhs.value, z, verdict)
    return DualityReport(operation, lhs, rhs, z, verdict, config, checks.to_list(), dict(extra))


def _require_budget(num_samples: int):
    if int(num_samples) < MIN_BUDGET:
        raise BudgetError(f"sample budget {num_samples} is below the minimum of {MIN_BUDGET}")


# ---------------------------------------------------------------------------
# Site matrices Q ~ nu_{n,J}
# ---------------------------------------------------------------------------

def unit_gue(rng: np.random.Generator, shape: Tuple[int, ...], n: int) -> np.ndarray:
    """GUE with E[G_ab G_cd] = delta_ad delta_bc"""
    x = rng.standard_normal(shape + (n, n))
    y = rng.standard_normal(shape + (n, n))
    upper = np.triu((x + 1j * y) / np.sqrt(2.0), k=1)
    G = upper + np.conj(np.swapaxes(upper, -1, -2))
    idx = np.arange(n)
    G[..., idx, idx] = rng.standard_normal(shape + (n,))
    return G


def sample_q(J: np.ndarray, n: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """
    Draw `count` tuples (Q_j) of shape (count, L, n, n) with characteristic
    function <exp(i sum_j Tr Q_j K_j)> = exp(-1/2 sum_ij J_ij Tr K_i K_j).
    J = O diag(lam) O^T and Q_i = sum_k O_ik sqrt(lam_k) G_k with G_k unit GUE.
    """
    J = np.asarray(J, dtype=float)
    lam, O = np.linalg.eigh(J)
    if np.any(lam <= 0):
        raise InvalidInput("site-matrix sampling needs a positive definite J")
    G = unit_gue(rng, (count, J.shape[0]), n)
    return np.einsum('ik,ckab->ciab', O * np.sqrt(lam), G)


# ---------------------------------------------------------------------------
# Determinant averages over H
# ---------------------------------------------------------------------------

def _det_product(H: np.ndarray, z: Sequence[complex], power: int) -> np.ndarray:
    eye = np.eye(H.shape[-1])
    values = np.ones(H.shape[0], dtype=complex)
    for zeta in z:
        det = np.linalg.det(zeta * eye - H)
        values = values * det ** power
    return values


def _lhs_block(task):
    (spec, z, power, antithetic), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    H = draw_hamiltonians(spec, rng, count)
    values = _det_product(H, z, power)
    if antithetic:
        values = 0.5 * (values + _det_product(-H, z, power))
    return values


def determinant_average(spec: EnsembleSpec, z: Sequence[complex], power: int, num_samples: int, seed: int,
                        workers: int = 1, antithetic: bool = True, robust: bool = False,
                        block_size: int = DEFAULT_BLOCK_SIZE) -> GreensEstimate:
    """
    <prod_alpha Det^power(z_alpha - H)> for power = +1 or -1. With antithetic=True
    every draw H is paired with -H, which leaves the law unchanged.
    """
    values = run_sampler(_lhs_block, (spec, tuple(z), int(power), bool(antithetic)),
                         num_samples, seed, STREAM_H, workers, block_size)
    return estimate_from_values(values, seed, robust=robust)


# ---------------------------------------------------------------------------
# Fermionic representation
# ---------------------------------------------------------------------------

def _fermionic_values(Q: np.ndarray, z: Sequence[complex], orbitals: int) -> np.ndarray:
    Z = np.diag(np.asarray(z, dtype=complex))
    dets = np.linalg.det(Z - 1j * Q)
    return np.prod(dets ** orbitals, axis=1)


def _fermionic_block(task):
    (J, z, orbitals, antithetic), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    Q = sample_q(J, len(z), rng, count)
    values = _fermionic_values(Q, z, orbitals)
    if antithetic:
        values = 0.5 * (values + _fermionic_values(-Q, z, orbitals))
    return values


def fermionic_kernel_quadrature(J: float, z: Sequence[complex], orbitals: int = 1) -> complex:
    """
    Exact <Det^N(z - iQ)> for a single site by tensor Gauss-Hermite quadrature
    on Herm(C^n); the integrand is a polynomial of degree nN.
    """
    n = len(z)
    order = max(1, math.ceil((n * orbitals + 1) / 2))
    nodes, weights = hermitian_gauss_hermite(n, float(J), order)
    values = np.linalg.det(np.diag(np.asarray(z, dtype=complex)) - 1j * nodes) ** orbitals
    return complex(np.sum(weights * values))


def verify_fermionic(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int,
                     workers: int = 1, antithetic: bool = True,
                     block_size: int = DEFAULT_BLOCK_SIZE) -> DualityReport:
    """<prod_alpha Det(z_alpha - H)> against E_Q[prod_j Det^N(z - i Q_j)]"""
    _require_budget(num_samples)
    spec.require_valid()
    n, N, L = signature.n, spec.orbitals, spec.num_sites
    if n > MAX_FERMIONIC['n'] or N > MAX_FERMIONIC['N'] or L > MAX_FERMIONIC['sites']:
        raise Refusal("fermionic check is limited to desk-scale sizes",
                      diagnostic={'n': n, 'N': N, 'sites': L, 'limits': MAX_FERMIONIC})
    checks = DualityChecks('verify_fermionic')
    lhs = determinant_average(spec, signature.z, 1, num_samples, seed, workers, antithetic,
                              block_size=block_size)
    values = run_sampler(_fermionic_block, (spec.J, signature.z, N, bool(antithetic)),
                         num_samples, seed, STREAM_Q, workers, block_size)
    rhs = estimate_from_values(values, seed)
    extra = {}
    if L == 1:
        kernel = fermionic_kernel_quadrature(spec.J[0, 0], signature.z, N)
        extra['quadrature_rhs'] = [kernel.real, kernel.imag]
    config = {'n': n, 'N': N, 'sites': L, 'z': signature.to_list(), 'num_samples': num_samples,
              'seed': seed, 'antithetic': antithetic}
    return build_report('verify_fermionic', lhs, rhs, checks, config, **extra)


# ---------------------------------------------------------------------------
# Bosonic representations
# ---------------------------------------------------------------------------

def _bosonic_radial(A: np.ndarray) -> Tuple[complex, float]:
    """
    int exp(-(phi, A phi)) dphi / pi^n for n = 1, 2 by quadrature over the
    moduli |phi_a|; the phase angles are integrated in closed form.
    """
    n = A.shape[0]
    if n == 1:
        a = A[0, 0]
        return complex_quad(lambda r: 2.0 * r * np.exp(-a * r * r), 0.0, np.inf)
    coupling = 2.0 * np.sqrt(A[0, 1] * A[1, 0] + 0j)

    growth = abs(coupling.real)

    # ive keeps the Bessel factor finite far out where the Gaussian has already underflowed
    def integrand(r1, r2):
        x = r1 * r2
        return (4.0 * x * np.exp(-A[0, 0] * r1 * r1 - A[1, 1] * r2 * r2 + growth * x)
                * special.ive(0, coupling * x))

    opts = {'epsabs': 1e-12, 'epsrel': 1e-10, 'limit': 200}
    re, err_re = integrate.nquad(lambda r1, r2: integrand(r1, r2).real, [[0, np.inf], [0, np.inf]],
                                 opts=[opts, opts])
    im, err_im = integrate.nquad(lambda r1, r2: integrand(r1, r2).imag, [[0, np.inf], [0, np.inf]],
                                 opts=[opts, opts])
    return complex(re, im), float(np.hypot(err_re, err_im))


def _gaussian_phi_block(task):
    (A, variance), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    n = A.shape[0]
    phi = np.sqrt(variance / 2.0) * (rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n)))
    quadratic = np.einsum('ca,ab,cb->c', np.conj(phi), A, phi)
    log_weight = n * np.log(variance) + np.sum(np.abs(phi) ** 2, axis=1) / variance
    return np.exp(log_weight - quadratic)


def bosonic_gaussian_check(A, num_samples: int = 0, seed: int = 0, workers: int = 1,
                           block_size: int = DEFAULT_BLOCK_SIZE) -> Dict[str, Any]:
    """
    Check int exp(-(phi, A phi)) dphi = Det^-1 A with dphi normalized so that
    A = 1 integrates to one. Quadrature is used for n <= 2; otherwise (or
    additionally, when num_samples > 0) an importance-sampled estimate with a
    complex Gaussian proposal of variance 1/lambda_min(Re A).
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"A must be square, got shape {A.shape}")
    hermitian_part = 0.5 * (A + A.conj().T)
    lam_min = float(np.linalg.eigvalsh(hermitian_part).min())
    if lam_min <= 0:
        raise InvalidInput("Re A must be positive definite")
    exact = complex(1.0 / np.linalg.det(A))
    result = {'exact': [exact.real, exact.imag], 'n': A.shape[0]}
    if A.shape[0] <= 2:
        value, error = _bosonic_radial(A)
        result['quadrature'] = [value.real, value.imag]
        result['quadrature_error'] = error
        result['quadrature_agrees'] = bool(abs(value - exact) <= QUAD_TOL * max(1.0, abs(exact)))
    if num_samples:
        _require_budget(num_samples)
        values = run_sampler(_gaussian_phi_block, (A, 1.0 / lam_min), num_samples, seed, STREAM_PHI,
                             workers, block_size)
        estimate = estimate_from_values(values, seed)
        z = z_score(estimate, exact_estimate(exact))
        result['monte_carlo'] = estimate.to_dict()
        result['z_score'] = z
        result['verdict'] = verdict_for(z)
    return result


def _naive_values(Q: np.ndarray, z: Sequence[complex], orbitals: int) -> np.ndarray:
    Z = np.diag(np.asarray(z, dtype=complex))
    dets = np.linalg.det(Z - Q)
    return np.prod(dets ** (-orbitals), axis=1)


def _naive_block(task):
    (J, z, orbitals), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    return _naive_values(sample_q(J, len(z), rng, count), z, orbitals)


def _naive_rhs(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int, workers: int,
               robust: bool, block_size: int) -> GreensEstimate:
    values = run_sampler(_naive_block, (spec.J, signature.z, spec.orbitals), num_samples, seed, STREAM_Q,
                         workers, block_size)
    return estimate_from_values(values, seed, robust=robust)


def _bosonic_preflight(signature: SignatureSpec, spec: EnsembleSpec, operation: str) -> DualityChecks:
    signature.require_ordered()
    if signature.n > MAX_BOSONIC['n'] or spec.num_sites > MAX_BOSONIC['sites']:
        raise Refusal("bosonic checks are limited to desk-scale sizes",
                      diagnostic={'n': signature.n, 'sites': spec.num_sites, 'limits': MAX_BOSONIC})
    checks = DualityChecks(operation)
    checks.expect('im_z_margin', signature.min_im >= MIN_IM_Z,
                  f"min |Im z| = {signature.min_im:.3g}",
                  f"min |Im z| = {signature.min_im:.3g} is below {MIN_IM_Z}; estimates are ill-conditioned",
                  severity=WARN, min_im=signature.min_im)
    return checks


def verify_bosonic_same_half(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int,
                             workers: int = 1, antithetic: bool = True,
                             block_size: int = DEFAULT_BLOCK_SIZE) -> DualityReport:
    """
    <prod_alpha Det^-1(z_alpha - H)> against E_Q[prod_j Det^-N(z - Q_j)] when
    every Im z_alpha has the same sign.
    """
    _require_budget(num_samples)
    spec.require_valid()
    checks = _bosonic_preflight(signature, spec, 'verify_bosonic_same_half')
    if signature.mixed:
        raise Refusal("verify_bosonic_same_half needs all Im z on one side; use falsify_naive for mixed signs",
                      diagnostic={'p': signature.p, 'q': signature.q})
    lhs = determinant_average(spec, signature.z, -1, num_samples, seed, workers, antithetic,
                              block_size=block_size)
    rhs = _naive_rhs(spec, signature, num_samples, seed, workers, False, block_size)
    extra = {}
    if signature.n == 1 and spec.num_sites == 1 and spec.orbitals == 1:
        oracle, error = gaussian_average(lambda h: 1.0 / (signature.z[0] - h), spec.J[0, 0])
        extra['oracle'] = [oracle.real, oracle.imag]
        checks.expect('oracle', z_score(lhs, exact_estimate(oracle, error)) < 3.0,
                      "left side agrees with the 1-D quadrature oracle",
                      "left side disagrees with the 1-D quadrature oracle", severity=WARN)
    config = {'n': signature.n, 'N': spec.orbitals, 'sites': spec.num_sites, 'z': signature.to_list(),
              'num_samples': num_samples, 'seed': seed}
    return build_report('verify_bosonic_same_half', lhs, rhs, checks, config, **extra)


def falsify_naive(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int,
                  workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> DualityReport:
    """
    Apply the same-half formula to mixed signs. The expected outcome is an
    inconsistent verdict; the naive side has heavy tails, so median of means
    and the tail ratio are reported alongside the mean.
    """
    _require_budget(num_samples)
    spec.require_valid()
    checks = _bosonic_preflight(signature, spec, 'falsify_naive')
    if not signature.mixed:
        raise Refusal("falsify_naive needs mixed signs of Im z",
                      diagnostic={'p': signature.p, 'q': signature.q})
    lhs = determinant_average(spec, signature.z, -1, num_samples, seed, workers, True, robust=True,
                              block_size=block_size)
    rhs = _naive_rhs(spec, signature, num_samples, seed, workers, True, block_size)
    conjugate = signature.n == 2 and np.isclose(signature.z[0], np.conj(signature.z[1]))
    if conjugate:
        checks.expect('lhs_positive', lhs.value.real > 0 and abs(lhs.value.imag) < 5 * lhs.se_im + 1e-12,
                      "left side is real and positive for a conjugate pair",
                      "left side should be real and positive for a conjugate pair", severity=WARN)
    config = {'n': signature.n, 'p': signature.p, 'N': spec.orbitals, 'sites': spec.num_sites,
              'z': signature.to_list(), 'num_samples': num_samples, 'seed': seed}
    return build_report('falsify_naive', lhs, rhs, checks, config)


# ---------------------------------------------------------------------------
# Fyodorov representation
# ---------------------------------------------------------------------------

def fyodorov_log_integrand(M: np.ndarray, s: np.ndarray, z: np.ndarray, J: np.ndarray, orbitals: int,
                           with_det: bool = True) -> np.ndarray:
    """
    log of exp(-1/2 sum_ij J_ij Tr(s M_i s M_j) + sum_k Tr(i s z M_k)) (Det M_k)^(N-n)
    for M of shape (..., L, n, n). The determinant factor is dropped with
    with_det=False (the boson-field pushforward already carries it).
    """
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=complex)
    n = M.shape[-1]
    sM = s[:, None] * M
    quartic = np.einsum('ij,...iab,...jba->...', J, sM, sM)
    diagonal = np.diagonal(M, axis1=-2, axis2=-1)
    linear = 1j * np.sum(diagonal * (s * z), axis=(-2, -1))
    value = -0.5 * quartic + linear
    if with_det and orbitals != n:
        sign, logdet = np.linalg.slogdet(M)
        value = value + (orbitals - n) * np.sum(np.log(sign) + logdet, axis=-1)
    return value


def boson_matrices(phi: np.ndarray) -> np.ndarray:
    """(M_k)_ab = (phi_a, Pi_k phi_b) for phi of shape (..., L, N, n)"""
    return np.einsum('...kxa,...kxb->...kab', np.conj(phi), phi)


def _fyodorov_phi_block(task):
    (J, s, z, orbitals, variance), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    L, n = J.shape[0], len(z)
    shape = (count, L, orbitals, n)
    phi = np.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    M = boson_matrices(phi)
    log_weight = n * orbitals * L * np.log(variance) + np.sum(np.abs(phi) ** 2, axis=(1, 2, 3)) / variance
    return np.exp(fyodorov_log_integrand(M, s, z, J, orbitals, with_det=False) + log_weight)


def _fyodorov_quadrature(J: np.ndarray, s: float, z: complex, orbitals: int) -> Tuple[complex, float]:
    """n = 1: integral over m_k > 0 with density m^(N-1)/Gamma(N) per site"""
    L = J.shape[0]
    norm = special.gammaln(orbitals)

    def integrand(*m):
        m = np.asarray(m)
        log_value = (-0.5 * m @ J @ m + 1j * s * z * m.sum()
                     + (orbitals - 1) * np.sum(np.log(np.maximum(m, 1e-300))) - L * norm)
        return np.exp(log_value)

    if L == 1:
        return complex_quad(lambda m: integrand(m), 0.0, np.inf)
    opts = {'epsabs': 1e-12, 'epsrel': 1e-9, 'limit': 200}
    ranges = [[0, np.inf]] * L
    re, err_re = integrate.nquad(lambda *m: integrand(*m).real, ranges, opts=[opts] * L)
    im, err_im = integrate.nquad(lambda *m: integrand(*m).imag, ranges, opts=[opts] * L)
    return complex(re, im), float(np.hypot(err_re, err_im))


def random_upq(p: int, q: int, rng: np.random.Generator, scale: float = 0.5) -> np.ndarray:
    """
    Random T in U(p, q), i.e. T^* s T = s with s = diag(1_p, -1_q), as the
    exponential of an element [[A, B], [B^*, D]] of its Lie algebra.
    """
    n = p + q

    def anti_hermitian(k):
        X = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        return scale * 0.5 * (X - X.conj().T)

    X = np.zeros((n, n), dtype=complex)
    X[:p, :p] = anti_hermitian(p)
    X[p:, p:] = anti_hermitian(q)
    B = scale * (rng.standard_normal((p, q)) + 1j * rng.standard_normal((p, q)))
    X[:p, p:] = B
    X[p:, :p] = B.conj().T
    return linalg.expm(X)


def fyodorov_symmetry_check(J: np.ndarray, signature: SignatureSpec, orbitals: int, seed: int,
                            trials: int = 16) -> Dict[str, Any]:
    """
    With all z replaced by a common real E the integrand is invariant under
    M_k -> T M_k T^* for T in U(p, q). Reports the largest log-difference.
    """
    rng = make_rng(seed, STREAM_CHECK, 0)
    n, L = signature.n, J.shape[0]
    s = signature.s
    energy = float(np.mean([v.real for v in signature.z]))
    z = np.full(n, energy, dtype=complex)
    worst = 0.0
    for _ in range(trials):
        phi = rng.standard_normal((L, max(orbitals, n), n)) + 1j * rng.standard_normal((L, max(orbitals, n), n))
        M = boson_matrices(phi)
        T = random_upq(signature.p, signature.q, rng)
        rotated = np.einsum('ab,kbc,dc->kad', T, M, np.conj(T))
        before = fyodorov_log_integrand(M, s, z, J, orbitals)
        after = fyodorov_log_integrand(rotated, s, z, J, orbitals)
        worst = max(worst, float(abs(after - before) / max(1.0, abs(before))))
    return {'max_relative_change': worst, 'energy': energy, 'invariant': bool(worst <= SYMMETRY_TOL)}


def verify_fyodorov(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int,
                    workers: int = 1, method: str = None, variance_scale: float = 1.0,
                    block_size: int = DEFAULT_BLOCK_SIZE) -> DualityReport:
    """
    <prod Det^-1(z_alpha - H)> against the positive-matrix representation
    prod_alpha (-i s_alpha)^(N L) int_Y exp(...) DM, for any signature, N >= n.

    method 'quadrature' (n = 1 only) integrates the radial variables directly;
    'phi_sampling' samples the boson fields whose Gram matrices push forward
    to the measure on Y.
    """
    _require_budget(num_samples)
    spec.require_valid()
    n, N, L = signature.n, spec.orbitals, spec.num_sites
    if N < n:
        raise Refusal(f"Fyodorov representation needs N >= n, got N={N}, n={n}",
                      diagnostic={'N': N, 'n': n})
    if n > 2 or L > 2:
        raise Refusal("Fyodorov check supports n <= 2 and at most two sites",
                      diagnostic={'n': n, 'sites': L})
    checks = _bosonic_preflight(signature, spec, 'verify_fyodorov')
    method = method or ('quadrature' if n == 1 and L <= 2 else 'phi_sampling')
    if method == 'quadrature' and n != 1:
        raise InvalidInput("quadrature method is only available for n = 1")
    if method not in ('quadrature', 'phi_sampling'):
        raise InvalidInput(f"unknown Fyodorov method '{method}'")

    lhs = determinant_average(spec, signature.z, -1, num_samples, seed, workers, True, block_size=block_size)
    phase = signature_phase(signature.s, N, L)
    if method == 'quadrature':
        value, error = _fyodorov_quadrature(spec.J, signature.s[0], signature.z[0], N)
        rhs = exact_estimate(phase * value, error)
    else:
        variance = float(variance_scale) / signature.min_im
        values = run_sampler(_fyodorov_phi_block,
                             (spec.J, signature.s, np.asarray(signature.z), N, variance),
                             num_samples, seed, STREAM_PHI, workers, block_size)
        rhs = estimate_from_values(phase * values, seed, robust=True)

    symmetry = fyodorov_symmetry_check(spec.J, signature, N, seed)
    checks.expect('upq_invariance', symmetry['invariant'],
                  f"integrand invariant under U({signature.p},{signature.q}) to "
                  f"{symmetry['max_relative_change']:.2e}",
                  f"integrand changes by {symmetry['max_relative_change']:.2e} under U(p,q)",
                  **symmetry)
    config = {'n': n, 'p': signature.p, 'N': N, 'sites': L, 'z': signature.to_list(),
              'num_samples': num_samples, 'seed': seed, 'method': method}
    return build_report('verify_fyodorov', lhs, rhs, checks, config,
                        phase=[phase.real, phase.imag])
