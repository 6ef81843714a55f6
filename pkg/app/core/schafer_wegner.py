"""
Mixed-signature bosonic integrals on the Schafer-Wegner domain, p = q = 1.

Per site the domain is Q = lam T T^* + i P with
    T T^* = [[cosh r, sinh r e^{i chi}], [sinh r e^{-i chi}, cosh r]]
and P = diag(p+, p-). The integrand is

    F_M(Q) = exp(1/2 sum_ij w_ij Tr(sQ_i + iz)(sQ_j + iz) - sum_k Tr M_k Q_k)

with s = diag(1, -1). The P integrals are Gaussian and done in closed form.
What remains depends on (r, chi) only through b = lam sinh(r) e^{i chi}
and is a Gaussian bump centred at b0 = -(1 - t) J c with c_k = (M_k)_12, so
quadrature nodes are laid out on rings around b0 and mapped back into the
chart. The pullback of DQ through the chart is computed numerically.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from app.core.duality import (DualityChecks, DualityReport, SignatureSpec, boson_matrices, build_report,
                              determinant_average, fyodorov_log_integrand, signature_phase, _require_budget)
from app.core.ensemble import EnsembleSpec
from app.exceptions import InvalidInput, Refusal
from app.utils.check_engine import WARN
from app.utils.parallel import DEFAULT_BLOCK_SIZE, STREAM_CHECK, STREAM_PHI, make_rng, run_sampler
from app.utils.quadrature import gaussian_average, legendre_window, periodic_window
from app.utils.stats import (INCONCLUSIVE, GreensEstimate, estimate_from_values, exact_estimate, verdict_for,
                             z_score)

logger = logging.getLogger(__name__)

SIGNATURE = np.array([1.0, -1.0])
JACOBIAN_STEP = 1e-3
MODULUS_TOL = 1e-12
NORMALIZATION_TOL = 1e-2
SHIFT_SE_FLOOR = 1e-9
MAX_NODES_PER_CHUNK = 250_000
MAX_SITES = 2


@dataclass(frozen=True)
class QDomain:
    """Integration domain and its truncation parameters"""
    kind: str = 'SchaeferWegner'
    lam: float = 1.0
    rho_nodes: int = 16
    theta_nodes: int = 16
    tail_log: float = 36.0

    def __post_init__(self):
        if self.kind not in ('HermitianFull', 'HermPositive', 'SchaeferWegner'):
            raise InvalidInput(f"unknown domain kind '{self.kind}'")
        if not self.lam > 0 or not np.isfinite(self.lam):
            raise InvalidInput(f"lambda must be positive and finite, got {self.lam}")
        if self.rho_nodes < 2 or self.theta_nodes < 2:
            raise InvalidInput("quadrature needs at least two nodes per direction")
        if not self.tail_log > 0:
            raise InvalidInput("tail_log must be positive")

    def refined(self, num_sites: int) -> 'QDomain':
        """Finer rule for the node-doubling delta (x1.5 on two sites to bound memory)"""
        factor = 2.0 if num_sites == 1 else 1.5
        return QDomain(self.kind, self.lam, int(self.rho_nodes * factor), int(self.theta_nodes * factor),
                       self.tail_log)

    def with_lambda(self, lam: float) -> 'QDomain':
        return QDomain(self.kind, float(lam), self.rho_nodes, self.theta_nodes, self.tail_log)

    def cutoffs(self, J: np.ndarray) -> Dict[str, Any]:
        radius = np.sqrt(self.tail_log * np.diag(J))
        return {'kind': self.kind, 'lambda': self.lam, 'rho_nodes': self.rho_nodes,
                'theta_nodes': self.theta_nodes, 'tail_log': self.tail_log, 'radius': radius.tolist(),
                'tail_estimate': float(len(radius) * np.exp(-self.tail_log))}


def saddle_lambda(w: np.ndarray, orbitals: int) -> float:
    """sqrt(N / sum_j w_ij), taken from the first row"""
    row = float(np.sum(w[0]))
    if row <= 0:
        raise Refusal("saddle lambda needs positive row sums of w", diagnostic={'row_sum': row})
    return float(np.sqrt(orbitals / row))


# ---------------------------------------------------------------------------
# Chart
# ---------------------------------------------------------------------------

def chart_matrix(r, chi, p_plus, p_minus, lam: float) -> np.ndarray:
    """Q(r, chi, p+, p-) of shape (..., 2, 2)"""
    r, chi, p_plus, p_minus = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, chi, p_plus, p_minus)))
    Q = np.empty(r.shape + (2, 2), dtype=complex)
    Q[..., 0, 0] = lam * np.cosh(r) + 1j * p_plus
    Q[..., 0, 1] = lam * np.sinh(r) * np.exp(1j * chi)
    Q[..., 1, 0] = lam * np.sinh(r) * np.exp(-1j * chi)
    Q[..., 1, 1] = lam * np.cosh(r) + 1j * p_minus
    return Q


def _chart_vector(x: np.ndarray, lam: float) -> np.ndarray:
    Q = chart_matrix(x[..., 0], x[..., 1], x[..., 2], x[..., 3], lam)
    return Q.reshape(Q.shape[:-2] + (4,))


def chart_pushforward(r, chi, lam: float, step: float = JACOBIAN_STEP) -> np.ndarray:
    """
    d(Q11, Q12, Q21, Q22) / d(r, chi, p+, p-) of shape (..., 4, 4), by central
    differences with one Richardson step.
    """
    r, chi = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(chi, dtype=float))
    x = np.stack([r, chi, np.zeros_like(r), np.zeros_like(r)], axis=-1)
    columns = []
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1.0

        def central(h):
            return (_chart_vector(x + h * e, lam) - _chart_vector(x - h * e, lam)) / (2.0 * h)

        columns.append((4.0 * central(step / 2.0) - central(step)) / 3.0)
    return np.stack(columns, axis=-1)


def chart_jacobian(r, chi, lam: float, step: float = JACOBIAN_STEP) -> np.ndarray:
    """Pullback of the holomorphic form dQ11 dQ12 dQ21 dQ22 to (r, chi, p+, p-)"""
    return np.linalg.det(chart_pushforward(r, chi, lam, step))


def chart_dimension(lam: float = 1.0, r: float = 0.7, chi: float = 0.3, tol: float = 1e-8) -> int:
    """Real rank of the chart pushforward at a generic point; 2pq + p^2 + q^2 = 4 for p = q = 1"""
    D = chart_pushforward(r, chi, lam)
    real = np.concatenate([D.real, D.imag], axis=0)
    singular = np.linalg.svd(real, compute_uv=False)
    return int(np.sum(singular > tol * singular[0]))


# ---------------------------------------------------------------------------
# Pointwise decay bounds
# ---------------------------------------------------------------------------

def _site_trace(A: np.ndarray, B: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_ij w_ij Tr(A_i B_j) for (..., L, 2, 2) arrays"""
    return np.einsum('ij,...iab,...jba->...', w, A, B)


def fm_log(Q: np.ndarray, M: np.ndarray, z: Sequence[complex], w: np.ndarray) -> np.ndarray:
    """log F_M(Q) for Q, M of shape (..., L, 2, 2)"""
    Z = np.diag(np.asarray(z, dtype=complex))
    A = SIGNATURE[:, None] * Q + 1j * Z
    return 0.5 * _site_trace(A, A, w) - np.einsum('...kab,...kba->...', M, Q)


def decay_terms(Q: np.ndarray, M: np.ndarray, z: Sequence[complex], w: np.ndarray):
    """
    (f1, f2, f3) with |F_M(Q)| = exp(-(f1 + f2 + f3) / 4), where X and Y are
    the Hermitian and anti-Hermitian parts of Q:
        f1 = 2 Re sum_ij w_ij Tr(s Y_i + z)(s Y_j + z)
        f2 = -2 sum_ij w_ij Tr(s X_i s X_j)
        f3 = 4 sum_i Tr(M_i + s Im z sum_j w_ij) X_i
    """
    z = np.asarray(z, dtype=complex)
    s = SIGNATURE[:, None]
    X = 0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2)))
    Y = (Q - np.conj(np.swapaxes(Q, -1, -2))) / 2j
    sYz = s * Y + np.diag(z)
    f1 = 2.0 * np.real(_site_trace(sYz, sYz, w))
    f2 = -2.0 * np.real(_site_trace(s * X, s * X, w))
    shift = np.einsum('i,a->ia', w.sum(axis=1), SIGNATURE * z.imag)
    G = M + shift[..., :, :, None] * np.eye(2)
    f3 = 4.0 * np.real(np.einsum('...kab,...kba->...', G, X))
    return f1, f2, f3


def f3_margin(M: np.ndarray, z: Sequence[complex], w: np.ndarray) -> float:
    """Smallest eigenvalue of M_i + s Im z sum_j w_ij over all sites"""
    z = np.asarray(z, dtype=complex)
    shift = np.einsum('i,a->ia', w.sum(axis=1), SIGNATURE * z.imag)
    G = np.asarray(M, dtype=complex) + shift[..., :, :, None] * np.eye(2)
    return float(np.min(np.linalg.eigvalsh(G)))


def random_domain_points(rng: np.random.Generator, count: int, num_sites: int, lam: float,
                         r_max: float = 2.0) -> np.ndarray:
    shape = (count, num_sites)
    return chart_matrix(rng.uniform(0.0, r_max, shape), rng.uniform(0.0, 2 * np.pi, shape),
                        rng.standard_normal(shape), rng.standard_normal(shape), lam)


def fm_modulus_check(J: np.ndarray, z: Sequence[complex], lam: float, seed: int, count: int = 1000) -> Dict[str, Any]:
    """Compare Re log F_M with -(f1 + f2 + f3)/4 on random domain points and random M"""
    rng = make_rng(seed, STREAM_CHECK, 2)
    w = np.linalg.inv(J)
    L = J.shape[0]
    Q = random_domain_points(rng, count, L, lam)
    phi = rng.standard_normal((count, L, 1, 2)) + 1j * rng.standard_normal((count, L, 1, 2))
    M = boson_matrices(phi)
    log_f = fm_log(Q, M, z, w).real
    f1, f2, f3 = decay_terms(Q, M, z, w)
    bound = -(f1 + f2 + f3) / 4.0
    error = np.abs(log_f - bound) / (1.0 + np.abs(log_f))
    worst = float(np.max(error))
    return {'max_relative_error': worst, 'points': count, 'holds': worst <= MODULUS_TOL}


def f2_bound_check(J: np.ndarray, lam: float, seed: int, count: int = 100_000) -> Dict[str, Any]:
    """f2 >= -2 lam^2 n sum_i w_ii on random domain points (needs w_ij <= 0 off the diagonal)"""
    rng = make_rng(seed, STREAM_CHECK, 3)
    w = np.linalg.inv(J)
    L = J.shape[0]
    Q = random_domain_points(rng, count, L, lam)
    M = np.zeros_like(Q)
    _, f2, _ = decay_terms(Q, M, (1j, -1j), w)
    bound = -2.0 * lam ** 2 * 2 * float(np.trace(w))
    slack = float(np.min(f2 - bound))
    tolerance = 1e-9 * max(1.0, abs(bound))
    return {'bound': bound, 'min_slack': slack, 'points': count, 'holds': slack >= -tolerance}


# ---------------------------------------------------------------------------
# Domain integral
# ---------------------------------------------------------------------------

def _window(center: np.ndarray, radius: float, domain: QDomain):
    """
    Nodes b (S, K) on rings around `center` (S,) and the weights that turn a
    sum over them into an integral over dr dchi times the chart Jacobian.
    """
    rho, w_rho = legendre_window(0.0, radius, domain.rho_nodes)
    theta, w_theta = periodic_window(domain.theta_nodes)
    offsets = (rho[:, None] * np.exp(1j * theta[None, :])).ravel()
    area = (rho[:, None] * w_rho[:, None] * w_theta[None, :]).ravel()
    b = center[:, None] + offsets[None, :]
    r = np.arcsinh(np.abs(b) / domain.lam)
    chi = np.angle(b)
    # d^2 b = lam^2 sinh r cosh r dr dchi
    element = domain.lam ** 2 * np.sinh(r) * np.cosh(r)
    weight = area[None, :] * chart_jacobian(r, chi, domain.lam) / element
    return b, weight


def _reduced_constant(m: np.ndarray, m_prime: np.ndarray, z: Sequence[complex], J: np.ndarray,
                      w: np.ndarray) -> np.ndarray:
    z1, z2 = complex(z[0]), complex(z[1])
    L = J.shape[0]
    _, logdet_w = np.linalg.slogdet(w)
    return (-0.5 * np.einsum('si,ij,sj->s', m, J, m) - 0.5 * np.einsum('si,ij,sj->s', m_prime, J, m_prime)
            + 1j * (z1 * m.sum(axis=1) - z2 * m_prime.sum(axis=1)) + L * np.log(2 * np.pi) - logdet_w)


def domain_integral(M: np.ndarray, z: Sequence[complex], J: np.ndarray, domain: QDomain,
                    t: float = 0.0) -> np.ndarray:
    """
    int_{X(t)} F_M(Q) DQ for a batch M of shape (S, L, 2, 2), where X(t) is the
    domain shifted by Q_i -> Q_i + t(-isz + sum_j J_ij s M_j s).

    After the P integrals the exponent is
        -sum_ij w_ij Re(beta_i conj(beta_j)) - 2 Re sum_k c_k conj(b_k)
        + 2t Re sum_k c_k conj(k_k) + const(M, z)
    with beta = b - t k and k = J c.
    """
    J = np.asarray(J, dtype=float)
    w = np.linalg.inv(J)
    M = np.asarray(M, dtype=complex)
    S, L = M.shape[0], M.shape[1]
    if L > MAX_SITES:
        raise Refusal(f"domain quadrature supports at most {MAX_SITES} sites", diagnostic={'sites': L})
    m = M[:, :, 0, 0].real
    m_prime = M[:, :, 1, 1].real
    c = M[:, :, 0, 1]
    k = c @ J.T
    const = _reduced_constant(m, m_prime, z, J, w) + 2.0 * t * np.sum(np.real(c * np.conj(k)), axis=1)
    radius = np.sqrt(domain.tail_log * np.diag(J))
    centers = -(1.0 - t) * k

    K = domain.rho_nodes * domain.theta_nodes
    chunk = max(1, MAX_NODES_PER_CHUNK // (K ** L))
    expand = (slice(None),) + (None,) * L
    result = np.empty(S, dtype=complex)
    for start in range(0, S, chunk):
        sl = slice(start, min(S, start + chunk))
        n = sl.stop - sl.start
        b_sites = []
        weight = np.ones((n,) + (1,) * L, dtype=complex)
        for i in range(L):
            b, wt = _window(centers[sl, i], radius[i], domain)
            shape = [n] + [1] * L
            shape[1 + i] = K
            b_sites.append(b.reshape(shape))
            weight = weight * wt.reshape(shape)
        exponent = np.zeros(weight.shape, dtype=float)
        for i in range(L):
            beta_i = b_sites[i] - t * k[sl, i][expand]
            exponent = exponent - 2.0 * np.real(c[sl, i][expand] * np.conj(b_sites[i]))
            for j in range(L):
                beta_j = b_sites[j] - t * k[sl, j][expand]
                exponent = exponent - w[i, j] * np.real(beta_i * np.conj(beta_j))
        values = weight * np.exp(exponent + const[sl][expand])
        result[sl] = values.reshape(n, -1).sum(axis=1)
    return result


def boost_cutoff(M: np.ndarray, J: np.ndarray, domain: QDomain, t: float = 0.0) -> float:
    """Largest r reached by the quadrature windows for the batch M"""
    centers = np.abs(-(1.0 - t) * (np.asarray(M)[:, :, 0, 1] @ J.T))
    radius = np.sqrt(domain.tail_log * np.diag(J))
    return float(np.arcsinh(np.max(centers + radius[None, :]) / domain.lam))


def normalization_closed_form(J: np.ndarray) -> complex:
    """int_X dnu(iQ) before normalization: (2i)^L (2 pi)^L pi^L / det(w)^2"""
    L = J.shape[0]
    det_w = 1.0 / np.linalg.det(J)
    return complex((2j) ** L * (2 * np.pi) ** L * np.pi ** L / det_w ** 2)


def domain_normalization(J: np.ndarray, domain: QDomain) -> complex:
    M = np.zeros((1, J.shape[0], 2, 2), dtype=complex)
    return complex(domain_integral(M, (0.0, 0.0), J, domain)[0])


def domain_ratio(M: np.ndarray, z: Sequence[complex], J: np.ndarray, domain: QDomain,
                 normalization: complex = None) -> np.ndarray:
    """int_X F_M DQ / int_X dnu(iQ)"""
    if normalization is None:
        normalization = domain_normalization(J, domain)
    return domain_integral(M, z, J, domain) / normalization


def closed_form_ratio(M: np.ndarray, z: Sequence[complex], J: np.ndarray) -> np.ndarray:
    """exp(-1/2 sum_ij J_ij Tr(s M_i s M_j) + i sum_k Tr(s z M_k))"""
    return np.exp(fyodorov_log_integrand(M, SIGNATURE, np.asarray(z, dtype=complex), J, 2, with_det=False))


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def _sw_block(task):
    (J, z, orbitals, variance, domain, normalization, use_quadrature), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    L = J.shape[0]
    shape = (count, L, orbitals, 2)
    phi = np.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    M = boson_matrices(phi)
    log_weight = 2 * orbitals * L * np.log(variance) + np.sum(np.abs(phi) ** 2, axis=(1, 2, 3)) / variance
    if use_quadrature:
        ratio = domain_integral(M, z, J, domain) / normalization
    else:
        ratio = closed_form_ratio(M, z, J)
    return ratio * np.exp(log_weight)


def _subset_matrices(J: np.ndarray, orbitals: int, variance: float, seed: int, count: int) -> np.ndarray:
    rng = make_rng(seed, STREAM_CHECK, 4)
    shape = (count, J.shape[0], orbitals, 2)
    phi = np.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return boson_matrices(phi)


def _require_sw_signature(signature: SignatureSpec, spec: EnsembleSpec):
    signature.require_ordered()
    if signature.n != 2 or signature.p != 1:
        raise Refusal("Schafer-Wegner check is implemented for p = q = 1",
                      diagnostic={'n': signature.n, 'p': signature.p})
    if spec.num_sites > MAX_SITES:
        raise Refusal(f"Schafer-Wegner check supports at most {MAX_SITES} sites",
                      diagnostic={'sites': spec.num_sites})


def _decay_preflight(spec: EnsembleSpec, signature: SignatureSpec, checks: DualityChecks):
    margin = f3_margin(np.zeros((spec.num_sites, 2, 2)), signature.z, spec.w)
    checks.expect('f3_positive', margin > 0, f"f3 margin {margin:.3g}",
                  f"f3 margin {margin:.3g} is not positive", margin=margin)
    if margin <= 0:
        raise Refusal("integrand does not decay on the Schafer-Wegner domain (f3 positivity fails)",
                      diagnostic={'f3_margin': margin, 'row_sums': spec.w.sum(axis=1).tolist()})


def verify_schafer_wegner(spec: EnsembleSpec, signature: SignatureSpec, num_samples: int, seed: int,
                          domain: QDomain = None, workers: int = 1, tolerance: float = 1e-3,
                          proposal_scale: float = 1.5, subset: int = 64, lambda_check: float = 2.0,
                          block_size: int = DEFAULT_BLOCK_SIZE) -> DualityReport:
    """
    <Det^-1(z1 - H) Det^-1(z2 - H)> against the boson-field average of the
    normalized domain integral int_X F_M DQ / int_X dnu(iQ).

    On one site the domain integral is evaluated by quadrature for every
    boson draw. On two sites the closed form of the same integral is used for
    the average and the quadrature is audited on `subset` draws.
    """
    _require_budget(num_samples)
    spec.require_valid()
    _require_sw_signature(signature, spec)
    domain = domain or QDomain(lam=saddle_lambda(spec.w, spec.orbitals))
    J, L, N = spec.J, spec.num_sites, spec.orbitals
    checks = DualityChecks('verify_schafer_wegner')
    _decay_preflight(spec, signature, checks)

    dimension = chart_dimension(domain.lam)
    checks.expect('chart_dimension', dimension == 4, "chart has real dimension 4",
                  f"chart has real dimension {dimension}, expected 4", dimension=dimension)

    normalization = domain_normalization(J, domain)
    closed = normalization_closed_form(J)
    norm_error = abs(normalization / closed - 1.0)
    checks.expect('normalization', norm_error <= NORMALIZATION_TOL,
                  f"int dnu(iQ) reproduced to {norm_error:.2e}",
                  f"int dnu(iQ) off by {norm_error:.2e}", error=norm_error)

    bound = f2_bound_check(J, domain.lam, seed)
    checks.expect('f2_bound', bound['holds'], f"f2 bound holds, min slack {bound['min_slack']:.3g}",
                  f"f2 bound violated, min slack {bound['min_slack']:.3g}", **bound)
    modulus = fm_modulus_check(J, signature.z, domain.lam, seed)
    checks.expect('fm_modulus', modulus['holds'],
                  f"|F_M| identity holds to {modulus['max_relative_error']:.1e}",
                  f"|F_M| identity off by {modulus['max_relative_error']:.1e}", **modulus)

    variance = float(proposal_scale) / signature.min_im
    audit = _subset_matrices(J, N, variance, seed, subset)
    coarse = domain_ratio(audit, signature.z, J, domain, normalization)
    fine_domain = domain.refined(L)
    fine = domain_ratio(audit, signature.z, J, fine_domain)
    scale = np.maximum(np.abs(fine), 1e-300)
    delta = float(np.max(np.abs(coarse - fine) / scale))
    checks.expect('node_doubling', delta < tolerance / 3.0, f"node-doubling delta {delta:.2e}",
                  f"node-doubling delta {delta:.2e} exceeds tolerance/3", delta=delta)
    closed_gap = float(np.max(np.abs(coarse - closed_form_ratio(audit, signature.z, J)) / scale))
    other = domain_ratio(audit, signature.z, J, domain.with_lambda(domain.lam * lambda_check))
    lambda_gap = float(np.max(np.abs(coarse - other) / scale))
    checks.expect('lambda_independence', lambda_gap < tolerance,
                  f"domain integral unchanged at lambda x{lambda_check:g} ({lambda_gap:.2e})",
                  f"domain integral moves by {lambda_gap:.2e} at lambda x{lambda_check:g}",
                  severity=WARN, gap=lambda_gap)
    cutoffs = domain.cutoffs(J)
    checks.expect('tail', cutoffs['tail_estimate'] < tolerance, f"tail estimate {cutoffs['tail_estimate']:.1e}",
                  f"tail estimate {cutoffs['tail_estimate']:.1e} above tolerance",
                  tail=cutoffs['tail_estimate'])

    lhs = determinant_average(spec, signature.z, -1, num_samples, seed, workers, True, robust=True,
                              block_size=block_size)
    phase = signature_phase(signature.s, N, L)
    payload = (J, np.asarray(signature.z), N, variance, domain, normalization, L == 1)
    values = run_sampler(_sw_block, payload, num_samples, seed, STREAM_PHI, workers, block_size)
    rhs = estimate_from_values(phase * values, seed, robust=True)
    # quadrature error on top of the sampling error
    rhs.se_re = float(np.hypot(rhs.se_re, delta * abs(rhs.value)))
    rhs.se_im = float(np.hypot(rhs.se_im, delta * abs(rhs.value)))
    extra = {}
    if L == 1 and N == 1:
        z1, z2 = signature.z
        oracle, error = gaussian_average(lambda h: 1.0 / ((z1 - h) * (z2 - h)), J[0, 0])
        extra['oracle'] = [oracle.real, oracle.imag]
        checks.expect('oracle', z_score(lhs, exact_estimate(oracle, error)) < 3.0,
                      "left side agrees with the 1-D quadrature oracle",
                      "left side disagrees with the 1-D quadrature oracle", severity=WARN)

    config = {'n': 2, 'p': 1, 'N': N, 'sites': L, 'z': signature.to_list(), 'num_samples': num_samples,
              'seed': seed, 'cutoffs': cutoffs, 'proposal_variance': variance,
              'inner': 'quadrature' if L == 1 else 'closed_form'}
    return build_report('verify_schafer_wegner', lhs, rhs, checks, config,
                        normalization=[normalization.real, normalization.imag],
                        normalization_closed=[closed.real, closed.imag],
                        node_doubling_delta=delta, closed_form_gap=closed_gap, lambda_gap=lambda_gap,
                        r_max=boost_cutoff(audit, J, domain), **extra)


@dataclass
class ShiftPoint:
    t: float
    integral: complex
    se: float
    delta: float
    usable: bool

    def to_dict(self) -> Dict[str, Any]:
        return {'t': self.t, 'integral': [self.integral.real, self.integral.imag], 'se': self.se,
                'delta': self.delta, 'usable': self.usable}


def shift_invariance(spec: EnsembleSpec, signature: SignatureSpec, t_grid: Sequence[float], seed: int,
                     domain: QDomain = None, tolerance: float = 5e-3,
                     phi_norm: float = 1.0) -> DualityReport:
    """
    int_{X(t)} F_M(Q) DQ on a grid of shifts t in [0, 1), for M built from one
    fixed boson draw scaled to |phi| = phi_norm. Flatness is the largest
    pairwise z-score across usable grid points.
    """
    spec.require_valid()
    _require_sw_signature(signature, spec)
    grid = [float(t) for t in t_grid]
    if not grid or any(not 0.0 <= t < 1.0 for t in grid):
        raise InvalidInput("t grid must be non-empty with values in [0, 1)")
    domain = domain or QDomain(lam=saddle_lambda(spec.w, spec.orbitals))
    J, L, N = spec.J, spec.num_sites, spec.orbitals
    checks = DualityChecks('shift_invariance')
    _decay_preflight(spec, signature, checks)

    rng = make_rng(seed, STREAM_CHECK, 5)
    phi = rng.standard_normal((L, N, 2)) + 1j * rng.standard_normal((L, N, 2))
    phi *= phi_norm / np.linalg.norm(phi)
    M = boson_matrices(phi)[None]

    modulus = fm_modulus_check(J, signature.z, domain.lam, seed)
    checks.expect('fm_modulus', modulus['holds'],
                  f"|F_M| identity holds to {modulus['max_relative_error']:.1e}",
                  f"|F_M| identity off by {modulus['max_relative_error']:.1e}", **modulus)

    fine_domain = domain.refined(L)
    points: List[ShiftPoint] = []
    for t in grid:
        coarse = complex(domain_integral(M, signature.z, J, domain, t)[0])
        fine = complex(domain_integral(M, signature.z, J, fine_domain, t)[0])
        delta = abs(coarse - fine)
        se = max(delta, SHIFT_SE_FLOOR * abs(fine))
        usable = bool(np.isfinite(fine) and delta <= tolerance * abs(fine))
        points.append(ShiftPoint(t, fine, se, delta, usable))
        logger.info("shift t=%.3f integral=%s delta=%.2e", t, fine, delta)

    usable = [point for point in points if point.usable]
    if len(usable) < len(points):
        logger.warning("shift grid: %d of %d points unusable at the configured cutoffs",
                       len(points) - len(usable), len(points))
    if not usable:
        raise Refusal("no usable shift at the configured cutoffs",
                      diagnostic={'points': [point.to_dict() for point in points]})
    largest = max(point.t for point in usable)

    worst, pair = 0.0, (usable[0], usable[0])
    for a in usable:
        for b in usable:
            z = abs(a.integral - b.integral) / np.hypot(a.se, b.se)
            if z > worst:
                worst, pair = z, (a, b)
    first, last = pair
    lhs = GreensEstimate(first.integral, first.se, first.se, 0)
    rhs = GreensEstimate(last.integral, last.se, last.se, 0)
    checks.expect('grid_refinement', all(p.delta <= 5e-3 * abs(p.integral) for p in usable),
                  "integral stable under node doubling", "integral moves by more than 0.5% under node doubling",
                  severity=WARN)
    verdict = verdict_for(worst)
    if checks.blocking:
        verdict = INCONCLUSIVE
    config = {'t_grid': grid, 'sites': L, 'N': N, 'z': signature.to_list(), 'seed': seed,
              'cutoffs': domain.cutoffs(J), 'phi_norm': phi_norm}
    logger.info("shift_invariance: max pairwise z=%.3f verdict=%s largest usable t=%.3f", worst, verdict, largest)
    return DualityReport('shift_invariance', lhs, rhs, float(worst), verdict, config, checks.to_list(),
                         {'scan': [point.to_dict() for point in points], 'largest_usable_t': largest})
