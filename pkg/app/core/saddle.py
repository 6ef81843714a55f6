"""
Saddle-point structure of the supersymmetric Q-integral.

For translation-invariant w the saddle-point equation
    sum_j w_ij s Q_j s = N Q_i^-1
has site-independent solutions Q_i = lambda diag(q_BB, q_FF) with
lambda = sqrt(N / sum_j w_ij) and the dimensionless equation s q s = q^-1,
s_BB = diag(1, -1), s_FF = 1. q_BB runs over one hyperboloid sheet, q_FF over
a 2-sphere plus the two isolated points +1 and -1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
from scipy.stats import unitary_group

from app.core.duality import _require_budget, determinant_average, fermionic_kernel_quadrature
from app.core.ensemble import gue_spec
from app.exceptions import InvalidInput, Refusal
from app.utils.check_engine import CheckEngine, WARN
from app.utils.parallel import DEFAULT_BLOCK_SIZE, STREAM_GRID, make_rng
from app.utils.stats import GreensEstimate, exact_estimate, z_score

logger = logging.getLogger(__name__)

BRANCHES = ('hyperbolic_BB', 'sphere_FF', 'plus_one_FF', 'minus_one_FF')
S_BB = np.diag([1.0, -1.0])
S_FF = np.eye(2)
RESIDUAL_TOL = 1e-8
SITED_TOL = 1e-10
NULL_THRESHOLD = 1e-8
ROW_SUM_TOL = 1e-12
SINGULAR_COND = 1e13
MAX_MOMENT = {'n': 2, 'N': 30}


@dataclass
class SaddleConfig:
    """Inverse covariance w, orbital count and the sector signatures"""
    w: np.ndarray
    orbitals: int = 1
    s_bb: np.ndarray = field(default_factory=lambda: S_BB.copy())
    s_ff: np.ndarray = field(default_factory=lambda: S_FF.copy())

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if self.w.ndim != 2 or self.w.shape[0] != self.w.shape[1]:
            raise InvalidInput(f"w must be square, got shape {self.w.shape}")
        if not np.all(np.isfinite(self.w)):
            raise InvalidInput("w must be finite")
        if int(self.orbitals) < 1:
            raise InvalidInput(f"orbitals must be positive, got {self.orbitals}")

    @property
    def row_sums(self) -> np.ndarray:
        return self.w.sum(axis=1)

    @property
    def translation_invariant(self) -> bool:
        sums = self.row_sums
        return bool(np.max(np.abs(sums - sums[0])) <= ROW_SUM_TOL * max(1.0, np.max(np.abs(sums))))

    @property
    def lam(self) -> float:
        sums = self.row_sums
        if np.any(sums <= 0):
            raise Refusal("saddle needs sum_j w_ij > 0 on every row", diagnostic={'row_sums': sums.tolist()})
        if not self.translation_invariant:
            raise Refusal("constant saddle needs translation-invariant w (equal row sums)",
                          diagnostic={'row_sums': sums.tolist()})
        return float(np.sqrt(self.orbitals / sums[0]))


@dataclass(frozen=True)
class ManifoldPoint:
    branch: str
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise InvalidInput(f"unknown branch '{self.branch}', expected one of {BRANCHES}")
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise InvalidInput("manifold coordinates must be finite")
        if self.branch == 'sphere_FF' and not 0.0 <= self.theta <= np.pi:
            raise InvalidInput(f"sphere theta must lie in [0, pi], got {self.theta}")
        object.__setattr__(self, 'phi', float(self.phi) % (2.0 * np.pi))

    @property
    def sector(self) -> str:
        return 'BB' if self.branch == 'hyperbolic_BB' else 'FF'


def manifold_point(pt: ManifoldPoint) -> np.ndarray:
    """Explicit 2x2 matrix of a point on one of the solution branches"""
    if pt.branch == 'hyperbolic_BB':
        c, s = np.cosh(pt.theta), np.sinh(pt.theta)
        return np.array([[c, s * np.exp(1j * pt.phi)], [s * np.exp(-1j * pt.phi), c]])
    if pt.branch == 'sphere_FF':
        c, s = np.cos(pt.theta), np.sin(pt.theta)
        return np.array([[c, s * np.exp(1j * pt.phi)], [s * np.exp(-1j * pt.phi), -c]])
    sign = 1.0 if pt.branch == 'plus_one_FF' else -1.0
    return sign * np.eye(2, dtype=complex)


def _inverse(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=complex)
    if q.shape != (2, 2):
        raise InvalidInput(f"saddle blocks are 2x2, got shape {q.shape}")
    if not np.all(np.isfinite(q)) or np.linalg.cond(q) > SINGULAR_COND:
        raise InvalidInput("saddle block is singular")
    return np.linalg.inv(q)


def sector_residual(q: np.ndarray, s: np.ndarray) -> float:
    """||s q s - q^-1||_F"""
    return float(np.linalg.norm(s @ q @ s - _inverse(q)))


def saddle_residual(q_bb: np.ndarray, q_ff: np.ndarray, config: SaddleConfig = None) -> float:
    s_bb = S_BB if config is None else config.s_bb
    s_ff = S_FF if config is None else config.s_ff
    return float(np.hypot(sector_residual(q_bb, s_bb), sector_residual(q_ff, s_ff)))


class SaddleReport(CheckEngine):
    def __init__(self):
        super().__init__(subject='constant_saddle')

    def run_all_checks(self):
        return self.to_list()


def _supermatrix_q(lam: float, q_bb: np.ndarray, q_ff: np.ndarray) -> np.ndarray:
    Q = np.zeros((4, 4), dtype=complex)
    Q[:2, :2] = lam * q_bb
    Q[2:, 2:] = lam * q_ff
    return Q


def constant_saddle(config: SaddleConfig, q_bb: np.ndarray = None,
                    q_ff: np.ndarray = None) -> Tuple[float, SaddleReport]:
    """
    lambda and a check that Q_i = lambda diag(q_bb, q_ff) solves the sited
    equation on every row of w.
    """
    lam = config.lam
    q_bb = manifold_point(ManifoldPoint('hyperbolic_BB', 0.7, 1.1)) if q_bb is None else q_bb
    q_ff = manifold_point(ManifoldPoint('sphere_FF', 0.4, 2.0)) if q_ff is None else q_ff
    report = SaddleReport()
    residual = saddle_residual(q_bb, q_ff, config)
    report.expect('block_residual', residual < RESIDUAL_TOL, f"blocks solve s q s = q^-1 ({residual:.1e})",
                  f"blocks miss s q s = q^-1 by {residual:.1e}", residual=residual)

    s = np.zeros((4, 4))
    s[:2, :2] = config.s_bb
    s[2:, 2:] = config.s_ff
    Q = _supermatrix_q(lam, q_bb, q_ff)
    Q_inv = np.linalg.inv(Q)
    L = config.w.shape[0]
    worst = 0.0
    for i in range(L):
        lhs = sum(config.w[i, j] * (s @ Q @ s) for j in range(L))
        worst = max(worst, float(np.linalg.norm(lhs - config.orbitals * Q_inv)))
    report.expect('sited_residual', worst < SITED_TOL, f"sited equation holds to {worst:.1e}",
                  f"sited equation off by {worst:.1e}", residual=worst)
    logger.info("constant saddle: lambda=%.12g, sited residual %.2e", lam, worst)
    return lam, report


def _fiber_map(q_bb: np.ndarray, q_ff: np.ndarray, s_bb: np.ndarray, s_ff: np.ndarray) -> np.ndarray:
    """q1 -> s q1 s + q0^-1 q1 q0^-1 on the odd blocks (X, Y), as an 8x8 complex matrix"""
    a_inv, b_inv = _inverse(q_bb), _inverse(q_ff)
    columns = []
    for k in range(8):
        vector = np.zeros(8, dtype=complex)
        vector[k] = 1.0
        X, Y = vector[:4].reshape(2, 2), vector[4:].reshape(2, 2)
        image_x = s_bb @ X @ s_ff + a_inv @ X @ b_inv
        image_y = s_ff @ Y @ s_bb + b_inv @ Y @ a_inv
        columns.append(np.concatenate([image_x.ravel(), image_y.ravel()]))
    return np.stack(columns, axis=1)


def fiber_dimension(q_bb: np.ndarray, q_ff: np.ndarray, config: SaddleConfig = None) -> int:
    """Complex null-space dimension of the linearized equation in the odd directions"""
    residual = saddle_residual(q_bb, q_ff, config)
    if residual >= RESIDUAL_TOL:
        raise InvalidInput(f"fiber dimension needs a saddle point, residual is {residual:.1e}")
    s_bb = S_BB if config is None else config.s_bb
    s_ff = S_FF if config is None else config.s_ff
    singular = np.linalg.svd(_fiber_map(q_bb, q_ff, s_bb, s_ff), compute_uv=False)
    cutoff = NULL_THRESHOLD * singular[0] if singular[0] > 0 else NULL_THRESHOLD
    dimension = int(np.sum(singular < cutoff))
    logger.debug("fiber singular values %s, cutoff %.1e", np.array2string(singular, precision=3), cutoff)
    return dimension


def random_u11(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Random g with g^* s_BB g = s_BB"""
    t = scale * rng.standard_normal()
    alpha, beta, gamma = rng.uniform(0.0, 2.0 * np.pi, size=3)
    g = np.array([[np.cosh(t) * np.exp(1j * beta), np.sinh(t) * np.exp(1j * gamma)],
                  [np.sinh(t) * np.exp(-1j * gamma), np.cosh(t) * np.exp(-1j * beta)]])
    return np.exp(1j * alpha) * g


def random_u2(rng: np.random.Generator) -> np.ndarray:
    return unitary_group.rvs(2, random_state=rng)


def orbit_residual(q_bb: np.ndarray, q_ff: np.ndarray, rng: np.random.Generator) -> float:
    """Residual after moving (q_bb, q_ff) along the orbit q -> g q g^*"""
    g, u = random_u11(rng), random_u2(rng)
    return saddle_residual(g @ q_bb @ np.conj(g.T), u @ q_ff @ np.conj(u.T))


def _random_point(rng: np.random.Generator, branch: str, theta_max: float = 2.0) -> ManifoldPoint:
    if branch == 'hyperbolic_BB':
        theta = rng.uniform(0.0, theta_max)
    else:
        theta = float(np.arccos(rng.uniform(-1.0, 1.0)))
    return ManifoldPoint(branch, theta, rng.uniform(0.0, 2.0 * np.pi))


def saddle_scan(count: int, seed: int, config: SaddleConfig = None) -> List[Dict[str, Any]]:
    """Rows (branch, theta, phi, residual) over random points of both families plus the two isolated points"""
    s_bb = S_BB if config is None else config.s_bb
    s_ff = S_FF if config is None else config.s_ff
    rng = make_rng(seed, STREAM_GRID, 0)
    rows = []
    for branch in ('hyperbolic_BB', 'sphere_FF'):
        s = s_bb if branch == 'hyperbolic_BB' else s_ff
        for _ in range(int(count)):
            pt = _random_point(rng, branch)
            rows.append({'branch': branch, 'theta': pt.theta, 'phi': pt.phi,
                         'residual': sector_residual(manifold_point(pt), s)})
    for branch in ('plus_one_FF', 'minus_one_FF'):
        pt = ManifoldPoint(branch)
        rows.append({'branch': branch, 'theta': 0.0, 'phi': 0.0,
                     'residual': sector_residual(manifold_point(pt), s_ff)})
    worst = max(row['residual'] for row in rows)
    logger.info("saddle scan: %d points, max residual %.2e", len(rows), worst)
    return rows


def fiber_scan(count: int, seed: int, config: SaddleConfig = None) -> List[Dict[str, Any]]:
    """Rows (theta_bb, phi_bb, theta_ff, phi_ff, dimension) at random points of hyperboloid x sphere"""
    rng = make_rng(seed, STREAM_GRID, 1)
    rows = []
    for _ in range(int(count)):
        bb = _random_point(rng, 'hyperbolic_BB')
        ff = _random_point(rng, 'sphere_FF')
        dimension = fiber_dimension(manifold_point(bb), manifold_point(ff), config)
        rows.append({'theta_bb': bb.theta, 'phi_bb': bb.phi, 'theta_ff': ff.theta, 'phi_ff': ff.phi,
                     'dimension': dimension})
    for branch in ('plus_one_FF', 'minus_one_FF'):
        dimension = fiber_dimension(np.eye(2), manifold_point(ManifoldPoint(branch)), config)
        logger.info("fiber dimension at isolated point %s: %d", branch, dimension)
    off = [row for row in rows if row['dimension'] != 4]
    if off:
        logger.warning("fiber dimension differs from 4 at %d of %d points", len(off), len(rows))
    return rows


# ---------------------------------------------------------------------------
# GUE determinant moments
# ---------------------------------------------------------------------------

@dataclass
class MomentReport:
    N: int
    n: int
    energy: float
    lam: float
    mc: GreensEstimate
    quadrature: complex
    z_score: float
    saddle: complex
    ratio: complex
    checks: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {'N': self.N, 'n': self.n, 'E': self.energy, 'lambda': self.lam, 'mc': self.mc.to_dict(),
                'quadrature': [self.quadrature.real, self.quadrature.imag], 'z_score': self.z_score,
                'saddle': [self.saddle.real, self.saddle.imag], 'ratio': [self.ratio.real, self.ratio.imag],
                'checks': self.checks}


def critical_points(energy: float, lam: float = 1.0) -> Tuple[complex, complex]:
    """Roots of q^2 + iEq - lambda^2 = 0"""
    root = np.sqrt(complex(4.0 * lam ** 2 - energy ** 2))
    return (root - 1j * energy) / 2.0, (-root - 1j * energy) / 2.0


def steepest_descent_estimate(orbitals: int, n: int, energy: float, lam: float = 1.0) -> complex:
    """
    Gaussian evaluation of int Det^N(E - iQ) dnu(Q) at the uniform critical
    points Q = q 1_n, summed over both.
    """
    total = 0j
    for q in critical_points(energy, lam):
        base = energy - 1j * q
        hessian = 1.0 - lam ** 2 / base ** 2
        total += (base ** (n * orbitals) * np.exp(-orbitals * n * q ** 2 / (2.0 * lam ** 2))
                  * hessian ** (-n * n / 2.0))
    return complex(total)


def gue_det_moment(orbitals: int, n: int, energy: float, num_samples: int, seed: int, lam: float = 1.0,
                   workers: int = 1, block_size: int = DEFAULT_BLOCK_SIZE) -> MomentReport:
    """
    <Det^n(E - H)> over GUE(N) with E|H_ab|^2 = lambda^2 / N, by Monte Carlo
    and by exact quadrature of int Det^N(E - iQ) exp(-(N / 2 lambda^2) Tr Q^2) dQ
    over Herm(C^n).
    """
    _require_budget(num_samples)
    if not 1 <= n <= MAX_MOMENT['n'] or not 1 <= orbitals <= MAX_MOMENT['N']:
        raise Refusal(f"GUE moments are supported for n <= {MAX_MOMENT['n']} and N <= {MAX_MOMENT['N']}",
                      diagnostic={'n': n, 'N': orbitals})
    variance = lam ** 2 / orbitals
    spec = gue_spec(orbitals, variance)
    z = [complex(energy)] * n
    mc = determinant_average(spec, z, 1, num_samples, seed, workers, True, robust=True, block_size=block_size)
    quadrature = fermionic_kernel_quadrature(variance, z, orbitals)
    score = z_score(mc, exact_estimate(quadrature))
    saddle = steepest_descent_estimate(orbitals, n, energy, lam)
    ratio = quadrature / saddle if abs(saddle) > 0 else complex(math.nan, math.nan)

    checks = CheckEngine('gue_det_moment')
    checks.expect('mc_vs_quadrature', score < 3.0, f"z-score {score:.2f}", f"z-score {score:.2f}",
                  severity=WARN, z=score)
    logger.info("GUE moment N=%d n=%d E=%g: mc=%s quad=%s z=%.2f ratio=%s",
                orbitals, n, energy, mc.value, quadrature, score, ratio)
    return MomentReport(orbitals, n, float(energy), float(lam), mc, quadrature, score, saddle, ratio,
                        checks.to_list())
