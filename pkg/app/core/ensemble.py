"""
Hierarchical Gaussian Hermitian ensembles.

H acts on V = C^(N |Lambda|) with basis index (i, a) -> i*N + a for site i and
orbital a. Entries are independent complex Gaussians with
E|H_(ia),(jb)|^2 = J_ij; diagonal entries are real with variance J_ii.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Any

import numpy as np

from app.exceptions import ConstructionError, InvalidInput, Refusal
from app.utils.check_engine import CheckEngine
from app.utils.parallel import make_rng, STREAM_H

logger = logging.getLogger(__name__)

PD_RELATIVE_TOL = 1e-10
W_SIGN_TOL = 1e-12
SINGULAR_COND = 1e13


def chain_metric(i: int, j: int) -> float:
    """Unit-spacing open chain"""
    return float(abs(i - j))


@dataclass(frozen=True)
class LatticeSpec:
    num_sites: int
    metric: Callable[[int, int], float] = chain_metric

    def __post_init__(self):
        if int(self.num_sites) < 1:
            raise InvalidInput(f"num_sites must be positive, got {self.num_sites}")

    def distance(self, i: int, j: int) -> float:
        return self.metric(i, j)

    def distance_matrix(self) -> np.ndarray:
        L = self.num_sites
        return np.array([[self.metric(i, j) for j in range(L)] for i in range(L)], dtype=float)


def gue_profile(r, width=None):
    return np.ones_like(np.asarray(r, dtype=float))


def gaussian_band_profile(r, width=1.0):
    return np.exp(-(np.asarray(r, dtype=float) / width) ** 2)


def exponential_band_profile(r, width=1.0):
    return np.exp(-np.asarray(r, dtype=float) / width)


PROFILES = {
    'gue': gue_profile,
    'gaussian_band': gaussian_band_profile,
    'exponential_band': exponential_band_profile,
}


class ValidationReport(CheckEngine):
    """Covariance checks: positive definiteness, J_ij > 0, w_ij <= 0 off the diagonal"""

    def __init__(self, J: np.ndarray, w: np.ndarray):
        super().__init__(subject='covariance')
        self.J = J
        self.w = w
        self.min_eigenvalue = None

    def run_all_checks(self):
        self.results = []
        self._check_positive_definite()
        self._check_positive_entries()
        self._check_w_off_diagonal()
        return self.results

    def _check_positive_definite(self):
        eigenvalues = np.linalg.eigvalsh(self.J)
        self.min_eigenvalue = float(eigenvalues[0])
        threshold = PD_RELATIVE_TOL * float(np.max(np.abs(eigenvalues)))
        self.expect('Positive definiteness', eigenvalues[0] > threshold,
                    f'Smallest eigenvalue {eigenvalues[0]:.6g} above {threshold:.3g}',
                    f'Smallest eigenvalue {eigenvalues[0]:.6g} not above {threshold:.3g}',
                    min_eigenvalue=self.min_eigenvalue)

    def _check_positive_entries(self):
        smallest = float(np.min(self.J))
        self.expect('Positive entries', smallest > 0,
                    'All J_ij > 0',
                    f'Smallest J_ij = {smallest:.6g}',
                    min_entry=smallest)

    def _check_w_off_diagonal(self):
        off = self.w - np.diag(np.diag(self.w))
        largest = float(np.max(off)) if off.size > 1 else 0.0
        self.expect('Inverse off-diagonal sign', largest <= W_SIGN_TOL,
                    'All off-diagonal w_ij <= 0',
                    f'Largest off-diagonal w_ij = {largest:.6g} > 0',
                    severity='WARN', max_off_diagonal=largest)

    @property
    def positive_definite(self) -> bool:
        return self.result_of('Positive definiteness') == 'PASS'

    @property
    def w_sign_ok(self) -> bool:
        return self.result_of('Inverse off-diagonal sign') == 'PASS'

    @property
    def valid(self) -> bool:
        return self.positive_definite and self.result_of('Positive entries') == 'PASS'


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    J: np.ndarray
    w: np.ndarray
    report: ValidationReport = field(repr=False, default=None)

    @property
    def num_sites(self) -> int:
        return self.J.shape[0]


def validate_covariance(cov: CovarianceSpec) -> ValidationReport:
    """Always returns a report; never raises"""
    report = ValidationReport(np.asarray(cov.J, dtype=float), np.asarray(cov.w, dtype=float))
    try:
        report.run_all_checks()
    except Exception as e:
        report.record('Validation', 'ERROR', f'Error validating covariance: {str(e)}')
    return report


def covariance_from_matrix(J) -> CovarianceSpec:
    J = np.array(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise InvalidInput(f"covariance matrix must be square, got shape {J.shape}")
    if not np.all(np.isfinite(J)):
        raise InvalidInput("covariance matrix has non-finite entries")
    if not np.allclose(J, J.T, rtol=0, atol=1e-14 * max(1.0, np.abs(J).max())):
        raise InvalidInput("covariance matrix is not symmetric")
    J = 0.5 * (J + J.T)
    if np.linalg.cond(J) > SINGULAR_COND:
        raise ConstructionError("covariance matrix J is singular")
    w = np.linalg.inv(J)
    w = 0.5 * (w + w.T)
    cov = CovarianceSpec(J, w)
    report = validate_covariance(cov)
    object.__setattr__(cov, 'report', report)
    return cov


def build_covariance(lattice: LatticeSpec, profile, scale: float, width: float = 1.0) -> CovarianceSpec:
    """
    J_ij = scale * profile(|i - j|). `profile` is a callable r -> value or a
    built-in profile name.
    """
    if isinstance(profile, str):
        if profile not in PROFILES:
            raise InvalidInput(f"unknown covariance profile '{profile}'")
        kernel = PROFILES[profile]
        func = lambda r: kernel(r, width)
    else:
        func = profile
    distances = lattice.distance_matrix()
    values = np.asarray(func(distances), dtype=float)
    if values.shape != distances.shape:
        values = np.vectorize(func, otypes=[float])(distances)
    if not np.all(np.isfinite(values)):
        raise InvalidInput("covariance profile produced a non-finite value")
    if np.any(values < 0):
        raise InvalidInput("covariance profile must be positive")
    if np.any(values == 0):
        # far tails of a fast profile underflow; the entry check reports them
        logger.warning("covariance profile underflows to 0 on %d entries", int(np.sum(values == 0)))
    return covariance_from_matrix(float(scale) * values)


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    lattice: LatticeSpec
    orbitals: int
    covariance: CovarianceSpec

    def __post_init__(self):
        if int(self.orbitals) < 1:
            raise InvalidInput(f"orbitals must be positive, got {self.orbitals}")
        if self.covariance.num_sites != self.lattice.num_sites:
            raise InvalidInput("covariance dimension does not match the lattice")

    @property
    def num_sites(self) -> int:
        return self.lattice.num_sites

    @property
    def dim(self) -> int:
        return self.orbitals * self.lattice.num_sites

    @property
    def J(self) -> np.ndarray:
        return self.covariance.J

    @property
    def w(self) -> np.ndarray:
        return self.covariance.w

    @property
    def spec_id(self) -> str:
        payload = json.dumps({'N': self.orbitals, 'J': self.J.tolist()}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def index(self, site: int, orbital: int) -> int:
        return site * self.orbitals + orbital

    def site_slice(self, site: int) -> slice:
        return slice(site * self.orbitals, (site + 1) * self.orbitals)

    def require_valid(self):
        report = self.covariance.report or validate_covariance(self.covariance)
        if not report.valid:
            raise Refusal("ensemble covariance failed validation",
                          diagnostic={'checks': report.to_list()})


@dataclass
class HermitianSample:
    matrix: np.ndarray
    spec_id: str
    seed: int


def variance_matrix(spec: EnsembleSpec) -> np.ndarray:
    """E|H_xy|^2 for every entry, kron(J, ones(N, N))"""
    N = spec.orbitals
    return np.kron(spec.J, np.ones((N, N)))


def draw_hamiltonians(spec: EnsembleSpec, rng: np.random.Generator, count: int) -> np.ndarray:
    """
    Draw `count` samples of shape (count, d, d). The strict upper triangle is
    drawn once and mirrored by conjugate transposition, so every sample is
    exactly Hermitian.
    """
    d = spec.dim
    V = variance_matrix(spec)
    upper_scale = np.triu(np.sqrt(V / 2.0), k=1)
    x = rng.standard_normal((count, d, d))
    y = rng.standard_normal((count, d, d))
    upper = upper_scale * (x + 1j * y)
    diag = rng.standard_normal((count, d)) * np.sqrt(np.diag(V))
    H = upper + np.conj(np.swapaxes(upper, -1, -2))
    idx = np.arange(d)
    H[:, idx, idx] = diag
    return H


def sample(spec: EnsembleSpec, rng_seed: int, draw_index: int = 0) -> HermitianSample:
    spec.require_valid()
    rng = make_rng(rng_seed, STREAM_H, draw_index)
    H = draw_hamiltonians(spec, rng, 1)[0]
    return HermitianSample(H, spec.spec_id, int(rng_seed))


def _site_blocks(spec: EnsembleSpec, K: np.ndarray):
    K = np.asarray(K, dtype=complex)
    if K.shape != (spec.dim, spec.dim):
        raise InvalidInput(f"K has shape {K.shape}, expected {(spec.dim, spec.dim)}")
    return K


def bilinear_form(spec: EnsembleSpec, K, K2) -> complex:
    """J(K, K') = sum_ij J_ij Tr(Pi_i K Pi_j K')"""
    K = _site_blocks(spec, K)
    K2 = _site_blocks(spec, K2)
    return complex(np.sum(variance_matrix(spec) * K * K2.T))


def characteristic_fn(spec: EnsembleSpec, K) -> complex:
    """Omega(K) = <exp(-i Tr H K)> = exp(-J(K, K) / 2)"""
    return complex(np.exp(-0.5 * bilinear_form(spec, K, K)))


def block_unitary(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    """Random block-diagonal unitary with one Haar N x N block per site"""
    from scipy.stats import unitary_group
    N = spec.orbitals
    U = np.zeros((spec.dim, spec.dim), dtype=complex)
    for i in range(spec.num_sites):
        block = unitary_group.rvs(N, random_state=rng) if N > 1 else np.exp(2j * np.pi * rng.random()) * np.ones((1, 1))
        U[spec.site_slice(i), spec.site_slice(i)] = block
    return U


def parse_number(value) -> float:
    """Numbers may be given as JSON numbers or 'p/q' rational strings"""
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


def ensemble_from_config(section: Dict[str, Any]) -> EnsembleSpec:
    """Build an EnsembleSpec from the `ensemble` config table"""
    lattice = LatticeSpec(int(section['lattice']['num_sites']))
    covariance = section['covariance']
    profile = covariance.get('profile', 'gaussian_band')
    if profile == 'explicit':
        matrix = covariance.get('matrix')
        if matrix is None:
            raise InvalidInput("explicit covariance profile requires covariance.matrix")
        L = lattice.num_sites
        values = [parse_number(v) for v in matrix]
        if len(values) != L * L:
            raise InvalidInput(f"covariance.matrix has {len(values)} entries, expected {L * L}")
        cov = covariance_from_matrix(np.array(values).reshape(L, L) * parse_number(covariance.get('scale', 1)))
    else:
        cov = build_covariance(lattice, profile, parse_number(covariance.get('scale', 1)),
                               width=parse_number(covariance.get('width', 1)))
    spec = EnsembleSpec(lattice, int(section.get('orbitals', 1)), cov)
    for entry in cov.report.results:
        if entry['result'] != 'PASS':
            logger.warning("covariance check %s: %s", entry['check_name'], entry['message'])
    return spec


def gue_spec(orbitals: int, variance: float = 1.0) -> EnsembleSpec:
    """Single-site ensemble with J = [[variance]]"""
    return EnsembleSpec(LatticeSpec(1), orbitals, covariance_from_matrix([[variance]]))


def band_spec(num_sites: int, orbitals: int, profile: str, width: float, scale: float = 1.0) -> EnsembleSpec:
    lattice = LatticeSpec(num_sites)
    return EnsembleSpec(lattice, orbitals, build_covariance(lattice, profile, scale, width))
