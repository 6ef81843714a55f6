"""
Monte Carlo Green's functions, determinant-ratio cross-check and spectral
diagnostics (density of states, localization decay, level spacings).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats

from app.core.ensemble import EnsembleSpec, draw_hamiltonians
from app.exceptions import InvalidInput, Refusal
from app.utils.parallel import block_plan, make_rng, run_sampler, run_blocks, STREAM_H, STREAM_GRID, STREAM_RETRY
from app.utils.stats import GreensEstimate, estimate_from_values

logger = logging.getLogger(__name__)

COND_MAX = 1e12
MIN_SPACINGS = 1000
SPECTRUM_BLOCK = 256

# Unitary-class Wigner surmise p(s) = (32/pi^2) s^2 exp(-4 s^2/pi): a chi law
# with three degrees of freedom and unit mean.
wigner_surmise_gue = stats.chi(3, scale=np.sqrt(np.pi / 8.0))


def wigner_surmise_pdf(s):
    s = np.asarray(s, dtype=float)
    return (32.0 / np.pi ** 2) * s ** 2 * np.exp(-4.0 * s ** 2 / np.pi)


@dataclass
class SpectralProbe:
    z1: complex
    z2: complex = None
    epsilon: float = 1e-2
    energy: float = 0.0

    @classmethod
    def transport(cls, energy: float, epsilon: float) -> 'SpectralProbe':
        return cls(complex(energy, epsilon), complex(energy, -epsilon), epsilon, energy)


@dataclass
class LyapunovFit:
    lam: float
    intercept: float
    r_squared: float
    fit_range: Tuple[int, int]
    points: List[Tuple[float, float]] = field(default_factory=list)


def _check_probe(z: complex):
    if complex(z).imag == 0:
        raise InvalidInput(f"resolvent probe z={z} must have nonzero imaginary part")


def _check_site(spec: EnsembleSpec, site: int, name: str = 'site'):
    if not 0 <= site < spec.num_sites:
        raise InvalidInput(f"{name} {site} outside lattice of {spec.num_sites} sites")


def _check_orbital(spec: EnsembleSpec, orbital: int, name: str = 'orbital'):
    if orbital is not None and not 0 <= orbital < spec.orbitals:
        raise InvalidInput(f"{name} {orbital} outside 0..{spec.orbitals - 1}")


def resolvents(H: np.ndarray, z: complex) -> Tuple[np.ndarray, int]:
    """
    (z - H)^-1 for a stack of draws. Draws that fail to factorize are returned
    as NaN and counted.
    """
    d = H.shape[-1]
    A = z * np.eye(d) - H
    try:
        R = np.linalg.inv(A)
        bad = ~np.all(np.isfinite(R.reshape(len(H), -1)), axis=1)
        R[bad] = np.nan
        return R, int(bad.sum())
    except np.linalg.LinAlgError:
        R = np.empty_like(A)
        failures = 0
        for k in range(len(A)):
            try:
                R[k] = np.linalg.inv(A[k])
            except np.linalg.LinAlgError:
                R[k] = np.nan
                failures += 1
        return R, failures


def _draw_clean(spec: EnsembleSpec, seed: int, stream: int, block: int, count: int, evaluate):
    """
    Draw `count` samples and evaluate them; non-finite values are replaced by
    fresh draws from the retry stream. `stream` is an int or a tuple key.

    Returns (values, retries).
    """
    key = stream if isinstance(stream, tuple) else (stream,)
    rng = make_rng(seed, *key, block)
    values = evaluate(draw_hamiltonians(spec, rng, count))
    retries = 0
    bad = ~np.isfinite(values)
    attempt = 0
    while np.any(bad):
        attempt += 1
        retry_rng = make_rng(seed, STREAM_RETRY, *key, block, attempt)
        replacement = evaluate(draw_hamiltonians(spec, retry_rng, int(bad.sum())))
        values[bad] = replacement
        retries += int(bad.sum())
        bad = ~np.isfinite(values)
        if attempt > 100:
            raise Refusal("resolvent retries exhausted")
    if retries:
        logger.warning("block %d: %d singular draws replaced", block, retries)
    return values, retries


def _sample_clean(block_func, payload, num_samples: int, seed: int, stream, workers: int = 1):
    """run_sampler for blocks that also report a retry count; returns (values, retries)"""
    tasks = [(payload, seed, stream, index, length) for index, length in block_plan(num_samples)]
    chunks = run_blocks(block_func, tasks, workers)
    if not chunks:
        return np.zeros(0, dtype=complex), 0
    return np.concatenate([values for values, _ in chunks]), sum(retries for _, retries in chunks)


def _clean_estimate(values: np.ndarray, retries: int, seed: int) -> GreensEstimate:
    estimate = estimate_from_values(values, seed)
    estimate.extra['retries'] = int(retries)
    return estimate


def _trace_block(R: np.ndarray, sl: slice) -> np.ndarray:
    return np.trace(R[:, sl, sl], axis1=1, axis2=2)


def _g1_block(task):
    (spec, site, z), seed, stream, block, count = task

    def evaluate(H):
        R, _ = resolvents(H, z)
        return _trace_block(R, spec.site_slice(site))

    return _draw_clean(spec, seed, stream, block, count, evaluate)


def estimate_g1(spec: EnsembleSpec, site: int, z: complex, num_samples: int, seed: int,
                workers: int = 1, stream: int = STREAM_H) -> GreensEstimate:
    """G1_i(z) = <Tr Pi_i (z - H)^-1>"""
    spec.require_valid()
    _check_probe(z)
    _check_site(spec, site)
    values, retries = _sample_clean(_g1_block, (spec, site, complex(z)), num_samples, seed, stream, workers)
    return _clean_estimate(values, retries, seed)


def g2_values(R1: np.ndarray, R2: np.ndarray, si: slice, sj: slice) -> np.ndarray:
    """Tr Pi_i R1 Pi_j R2 per draw"""
    return np.einsum('kab,kba->k', R1[:, si, sj], R2[:, sj, si])


def _g2_block(task):
    (spec, i, j, z1, z2), seed, stream, block, count = task

    def evaluate(H):
        R1, _ = resolvents(H, z1)
        R2, _ = resolvents(H, z2)
        return g2_values(R1, R2, spec.site_slice(i), spec.site_slice(j))

    return _draw_clean(spec, seed, stream, block, count, evaluate)


def estimate_g2(spec: EnsembleSpec, site_i: int, site_j: int, z1: complex, z2: complex,
                num_samples: int, seed: int, workers: int = 1) -> GreensEstimate:
    """G2_ij(z1, z2) = <Tr Pi_i (z1 - H)^-1 Pi_j (z2 - H)^-1>"""
    spec.require_valid()
    _check_probe(z1)
    _check_probe(z2)
    _check_site(spec, site_i, 'site_i')
    _check_site(spec, site_j, 'site_j')
    values, retries = _sample_clean(_g2_block, (spec, site_i, site_j, complex(z1), complex(z2)),
                                    num_samples, seed, STREAM_H, workers)
    return _clean_estimate(values, retries, seed)


def _ratio_cofactor(A: np.ndarray, row: int, col: int) -> np.ndarray:
    """C_(row,col)(A) / Det(A) per draw, from minor determinants"""
    minor = np.delete(np.delete(A, row, axis=1), col, axis=2)
    sign_a, log_a = np.linalg.slogdet(A)
    if minor.shape[-1] == 0:
        sign_m, log_m = np.ones(len(A)), np.zeros(len(A))
    else:
        sign_m, log_m = np.linalg.slogdet(minor)
    parity = -1.0 if (row + col) % 2 else 1.0
    return parity * (sign_m / sign_a) * np.exp(log_m - log_a)


def _det_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    sign_n, log_n = np.linalg.slogdet(num)
    sign_d, log_d = np.linalg.slogdet(den)
    return (sign_n / sign_d) * np.exp(log_n - log_d)


def _ratio_function(A1, A2, x, y):
    """s, t -> Det(A1) Det(A2 + t E_xy) / (Det(A1 - s E_yx) Det(A2))"""
    def value(s, t):
        B1 = A1.copy()
        B1[:, y, x] -= s
        B2 = A2.copy()
        B2[:, x, y] += t
        return _det_ratio(A1, B1) * _det_ratio(B2, A2)
    return value


def detratio_values(H: np.ndarray, spec: EnsembleSpec, site_i: int, site_j: int,
                    z1: complex, z2: complex, orbital_a: int = None, orbital_b: int = None,
                    method: str = 'cofactor', fd_step: float = 1e-4,
                    cond_max: float = COND_MAX) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-draw d^2/ds dt of Det(z1-H) Det(z2-H+t E) / (Det(z1-H-s E') Det(z2-H)) at 0,
    with E = E_ij^ab and E' = E_ji^ba. Orbitals left as None are summed.

    Returns (values, flagged) where flagged marks ill-conditioned draws.
    """
    d = spec.dim
    A1 = z1 * np.eye(d) - H
    A2 = z2 * np.eye(d) - H
    flagged = (np.linalg.cond(A1) > cond_max) | (np.linalg.cond(A2) > cond_max)

    orbitals_a = range(spec.orbitals) if orbital_a is None else [orbital_a]
    orbitals_b = range(spec.orbitals) if orbital_b is None else [orbital_b]
    total = np.zeros(len(H), dtype=complex)
    for a in orbitals_a:
        for b in orbitals_b:
            x = spec.index(site_i, a)
            y = spec.index(site_j, b)
            if method == 'cofactor':
                # d/dt: C_(x,y)(A2)/Det A2;  d/ds: C_(y,x)(A1)/Det A1
                total += _ratio_cofactor(A1, y, x) * _ratio_cofactor(A2, x, y)
            elif method == 'finite_difference':
                f = _ratio_function(A1, A2, x, y)
                h = fd_step
                total += (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)
            else:
                raise InvalidInput(f"unknown detratio method '{method}'")
    return total, flagged


def _detratio_block(task):
    (spec, i, j, a, b, z1, z2, method, fd_step, cond_max), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    H = draw_hamiltonians(spec, rng, count)
    values, flagged = detratio_values(H, spec, i, j, z1, z2, a, b, method, fd_step, cond_max)
    values[flagged] = np.nan
    return values


def estimate_g2_detratio(spec: EnsembleSpec, site_i: int, site_j: int, orbital_a: int, orbital_b: int,
                         z1: complex, z2: complex, num_samples: int, seed: int, workers: int = 1,
                         method: str = 'cofactor', fd_step: float = 1e-4,
                         cond_max: float = COND_MAX) -> GreensEstimate:
    """
    Determinant-ratio estimate of G2 on the same draw stream as estimate_g2.
    Ill-conditioned draws are dropped and counted in extra['flagged'].
    """
    spec.require_valid()
    _check_probe(z1)
    _check_probe(z2)
    _check_site(spec, site_i, 'site_i')
    _check_site(spec, site_j, 'site_j')
    _check_orbital(spec, orbital_a, 'orbital_a')
    _check_orbital(spec, orbital_b, 'orbital_b')
    payload = (spec, site_i, site_j, orbital_a, orbital_b, complex(z1), complex(z2), method, fd_step, cond_max)
    values = run_sampler(_detratio_block, payload, num_samples, seed, STREAM_H, workers)
    good = np.isfinite(values)
    flagged = int((~good).sum())
    if values.size and not np.any(good):
        raise Refusal("all draws ill-conditioned", diagnostic={'flagged': flagged, 'cond_max': cond_max})
    if flagged:
        logger.warning("detratio: %d ill-conditioned draws flagged", flagged)
    estimate = estimate_from_values(values[good], seed)
    estimate.extra['flagged'] = flagged
    return estimate


def _dos_point(task):
    spec, site, energy, epsilon, num_samples, seed, index = task
    values, retries = _sample_clean(_g1_block, (spec, site, complex(energy, epsilon)),
                                    num_samples, seed, (STREAM_GRID, index), 1)
    if retries:
        logger.warning("dos: %d singular draws replaced at E=%g", retries, energy)
    estimate = estimate_from_values(values, seed)
    return float(energy), -estimate.value.imag / np.pi, estimate.se_im / np.pi


def dos_profile(spec: EnsembleSpec, site: int, energy_grid: Sequence[float], epsilon: float,
                num_samples: int, seed: int, workers: int = 1) -> List[Tuple[float, float, float]]:
    """rho(E) = -Im G1_i(E + i eps) / pi with an independent stream per grid point"""
    if epsilon <= 0:
        raise InvalidInput("epsilon must be positive")
    spec.require_valid()
    _check_site(spec, site)
    tasks = [(spec, site, E, epsilon, num_samples, seed, k) for k, E in enumerate(energy_grid)]
    return run_blocks(_dos_point, tasks, workers)


def lyapunov_fit(g2_values: Sequence[Tuple[float, float]], fit_range: Tuple[float, float] = None) -> LyapunovFit:
    """Least-squares fit of log|G2| against distance; lambda = -slope"""
    points = [(float(d), float(v)) for d, v in g2_values
              if fit_range is None or fit_range[0] <= d <= fit_range[1]]
    if len(points) < 4:
        raise InvalidInput(f"lyapunov fit needs at least 4 points, got {len(points)}")
    distances = np.array([p[0] for p in points])
    magnitudes = np.array([p[1] for p in points])
    if np.any(magnitudes <= 0):
        raise InvalidInput("lyapunov fit values must be positive")
    fit = stats.linregress(distances, np.log(magnitudes))
    r_squared = float(fit.rvalue ** 2) if np.isfinite(fit.rvalue) else 0.0
    span = (int(distances.min()), int(distances.max()))
    return LyapunovFit(float(-fit.slope), float(fit.intercept), r_squared, span, points)


def _lyapunov_block(task):
    (spec, origin, z1, z2), seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    H = draw_hamiltonians(spec, rng, count)
    R1, _ = resolvents(H, z1)
    R2, _ = resolvents(H, z2)
    so = spec.site_slice(origin)
    rows = [g2_values(R1, R2, so, spec.site_slice(j)) for j in range(spec.num_sites)]
    return np.stack(rows, axis=1)


def lyapunov_scan(spec: EnsembleSpec, energy: float, epsilon: float, num_samples: int, seed: int,
                  origin: int = 0, workers: int = 1) -> List[Tuple[int, float, float]]:
    """(distance, |G2_origin,j(E+i eps, E-i eps)|, se) for every site j"""
    spec.require_valid()
    _check_site(spec, origin, 'origin')
    probe = SpectralProbe.transport(energy, epsilon)
    tasks = [((spec, origin, probe.z1, probe.z2), seed, STREAM_H, index, length)
             for index, length in block_plan(num_samples, SPECTRUM_BLOCK)]
    chunks = run_blocks(_lyapunov_block, tasks, workers)
    values = np.concatenate(chunks, axis=0)
    rows = []
    for j in range(spec.num_sites):
        estimate = estimate_from_values(values[:, j], seed)
        rows.append((int(spec.lattice.distance(origin, j)), abs(estimate.value), float(np.hypot(estimate.se_re, estimate.se_im))))
    return rows


def unfold_spacings(levels: np.ndarray, window: int = 15, bulk_fraction: float = 0.6) -> np.ndarray:
    """
    Nearest-neighbour spacings of one sorted spectrum, restricted to the central
    bulk_fraction of levels and divided by the mean spacing over a sliding
    window of `window` levels.
    """
    levels = np.sort(np.asarray(levels, dtype=float))
    n = levels.size
    half = window // 2
    lo = int(np.floor(n * (1.0 - bulk_fraction) / 2.0))
    hi = n - lo - 1
    lo = max(lo, half)
    hi = min(hi, n - 1 - half)
    if hi <= lo:
        return np.zeros(0)
    k = np.arange(lo, hi)
    local_mean = (levels[k + half] - levels[k - half]) / (2 * half)
    return (levels[k + 1] - levels[k]) / local_mean


def ks_to_wigner(spacings: np.ndarray) -> float:
    return float(stats.kstest(np.asarray(spacings, dtype=float), wigner_surmise_gue.cdf).statistic)


@dataclass
class SpacingStats:
    bin_edges: np.ndarray
    counts: np.ndarray
    ks_distance: float
    num_spacings: int
    mean_spacing: float


def spacing_stats_from_spectra(spectra, window: int = 15, bulk_fraction: float = 0.6,
                               num_bins: int = 40, s_max: float = 4.0) -> SpacingStats:
    spacings = np.concatenate([unfold_spacings(levels, window, bulk_fraction) for levels in spectra])
    if spacings.size < MIN_SPACINGS:
        raise Refusal(f"only {spacings.size} spacings, need at least {MIN_SPACINGS}")
    counts, edges = np.histogram(spacings, bins=num_bins, range=(0.0, s_max))
    return SpacingStats(edges, counts, ks_to_wigner(spacings), int(spacings.size), float(spacings.mean()))


def _spectra_block(task):
    spec, seed, stream, block, count = task
    rng = make_rng(seed, stream, block)
    return np.linalg.eigvalsh(draw_hamiltonians(spec, rng, count))


def spacing_stats(spec: EnsembleSpec, num_samples: int, unfolding_window: int, seed: int,
                  bulk_fraction: float = 0.6, num_bins: int = 40, s_max: float = 4.0,
                  workers: int = 1) -> SpacingStats:
    """Unfolded nearest-neighbour spacing histogram and KS distance to the GUE surmise"""
    spec.require_valid()
    tasks = [(spec, seed, STREAM_H, index, length) for index, length in block_plan(num_samples, SPECTRUM_BLOCK)]
    spectra = np.concatenate(run_blocks(_spectra_block, tasks, workers), axis=0)
    return spacing_stats_from_spectra(spectra, unfolding_window, bulk_fraction, num_bins, s_max)
