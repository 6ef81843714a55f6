"""
Quadrature helpers: complex-valued 1-D integrals, Gauss-Legendre windows and
tensor Gauss-Hermite rules on Hermitian matrices.
"""

import itertools
import logging
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy import integrate

logger = logging.getLogger(__name__)


def complex_quad(func: Callable[[float], complex], a: float, b: float,
                 epsabs: float = 1e-12, epsrel: float = 1e-10, limit: int = 400) -> Tuple[complex, float]:
    """Integrate a complex function over [a, b] (infinite bounds allowed)"""
    re, err_re = integrate.quad(lambda x: func(x).real, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    im, err_im = integrate.quad(lambda x: func(x).imag, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
    return complex(re, im), float(np.hypot(err_re, err_im))


def gaussian_average(func: Callable[[float], complex], variance: float) -> Tuple[complex, float]:
    """<func(h)> for h ~ N(0, variance), by adaptive quadrature"""
    sd = np.sqrt(variance)
    norm = 1.0 / np.sqrt(2.0 * np.pi * variance)
    return complex_quad(lambda h: func(h) * norm * np.exp(-0.5 * (h / sd) ** 2), -np.inf, np.inf)


def legendre_window(a: float, b: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to [a, b]"""
    x, w = leggauss(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def periodic_window(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Trapezoid rule on [0, 2*pi), spectrally accurate for periodic integrands"""
    nodes = 2.0 * np.pi * np.arange(order) / order
    return nodes, np.full(order, 2.0 * np.pi / order)


def hermitian_coordinates(n: int):
    """(row, col, kind) for the n^2 real coordinates of Herm(C^n)"""
    coords = [(a, a, 'diag') for a in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            coords.append((a, b, 're'))
            coords.append((a, b, 'im'))
    return coords


def hermitian_gauss_hermite(n: int, variance: float, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tensor Gauss-Hermite rule for the normalized Gaussian on Herm(C^n) with
    density proportional to exp(-Tr Q^2 / (2 variance)).

    Diagonal entries have variance `variance`; real and imaginary parts of
    off-diagonal entries have variance/2. Exact for polynomial integrands of
    degree below 2*order in every coordinate.

    Returns (nodes of shape (K, n, n), weights of shape (K,)).
    """
    x, w = hermegauss(order)
    w = w / np.sqrt(2.0 * np.pi)
    coords = hermitian_coordinates(n)
    count = order ** len(coords)
    nodes = np.zeros((count, n, n), dtype=complex)
    weights = np.ones(count)

    grids = np.array(list(itertools.product(range(order), repeat=len(coords))))
    for axis, (a, b, kind) in enumerate(coords):
        values = x[grids[:, axis]]
        weights = weights * w[grids[:, axis]]
        if kind == 'diag':
            nodes[:, a, a] += np.sqrt(variance) * values
        elif kind == 're':
            part = np.sqrt(variance / 2.0) * values
            nodes[:, a, b] += part
            nodes[:, b, a] += part
        else:
            part = np.sqrt(variance / 2.0) * values
            nodes[:, a, b] += 1j * part
            nodes[:, b, a] -= 1j * part
    return nodes, weights
