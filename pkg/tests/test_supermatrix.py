"""
Supertrace, superdeterminant, logarithm and the Gaussian superintegral
"""

import numpy as np
import pytest

from app.core.grassmann import GeneratorSet, even_exp
from app.core.supermatrix import (GrassmannMatrix, SuperMatrix, even_matrix_det, even_matrix_inverse,
                                  gaussian_superintegral, random_supermatrix, superdeterminant,
                                  supermatrix_log, supermatrix_product, supertrace)
from app.exceptions import ConstructionError, InvalidInput

TOL = 1e-10


@pytest.fixture
def souls():
    return GeneratorSet(['a1', 'a2', 'a3', 'a4'])


@pytest.mark.parametrize('p,q', [(1, 1), (2, 1), (1, 2)])
def test_superdeterminant_is_multiplicative(souls, p, q):
    rng = np.random.default_rng(10 * p + q)
    for _ in range(20):
        X = random_supermatrix(souls, p, q, rng)
        Y = random_supermatrix(souls, p, q, rng)
        lhs = superdeterminant(supermatrix_product(X, Y))
        rhs = superdeterminant(X) * superdeterminant(Y)
        assert lhs.max_abs_difference(rhs) <= TOL * max(1.0, abs(rhs.scalar_part))


@pytest.mark.parametrize('p,q', [(1, 1), (2, 1)])
def test_superdeterminant_is_exp_of_supertrace_log(souls, p, q):
    rng = np.random.default_rng(7 + p)
    for _ in range(5):
        Q = random_supermatrix(souls, p, q, rng)
        via_log = even_exp(supertrace(supermatrix_log(Q)))
        direct = superdeterminant(Q)
        assert via_log.max_abs_difference(direct) <= 1e-9 * max(1.0, abs(direct.scalar_part))


def test_supertrace_is_cyclic(souls):
    rng = np.random.default_rng(3)
    X = random_supermatrix(souls, 2, 1, rng)
    Y = random_supermatrix(souls, 2, 1, rng)
    assert supertrace(X @ Y).allclose(supertrace(Y @ X), atol=1e-12)


def test_identity_has_unit_superdeterminant(souls):
    assert superdeterminant(SuperMatrix.identity(souls, 2, 2)).allclose(souls.scalar(1.0))


def test_scalar_superdeterminant_is_ratio_of_determinants(souls):
    bb = np.array([[2.0, 0.5], [0.1, 1.0]])
    ff = np.array([[3.0]])
    Q = SuperMatrix.from_blocks(souls, bb, None, None, ff)
    assert complex(superdeterminant(Q).scalar_part) == pytest.approx(np.linalg.det(bb) / 3.0)


def test_even_matrix_inverse_and_det(souls):
    rng = np.random.default_rng(5)
    M = random_supermatrix(souls, 3, 1, rng).bb
    product = M @ even_matrix_inverse(M)
    assert product.max_abs_difference(GrassmannMatrix.identity(souls, 3)) <= 1e-12
    det = even_matrix_det(M)
    assert complex(det.scalar_part) == pytest.approx(np.linalg.det(M.body()))


def test_parity_violation_is_rejected(souls):
    odd = souls.generator('a1')
    with pytest.raises(InvalidInput):
        SuperMatrix.from_blocks(souls, [[odd]], None, None, [[souls.scalar(1.0)]])
    with pytest.raises(InvalidInput):
        SuperMatrix.from_blocks(souls, [[1.0]], [[souls.scalar(1.0)]], None, [[1.0]])


def test_singular_boson_block_is_a_construction_error(souls):
    Q = SuperMatrix.from_blocks(souls, [[0.0]], None, None, [[1.0]])
    with pytest.raises(ConstructionError):
        superdeterminant(Q)


def test_gaussian_superintegral_inverts_the_superdeterminant():
    generators = GeneratorSet(['a1', 'a2', 'psibar1', 'psi1'])
    a1, a2 = generators.generator('a1'), generators.generator('a2')
    A = np.array([[2.0 + 0.5j]])
    B = GrassmannMatrix(generators, [[a1.scale(0.3) + a2.scale(0.2)]])
    C = GrassmannMatrix(generators, [[a1.scale(0.5) - a2.scale(0.1j)]])
    D = GrassmannMatrix(generators, [[generators.scalar(1.5) + generators.monomial(['a1', 'a2'], 0.4)]])
    integral = gaussian_superintegral(A, B, C, D, [('psibar1', 'psi1')])
    Q = SuperMatrix(generators, GrassmannMatrix.from_array(generators, A), B, C, D)
    assert (integral * superdeterminant(Q)).allclose(generators.scalar(1.0), atol=1e-13)


def test_gaussian_superintegral_needs_positive_boson_block():
    generators = GeneratorSet(['psibar1', 'psi1'])
    zero = GrassmannMatrix.zeros(generators, 1, 1)
    with pytest.raises(InvalidInput):
        gaussian_superintegral(np.array([[-1.0]]), zero, zero, np.array([[1.0]]), [('psibar1', 'psi1')])
