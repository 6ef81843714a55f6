"""
Grassmann algebra and Berezin integration
"""

from itertools import combinations

import numpy as np
import pytest

from app.core.grassmann import (CAPACITY, GeneratorSet, berezin_integral, bilinear, derivative, even_exp,
                                even_inverse, even_ln, fermion_pairs, fermionic_gaussian)
from app.exceptions import CapacityError, InvalidInput


@pytest.fixture
def theta():
    return GeneratorSet(['t1', 't2', 't3', 't4'])


def test_generators_anticommute_and_square_to_zero(theta):
    t1, t2 = theta.generator('t1'), theta.generator('t2')
    assert (t1 * t2 + t2 * t1).is_zero
    assert (t1 * t1).is_zero
    assert (t2 * t1).coefficient(['t1', 't2']) == -1


def test_even_elements_commute_with_odd(theta):
    even = theta.monomial(['t1', 't2'], 2.0) + 3.0
    odd = theta.generator('t3') + theta.generator('t4').scale(0.5j)
    assert (even * odd - odd * even).is_zero


def test_left_derivative_signs(theta):
    t12 = theta.monomial(['t1', 't2'])
    assert derivative(t12, 't1').allclose(theta.generator('t2'))
    assert derivative(t12, 't2').allclose(-theta.generator('t1'))
    assert derivative(theta.scalar(4.0), 't1').is_zero


def test_berezin_pair_normalization():
    generators, pairs = fermion_pairs(1)
    gaussian = 1.0 - generators.monomial(['psibar1', 'psi1'], 2.5)
    assert berezin_integral(gaussian, pairs).scalar_part == pytest.approx(2.5)


def test_berezin_rejects_repeated_generator():
    generators, pairs = fermion_pairs(2)
    with pytest.raises(InvalidInput):
        berezin_integral(generators.scalar(1.0), [pairs[0], pairs[0]])


@pytest.mark.parametrize('n', [1, 2, 3, 4, 5, 6])
def test_fermionic_gaussian_is_the_determinant(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(10):
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        expected = np.linalg.det(A)
        assert abs(fermionic_gaussian(A) - expected) <= 1e-11 * max(1.0, abs(expected))


def test_fermionic_gaussian_rejects_non_square():
    with pytest.raises(InvalidInput):
        fermionic_gaussian(np.ones((2, 3)))


def test_bilinear_matches_explicit_sum():
    generators, pairs = fermion_pairs(2)
    A = np.array([[1.0, 2.0], [0.5j, -1.0]])
    form = bilinear(generators, ['psibar1', 'psibar2'], ['psi1', 'psi2'], A)
    assert form.coefficient(['psibar1', 'psi2']) == 2.0
    assert form.coefficient(['psi1', 'psibar2']) == -0.5j
    assert form.is_even


def test_exp_and_ln_are_inverse(theta):
    x = theta.scalar(0.7 + 0.2j) + theta.monomial(['t1', 't2'], 0.3) + theta.monomial(['t3', 't4'], -1.1j) \
        + theta.monomial(['t1', 't2', 't3', 't4'], 0.25)
    assert even_ln(even_exp(x)).allclose(x, atol=1e-13)
    assert even_exp(even_ln(x)).allclose(x, atol=1e-13)


def test_even_inverse(theta):
    x = theta.scalar(2.0) + theta.monomial(['t1', 't3'], 0.4) + theta.monomial(['t2', 't4'], 1.5)
    assert (x * even_inverse(x)).allclose(theta.scalar(1.0), atol=1e-14)


def test_exp_of_odd_element_is_rejected(theta):
    with pytest.raises(InvalidInput):
        even_exp(theta.generator('t1'))


def test_zero_scalar_part_has_no_inverse(theta):
    with pytest.raises(InvalidInput):
        even_inverse(theta.monomial(['t1', 't2']))


def test_batched_coefficients_match_scalar_loop(theta):
    a = np.array([1.0, 2.0, -0.5j])
    b = np.array([0.3, -1.0, 4.0])
    x = theta.scalar(a) + theta.monomial(['t1', 't2'], b)
    y = theta.scalar(1.5) + theta.monomial(['t3', 't4'], a)
    batched = even_exp(x * y)
    for k in range(3):
        xk = theta.scalar(a[k]) + theta.monomial(['t1', 't2'], b[k])
        yk = theta.scalar(1.5) + theta.monomial(['t3', 't4'], a[k])
        scalar = even_exp(xk * yk)
        for mask, coef in scalar:
            assert np.isclose(batched.terms[mask][k], coef, rtol=1e-14, atol=0)


def test_capacity_is_enforced():
    with pytest.raises(CapacityError):
        GeneratorSet([f"g{k}" for k in range(CAPACITY + 1)])


def test_mixing_generator_sets_is_rejected(theta):
    other = GeneratorSet(['t1', 't2'])
    with pytest.raises(InvalidInput):
        theta.generator('t1') + other.generator('t1')


def test_text_form_lists_terms_in_creation_order(theta):
    x = theta.monomial(['t2', 't1'], 1.0) + 0.5
    assert x.to_text().splitlines() == ["(0.5+0j) * 1", "(-1+0j) * t1^t2"]


def random_element(generators, names, rng, num_terms=None):
    """Random complex combination of monomials in `names`"""
    subsets = [list(c) for k in range(len(names) + 1) for c in combinations(names, k)]
    if num_terms is not None:
        subsets = [subsets[i] for i in rng.choice(len(subsets), size=num_terms, replace=False)]
    element = generators.zero()
    for subset in subsets:
        element = element + generators.monomial(subset, complex(rng.standard_normal(), rng.standard_normal()))
    return element


def test_square_of_even_pair():
    generators = GeneratorSet(['psi1', 'psi2'])
    x = generators.scalar(1.0) + generators.monomial(['psi1', 'psi2'])
    assert (x * x).allclose(generators.scalar(1.0) + generators.monomial(['psi1', 'psi2'], 2.0), atol=0)


def test_berezin_integral_of_two_pairs():
    generators, pairs = fermion_pairs(2)
    f = generators.monomial(['psibar1', 'psi1', 'psibar2', 'psi2'])
    assert berezin_integral(f, pairs).allclose(generators.scalar(1.0), atol=0)


def test_product_is_associative():
    names = [f"g{k}" for k in range(12)]
    generators = GeneratorSet(names)
    rng = np.random.default_rng(21)
    for _ in range(5):
        a, b, c = (random_element(generators, names, rng, num_terms=20) for _ in range(3))
        assert ((a * b) * c).allclose(a * (b * c), atol=1e-12)


def test_berezin_integral_factorizes_over_disjoint_pairs():
    generators, pairs = fermion_pairs(3)
    rng = np.random.default_rng(22)
    for _ in range(5):
        f = random_element(generators, [name for pair in pairs[:2] for name in pair], rng)
        g = random_element(generators, list(pairs[2]), rng)
        joint = berezin_integral(f * g, pairs).scalar_part
        split = berezin_integral(f, pairs[:2]).scalar_part * berezin_integral(g, pairs[2:]).scalar_part
        assert np.isclose(joint, split, rtol=1e-12, atol=1e-12)
