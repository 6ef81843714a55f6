"""
Finite Grassmann algebra over complex coefficients with Berezin integration.

Monomials are bitsets over an ordered GeneratorSet: bit k set means generator k
is present, and a monomial is always stored with its generators in creation
order. Coefficients are complex scalars or complex numpy arrays of a common
shape; a batch of arrays behaves exactly like a loop over scalar elements.

Berezin convention: for a pair (psibar, psi) the integral is the left
derivative d/dpsibar applied after d/dpsi. With this order
int exp(-a psibar psi) = a, and int exp(-(psibar, A psi)) = Det A.
"""

import logging
import math
from functools import lru_cache
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from app.exceptions import CapacityError, InvalidInput

logger = logging.getLogger(__name__)

CAPACITY = 24

Coefficient = Union[complex, np.ndarray]


@lru_cache(maxsize=1 << 16)
def _product_sign(a: int, b: int) -> int:
    """Sign of reordering monomial a followed by monomial b into creation order"""
    swaps = 0
    rest = b
    while rest:
        low = rest & -rest
        swaps += bin(a >> low.bit_length()).count('1')
        rest ^= low
    return -1 if swaps & 1 else 1


def _popcount(mask: int) -> int:
    return bin(mask).count('1')


def _is_zero(coef) -> bool:
    if isinstance(coef, np.ndarray):
        return not np.any(coef)
    return coef == 0


class GeneratorSet:
    """Ordered, immutable set of anticommuting generator names"""

    def __init__(self, names: Sequence[str]):
        names = tuple(str(name) for name in names)
        if len(set(names)) != len(names):
            raise InvalidInput(f"generator names must be distinct: {names}")
        if len(names) > CAPACITY:
            raise CapacityError(f"{len(names)} generators requested, capacity is {CAPACITY}")
        self.names = names
        self._index = {name: k for k, name in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __eq__(self, other):
        return isinstance(other, GeneratorSet) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"GeneratorSet({list(self.names)})"

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InvalidInput(f"unknown generator '{name}'")

    def mask(self, names: Iterable[str]) -> int:
        mask = 0
        for name in names:
            mask |= 1 << self.index(name)
        return mask

    def generator(self, name: str) -> 'GrassmannElement':
        return GrassmannElement(self, {1 << self.index(name): 1.0 + 0j})

    def monomial(self, names: Sequence[str], coef: Coefficient = 1.0) -> 'GrassmannElement':
        """coef * names[0] names[1] ... in the given (not necessarily creation) order"""
        result = self.scalar(coef)
        for name in names:
            result = result * self.generator(name)
        return result

    def scalar(self, value: Coefficient) -> 'GrassmannElement':
        return GrassmannElement(self, {0: value})

    def zero(self) -> 'GrassmannElement':
        return GrassmannElement(self, {})

    def names_of(self, mask: int) -> List[str]:
        return [name for k, name in enumerate(self.names) if mask >> k & 1]


class GrassmannElement:
    """
    Immutable sparse element of the Grassmann algebra generated by `generators`.
    Terms map monomial bitsets to coefficients; zero coefficients are not stored.
    """

    __array_ufunc__ = None

    def __init__(self, generators: GeneratorSet, terms: Dict[int, Coefficient] = None):
        self.generators = generators
        clean = {}
        for mask, coef in (terms or {}).items():
            if mask >> len(generators):
                raise CapacityError(f"monomial {mask:#x} outside generator set of size {len(generators)}")
            if isinstance(coef, np.ndarray):
                coef = coef.astype(complex, copy=False)
            else:
                coef = complex(coef)
            if not _is_zero(coef):
                clean[mask] = coef
        self._terms = dict(sorted(clean.items()))

    @property
    def terms(self) -> Dict[int, Coefficient]:
        return dict(self._terms)

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __repr__(self):
        return f"GrassmannElement({self.to_text()!r})"

    def _check(self, other: 'GrassmannElement'):
        if other.generators != self.generators:
            raise InvalidInput("Grassmann elements belong to different generator sets")

    def _coerce(self, other) -> 'GrassmannElement':
        if isinstance(other, GrassmannElement):
            self._check(other)
            return other
        return self.generators.scalar(other)

    def coefficient(self, names: Sequence[str] = ()) -> Coefficient:
        """Coefficient of the monomial written in creation order"""
        return self._terms.get(self.generators.mask(names), 0j)

    @property
    def scalar_part(self) -> Coefficient:
        return self._terms.get(0, 0j)

    @property
    def nilpotent_part(self) -> 'GrassmannElement':
        return GrassmannElement(self.generators, {m: c for m, c in self._terms.items() if m})

    def grade_parts(self) -> Dict[int, 'GrassmannElement']:
        parts: Dict[int, Dict[int, Coefficient]] = {}
        for mask, coef in self._terms.items():
            parts.setdefault(_popcount(mask), {})[mask] = coef
        return {grade: GrassmannElement(self.generators, terms) for grade, terms in sorted(parts.items())}

    @property
    def is_even(self) -> bool:
        return all(_popcount(mask) % 2 == 0 for mask in self._terms)

    @property
    def is_odd(self) -> bool:
        return all(_popcount(mask) % 2 == 1 for mask in self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def __add__(self, other):
        other = self._coerce(other)
        terms = dict(self._terms)
        for mask, coef in other._terms.items():
            terms[mask] = terms[mask] + coef if mask in terms else coef
        return GrassmannElement(self.generators, terms)

    __radd__ = __add__

    def __neg__(self):
        return GrassmannElement(self.generators, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, factor: Coefficient) -> 'GrassmannElement':
        return GrassmannElement(self.generators, {m: c * factor for m, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, GrassmannElement):
            return product(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        # scalars and coefficient arrays are even
        return self.scale(other)

    def __truediv__(self, other):
        if isinstance(other, GrassmannElement):
            raise InvalidInput("division by a Grassmann element is not defined; use even_inverse")
        return self.scale(1.0 / other)

    def restrict(self, names: Iterable[str]) -> 'GrassmannElement':
        """Drop every term that contains one of `names`"""
        mask = self.generators.mask(names)
        return GrassmannElement(self.generators, {m: c for m, c in self._terms.items() if not m & mask})

    def max_abs_difference(self, other) -> float:
        other = self._coerce(other)
        masks = set(self._terms) | set(other._terms)
        worst = 0.0
        for mask in masks:
            diff = np.abs(self._terms.get(mask, 0j) - other._terms.get(mask, 0j))
            worst = max(worst, float(np.max(diff)))
        return worst

    def allclose(self, other, atol: float = 1e-12) -> bool:
        return self.max_abs_difference(other) <= atol

    def to_text(self) -> str:
        """One `coef * a^b` line per term, generators in creation order"""
        if not self._terms:
            return "0"
        lines = []
        for mask, coef in self._terms.items():
            name = '^'.join(self.generators.names_of(mask)) or '1'
            lines.append(f"{_format_coef(coef)} * {name}")
        return '\n'.join(lines)


def _format_coef(coef: Coefficient) -> str:
    if isinstance(coef, np.ndarray):
        return '[' + ', '.join(_format_coef(c) for c in coef.ravel()) + ']'
    return f"({coef.real:.17g}{coef.imag:+.17g}j)"


def product(a: GrassmannElement, b: GrassmannElement) -> GrassmannElement:
    """Grassmann product a*b"""
    a._check(b)
    terms: Dict[int, Coefficient] = {}
    for ma, ca in a._terms.items():
        for mb, cb in b._terms.items():
            if ma & mb:
                continue
            mask = ma | mb
            coef = ca * cb if _product_sign(ma, mb) > 0 else -(ca * cb)
            terms[mask] = terms[mask] + coef if mask in terms else coef
    return GrassmannElement(a.generators, terms)


def derivative(f: GrassmannElement, name: str) -> GrassmannElement:
    """Left derivative d/d(name)"""
    bit = 1 << f.generators.index(name)
    below = bit - 1
    terms = {}
    for mask, coef in f._terms.items():
        if mask & bit:
            terms[mask ^ bit] = -coef if _popcount(mask & below) % 2 else coef
    return GrassmannElement(f.generators, terms)


def berezin_integral(f: GrassmannElement, pairs: Sequence[Tuple[str, str]]) -> GrassmannElement:
    """
    Iterated Berezin integral over (psibar, psi) pairs, left to right.
    Each pair applies d/dpsi first, then d/dpsibar.
    """
    seen = set()
    for bar, psi in pairs:
        for name in (bar, psi):
            if name in seen:
                raise InvalidInput(f"generator '{name}' appears twice in the integration pairs")
            f.generators.index(name)
            seen.add(name)
    for bar, psi in pairs:
        f = derivative(derivative(f, psi), bar)
    return f


def fermion_pairs(n: int, prefix: str = 'psi') -> Tuple[GeneratorSet, List[Tuple[str, str]]]:
    """Generator set psibar1, psi1, psibar2, psi2, ... and its integration pairs"""
    pairs = [(f"{prefix}bar{a + 1}", f"{prefix}{a + 1}") for a in range(n)]
    return GeneratorSet([name for pair in pairs for name in pair]), pairs


def bilinear(generators: GeneratorSet, bars: Sequence[str], fields: Sequence[str], A) -> GrassmannElement:
    """sum_ab bars[a] A[a, b] fields[b]"""
    A = np.asarray(A)
    terms = {}
    for a, bar in enumerate(bars):
        for b, psi in enumerate(fields):
            coef = A[a, b]
            if bar == psi or _is_zero(coef):
                continue
            term = generators.monomial([bar, psi], coef)
            for mask, c in term:
                terms[mask] = terms[mask] + c if mask in terms else c
    return GrassmannElement(generators, terms)


def fermionic_gaussian(A) -> complex:
    """int exp(-(psibar, A psi)) over all pairs, which equals Det A"""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"fermionic_gaussian needs a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if 2 * n > CAPACITY:
        raise CapacityError(f"{n}x{n} Gaussian needs {2 * n} generators, capacity is {CAPACITY}")
    generators, pairs = fermion_pairs(n)
    bars = [bar for bar, _ in pairs]
    fields = [psi for _, psi in pairs]
    # each psibar_a A_ab psi_b is even and squares to zero, so the exponential
    # factorizes into a product of (1 - A_ab psibar_a psi_b)
    integrand = generators.scalar(1.0)
    for a in range(n):
        for b in range(n):
            if A[a, b] != 0:
                integrand = integrand * (1.0 - generators.monomial([bars[a], fields[b]], A[a, b]))
    return complex(berezin_integral(integrand, pairs).scalar_part)


def _series(nilpotent: GrassmannElement, coefficients) -> GrassmannElement:
    """sum_k coefficients(k) * nilpotent^k, stopping when the power vanishes"""
    generators = nilpotent.generators
    result = generators.scalar(coefficients(0))
    power = generators.scalar(1.0)
    k = 0
    while True:
        k += 1
        power = power * nilpotent
        if power.is_zero or k > len(generators):
            break
        result = result + power.scale(coefficients(k))
    return result


def even_exp(x: GrassmannElement) -> GrassmannElement:
    """exp of an even element: exp(scalar) * sum_k n^k / k! with n nilpotent"""
    if not x.is_even:
        raise InvalidInput("even_exp requires an even element")
    head = x.scalar_part
    tail = _series(x.nilpotent_part, lambda k: 1.0 / math.factorial(k))
    return tail.scale(np.exp(head))


def even_ln(x: GrassmannElement) -> GrassmannElement:
    """Principal log of the scalar part plus the terminating series of log(1 + n/x0)"""
    if not x.is_even:
        raise InvalidInput("even_ln requires an even element")
    head = x.scalar_part
    if np.any(np.asarray(head) == 0):
        raise InvalidInput("even_ln requires a nonzero scalar part")
    u = x.nilpotent_part.scale(1.0 / head)
    tail = _series(u, lambda k: 0.0 if k == 0 else (-1.0) ** (k + 1) / k)
    return tail + x.generators.scalar(np.log(head))


def even_inverse(x: GrassmannElement) -> GrassmannElement:
    """1/x for an element with invertible scalar part (geometric series)"""
    head = x.scalar_part
    if np.any(np.asarray(head) == 0):
        raise InvalidInput("element with zero scalar part is not invertible")
    u = x.nilpotent_part.scale(1.0 / head)
    return _series(u, lambda k: (-1.0) ** k).scale(1.0 / head)
