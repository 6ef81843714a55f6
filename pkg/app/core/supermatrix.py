"""
Supermatrices over the Grassmann algebra: supertrace, superdeterminant,
logarithm and the Gaussian superintegral.

Entries are GrassmannElements with scalar coefficients. Boson-boson and
fermion-fermion blocks hold even elements, the off-diagonal blocks odd ones.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.grassmann import (GeneratorSet, GrassmannElement, berezin_integral, even_exp, even_inverse,
                                _product_sign)
from app.exceptions import CapacityError, ConstructionError, InvalidInput

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-14
REGULAR_CAPACITY = 10


class GrassmannMatrix:
    """Dense matrix of GrassmannElements sharing one GeneratorSet"""

    def __init__(self, generators: GeneratorSet, rows: Sequence[Sequence]):
        self.generators = generators
        self.rows: List[List[GrassmannElement]] = [
            [entry if isinstance(entry, GrassmannElement) else generators.scalar(entry) for entry in row]
            for row in rows
        ]
        widths = {len(row) for row in self.rows}
        if len(widths) > 1:
            raise InvalidInput("ragged Grassmann matrix")

    @classmethod
    def from_array(cls, generators: GeneratorSet, array) -> 'GrassmannMatrix':
        array = np.atleast_2d(np.asarray(array, dtype=complex))
        return cls(generators, array.tolist())

    @classmethod
    def zeros(cls, generators: GeneratorSet, n_rows: int, n_cols: int) -> 'GrassmannMatrix':
        return cls(generators, [[generators.zero() for _ in range(n_cols)] for _ in range(n_rows)])

    @classmethod
    def identity(cls, generators: GeneratorSet, n: int) -> 'GrassmannMatrix':
        return cls.from_array(generators, np.eye(n)) if n else cls.zeros(generators, 0, 0)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.rows), (len(self.rows[0]) if self.rows else 0)

    def __getitem__(self, index):
        i, j = index
        return self.rows[i][j]

    def __add__(self, other: 'GrassmannMatrix') -> 'GrassmannMatrix':
        self._same_shape(other)
        return GrassmannMatrix(self.generators, [[a + b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)])

    def __sub__(self, other: 'GrassmannMatrix') -> 'GrassmannMatrix':
        self._same_shape(other)
        return GrassmannMatrix(self.generators, [[a - b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)])

    def __neg__(self):
        return GrassmannMatrix(self.generators, [[-a for a in row] for row in self.rows])

    def scale(self, factor) -> 'GrassmannMatrix':
        return GrassmannMatrix(self.generators, [[a.scale(factor) for a in row] for row in self.rows])

    def __matmul__(self, other: 'GrassmannMatrix') -> 'GrassmannMatrix':
        n, k = self.shape
        k2, m = other.shape
        if k != k2:
            raise InvalidInput(f"cannot multiply {self.shape} by {other.shape}")
        out = []
        for i in range(n):
            row = []
            for j in range(m):
                acc = self.generators.zero()
                for l in range(k):
                    acc = acc + self.rows[i][l] * other.rows[l][j]
                row.append(acc)
            out.append(row)
        return GrassmannMatrix(self.generators, out)

    def _same_shape(self, other):
        if self.shape != other.shape:
            raise InvalidInput(f"shape mismatch {self.shape} vs {other.shape}")

    def body(self) -> np.ndarray:
        """Scalar parts as a complex array"""
        n, m = self.shape
        return np.array([[complex(self.rows[i][j].scalar_part) for j in range(m)] for i in range(n)],
                        dtype=complex).reshape(n, m)

    def soul(self) -> 'GrassmannMatrix':
        return GrassmannMatrix(self.generators, [[a.nilpotent_part for a in row] for row in self.rows])

    def trace(self) -> GrassmannElement:
        acc = self.generators.zero()
        for k in range(min(self.shape)):
            acc = acc + self.rows[k][k]
        return acc

    def is_zero(self) -> bool:
        return all(a.is_zero for row in self.rows for a in row)

    def all_even(self) -> bool:
        return all(a.is_even for row in self.rows for a in row)

    def all_odd(self) -> bool:
        return all(a.is_odd for row in self.rows for a in row)

    def max_abs_difference(self, other: 'GrassmannMatrix') -> float:
        self._same_shape(other)
        return max((a.max_abs_difference(b) for ra, rb in zip(self.rows, other.rows) for a, b in zip(ra, rb)),
                   default=0.0)


def _check_body_invertible(body: np.ndarray, what: str):
    if body.size == 0:
        return
    scale = max(1.0, float(np.abs(body).max()))
    if abs(np.linalg.det(body)) <= SINGULAR_TOL * scale ** body.shape[0]:
        raise ConstructionError(f"{what} has a singular scalar part")


def even_matrix_inverse(M: GrassmannMatrix) -> GrassmannMatrix:
    """
    Inverse of a square even matrix: with M = B(1 + B^-1 S) the series
    sum_k (-B^-1 S)^k B^-1 terminates because S is nilpotent.
    """
    n, m = M.shape
    if n != m:
        raise InvalidInput("inverse of a non-square matrix")
    if n == 0:
        return M
    body = M.body()
    _check_body_invertible(body, "matrix")
    body_inv = GrassmannMatrix.from_array(M.generators, np.linalg.inv(body))
    step = -(body_inv @ M.soul())
    result = body_inv
    power = body_inv
    for _ in range(len(M.generators) + 1):
        power = step @ power
        if power.is_zero():
            break
        result = result + power
    return result


def even_matrix_det(M: GrassmannMatrix) -> GrassmannElement:
    """Det of an even matrix: det(B) exp(Tr log(1 + B^-1 S)), series terminating"""
    n, m = M.shape
    if n != m:
        raise InvalidInput("determinant of a non-square matrix")
    if not M.all_even():
        raise InvalidInput("determinant needs even entries")
    if n == 0:
        return M.generators.scalar(1.0)
    body = M.body()
    _check_body_invertible(body, "matrix")
    X = GrassmannMatrix.from_array(M.generators, np.linalg.inv(body)) @ M.soul()
    log_tail = M.generators.zero()
    power = GrassmannMatrix.identity(M.generators, n)
    for k in range(1, len(M.generators) + 2):
        power = power @ X
        if power.is_zero():
            break
        log_tail = log_tail + power.trace().scale((-1.0) ** (k + 1) / k)
    return even_exp(log_tail).scale(np.linalg.det(body))


@dataclass
class SuperMatrix:
    """(p+q) x (p+q) supermatrix [[bb, bf], [fb, ff]]"""
    generators: GeneratorSet
    bb: GrassmannMatrix
    bf: GrassmannMatrix
    fb: GrassmannMatrix
    ff: GrassmannMatrix

    def __post_init__(self):
        p, p2 = self.bb.shape
        q, q2 = self.ff.shape
        if p != p2 or q != q2:
            raise InvalidInput("diagonal blocks must be square")
        if self.bf.shape not in ((p, q), (0, 0)) or self.fb.shape not in ((q, p), (0, 0)):
            raise InvalidInput(f"odd blocks must be {p}x{q} and {q}x{p}")
        if self.bf.shape == (0, 0):
            self.bf = GrassmannMatrix.zeros(self.generators, p, q)
        if self.fb.shape == (0, 0):
            self.fb = GrassmannMatrix.zeros(self.generators, q, p)
        if not (self.bb.all_even() and self.ff.all_even()):
            raise InvalidInput("parity violation: diagonal blocks must be even")
        if not (self.bf.all_odd() and self.fb.all_odd()):
            raise InvalidInput("parity violation: off-diagonal blocks must be odd")

    @classmethod
    def from_blocks(cls, generators: GeneratorSet, bb, bf, fb, ff) -> 'SuperMatrix':
        def wrap(block, n_rows, n_cols):
            if isinstance(block, GrassmannMatrix):
                return block
            if block is None:
                return GrassmannMatrix.zeros(generators, n_rows, n_cols)
            rows = [list(row) for row in block]
            if rows and rows[0] and not isinstance(rows[0][0], GrassmannElement):
                return GrassmannMatrix.from_array(generators, rows)
            return GrassmannMatrix(generators, rows)

        p = len(bb)
        q = len(ff)
        return cls(generators, wrap(bb, p, p), wrap(bf, p, q), wrap(fb, q, p), wrap(ff, q, q))

    @classmethod
    def identity(cls, generators: GeneratorSet, p: int, q: int) -> 'SuperMatrix':
        return cls(generators, GrassmannMatrix.identity(generators, p), GrassmannMatrix.zeros(generators, p, q),
                   GrassmannMatrix.zeros(generators, q, p), GrassmannMatrix.identity(generators, q))

    @property
    def p(self) -> int:
        return self.bb.shape[0]

    @property
    def q(self) -> int:
        return self.ff.shape[0]

    def full(self) -> GrassmannMatrix:
        rows = [ra + rb for ra, rb in zip(self.bb.rows, self.bf.rows)]
        rows += [ra + rb for ra, rb in zip(self.fb.rows, self.ff.rows)]
        return GrassmannMatrix(self.generators, rows)

    @classmethod
    def from_full(cls, generators: GeneratorSet, full: GrassmannMatrix, p: int) -> 'SuperMatrix':
        rows = full.rows
        return cls(generators,
                   GrassmannMatrix(generators, [row[:p] for row in rows[:p]]),
                   GrassmannMatrix(generators, [row[p:] for row in rows[:p]]),
                   GrassmannMatrix(generators, [row[:p] for row in rows[p:]]),
                   GrassmannMatrix(generators, [row[p:] for row in rows[p:]]))

    def __matmul__(self, other: 'SuperMatrix') -> 'SuperMatrix':
        return supermatrix_product(self, other)

    def __sub__(self, other: 'SuperMatrix') -> 'SuperMatrix':
        return SuperMatrix(self.generators, self.bb - other.bb, self.bf - other.bf,
                           self.fb - other.fb, self.ff - other.ff)


def supermatrix_product(a: SuperMatrix, b: SuperMatrix) -> SuperMatrix:
    return SuperMatrix(a.generators,
                       a.bb @ b.bb + a.bf @ b.fb,
                       a.bb @ b.bf + a.bf @ b.ff,
                       a.fb @ b.bb + a.ff @ b.fb,
                       a.fb @ b.bf + a.ff @ b.ff)


def supertrace(Q: SuperMatrix) -> GrassmannElement:
    """STr Q = Tr Q_BB - Tr Q_FF"""
    return Q.bb.trace() - Q.ff.trace()


def superdeterminant(Q: SuperMatrix) -> GrassmannElement:
    """SDet Q = Det(Q_BB) / Det(Q_FF - Q_FB Q_BB^-1 Q_BF)"""
    try:
        bb_inv = even_matrix_inverse(Q.bb)
    except ConstructionError:
        raise ConstructionError("superdeterminant: Q_BB is singular")
    schur = Q.ff - Q.fb @ bb_inv @ Q.bf
    try:
        schur_det = even_matrix_det(schur)
    except ConstructionError:
        raise ConstructionError("superdeterminant: Schur complement is singular")
    return even_matrix_det(Q.bb) * even_inverse(schur_det)


def left_regular(x: GrassmannElement) -> np.ndarray:
    """Matrix of left multiplication by x on the 2^g dimensional algebra"""
    g = len(x.generators)
    if g > REGULAR_CAPACITY:
        raise CapacityError(f"regular representation limited to {REGULAR_CAPACITY} generators, got {g}")
    size = 1 << g
    L = np.zeros((size, size), dtype=complex)
    for mx, coef in x:
        for m in range(size):
            if mx & m:
                continue
            L[mx | m, m] += _product_sign(mx, m) * coef
    return L


def _from_vector(generators: GeneratorSet, vector: np.ndarray, tol: float = 0.0, parity: int = None) -> GrassmannElement:
    """Element with coefficients `vector`; with `parity` set, only monomials of that grade parity are kept"""
    return GrassmannElement(generators, {m: c for m, c in enumerate(vector)
                                         if abs(c) > tol and (parity is None or bin(m).count('1') % 2 == parity)})


def regular_representation(M: GrassmannMatrix) -> np.ndarray:
    n, m = M.shape
    size = 1 << len(M.generators)
    R = np.zeros((n * size, m * size), dtype=complex)
    for i in range(n):
        for j in range(m):
            R[i * size:(i + 1) * size, j * size:(j + 1) * size] = left_regular(M[i, j])
    return R


def supermatrix_log(Q: SuperMatrix, tol: float = 1e-14) -> SuperMatrix:
    """
    Principal logarithm of Q. The algebra homomorphism to complex matrices
    (left-regular representation) commutes with the matrix logarithm, so ln Q
    is read off from logm of the represented matrix.
    """
    full = Q.full()
    d = full.shape[0]
    body = full.body()
    _check_body_invertible(body, "supermatrix")
    eigenvalues = np.linalg.eigvals(body)
    if np.any(np.isclose(eigenvalues.imag, 0.0) & (eigenvalues.real < 0)):
        logger.warning("supermatrix_log: body has eigenvalues on the negative real axis")
    size = 1 << len(Q.generators)
    L = linalg.logm(regular_representation(full))
    # blocks keep their parity: even on the diagonal blocks, odd off them
    rows = [[_from_vector(Q.generators, L[i * size:(i + 1) * size, j * size], tol, int((i < Q.p) != (j < Q.p)))
             for j in range(d)] for i in range(d)]
    return SuperMatrix.from_full(Q.generators, GrassmannMatrix(Q.generators, rows), Q.p)


def gaussian_superintegral(A, B: GrassmannMatrix, C: GrassmannMatrix, D,
                           pairs: Sequence[Tuple[str, str]]) -> GrassmannElement:
    """
    int exp(-(phibar, A phi) - (phibar, B psi) - (psibar, C phi) - (psibar, D psi))
    with the flat normalized measure for phi and Berezin integration for psi.

    The phi integral is Gaussian with nilpotent sources: shifting phi leaves
    Det(A)^-1 exp((psibar, C A^-1 B psi)). The remaining psi integral is
    done by Berezin over `pairs`, the (psibar_k, psi_k) names of the fields.
    """
    generators = B.generators
    A = np.asarray(A, dtype=complex)
    hermitian_part = 0.5 * (A + A.conj().T)
    if np.linalg.eigvalsh(hermitian_part).min() <= 0:
        raise InvalidInput("gaussian_superintegral needs Re A positive definite")
    if not isinstance(D, GrassmannMatrix):
        D = GrassmannMatrix.from_array(generators, D)
    p = A.shape[0]
    q = D.shape[0]
    if B.shape != (p, q) or C.shape != (q, p) or len(pairs) != q:
        raise InvalidInput("inconsistent block dimensions for gaussian_superintegral")
    if not (B.all_odd() and C.all_odd()):
        raise InvalidInput("coupling blocks must be odd")
    A_inv = GrassmannMatrix.from_array(generators, np.linalg.inv(A))
    effective = D - C @ A_inv @ B

    bars = [bar for bar, _ in pairs]
    fields = [psi for _, psi in pairs]
    integrand = generators.scalar(1.0)
    # psibar_a M_ab psi_b with even M_ab squares to zero and commutes with the rest
    for a in range(q):
        for b in range(q):
            entry = effective[a, b]
            if entry.is_zero:
                continue
            term = generators.generator(bars[a]) * entry * generators.generator(fields[b])
            integrand = integrand * (1.0 - term)
    return berezin_integral(integrand, pairs).scale(1.0 / np.linalg.det(A))


def random_supermatrix(generators: GeneratorSet, p: int, q: int, rng: np.random.Generator,
                       soul_scale: float = 0.5) -> SuperMatrix:
    """
    Parity-correct fixture: bodies near the identity with random complex
    perturbations, even souls from pairs of generators and odd blocks from
    single generators.
    """
    names = generators.names

    def complex_normal(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    def even_entry(body):
        entry = generators.scalar(body)
        for a in range(len(names)):
            for b in range(a + 1, len(names)):
                entry = entry + generators.monomial([names[a], names[b]], soul_scale * complex_normal())
        return entry

    def odd_entry():
        entry = generators.zero()
        for name in names:
            entry = entry + generators.generator(name).scale(soul_scale * complex_normal())
        return entry

    def even_block(n):
        body = np.eye(n) + 0.3 * complex_normal(n, n)
        return GrassmannMatrix(generators, [[even_entry(body[i, j]) for j in range(n)] for i in range(n)])

    def odd_block(n, m):
        return GrassmannMatrix(generators, [[odd_entry() for _ in range(m)] for _ in range(n)])

    return SuperMatrix(generators, even_block(p), odd_block(p, q), odd_block(q, p), even_block(q))
