"""Prime-field arithmetic and dense linear algebra over GF(q).

Scalars are plain ``int`` values in ``[0, q)``; matrices and vectors are
``numpy`` int64 arrays whose entries are always stored reduced.  The
``FieldElement`` wrapper exists for callers that want operator syntax and
modulus checking; the hot paths work on raw ints and arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import SingularMatrixError, UsageError

DEFAULT_MODULUS = 65537

# Miller-Rabin with these bases is exact for n < 2_152_302_898_747.
_MR_BASES = (2, 3, 5, 7, 11)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _MR_BASES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldElement:
    """A canonical element of GF(q)."""

    value: int
    q: int

    def __post_init__(self):
        if not 0 <= self.value < self.q:
            raise UsageError(f"{self.value} is not reduced modulo {self.q}")

    def _coerce(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.q != self.q:
                raise UsageError(
                    f"cannot mix elements of GF({self.q}) and GF({other.q})"
                )
            return other.value
        if isinstance(other, (int, np.integer)):
            return int(other) % self.q
        return NotImplemented

    def __add__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement((self.value + b) % self.q, self.q)

    __radd__ = __add__

    def __sub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement((self.value - b) % self.q, self.q)

    def __rsub__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement((b - self.value) % self.q, self.q)

    def __mul__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return FieldElement(self.value * b % self.q, self.q)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(-self.value % self.q, self.q)

    def inv(self) -> FieldElement:
        if self.value == 0:
            raise ZeroDivisionError("zero has no inverse")
        return FieldElement(pow(self.value, -1, self.q), self.q)

    def __truediv__(self, other):
        b = self._coerce(other)
        if b is NotImplemented:
            return b
        return self * FieldElement(b, self.q).inv()

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"{self.value} (mod {self.q})"


class PrimeField:
    """GF(q) for a prime ``q < 2**32``.

    Instances are cheap but immutable; use :func:`get_field` to share them.
    """

    def __init__(self, q: int = DEFAULT_MODULUS):
        q = int(q)
        if q >= 2**32:
            raise UsageError(f"modulus {q} exceeds the supported range (< 2^32)")
        if not is_prime(q):
            raise UsageError(f"modulus {q} is not prime")
        self.q = q
        # int64 matmul is exact while inner_dim * (q-1)^2 fits in 63 bits.
        self._int64_inner_limit = (2**63 - 1) // ((q - 1) ** 2 or 1)

    def __repr__(self):
        return f"PrimeField({self.q})"

    def __eq__(self, other):
        return isinstance(other, PrimeField) and other.q == self.q

    def __hash__(self):
        return hash(("PrimeField", self.q))

    def __call__(self, value: int) -> FieldElement:
        return FieldElement(int(value) % self.q, self.q)

    # -- scalars ---------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.q

    def mul(self, a: int, b: int) -> int:
        return a * b % self.q

    def neg(self, a: int) -> int:
        return -a % self.q

    def inv(self, a: int) -> int:
        a %= self.q
        if a == 0:
            raise ZeroDivisionError(f"0 has no inverse in GF({self.q})")
        return pow(a, -1, self.q)

    # -- arrays ----------------------------------------------------------

    def array(self, values) -> np.ndarray:
        """Reduce ``values`` into a canonical int64 array."""
        arr = np.asarray(values)
        if arr.dtype.kind not in "iuO":
            raise UsageError(f"field entries must be integers, got dtype {arr.dtype}")
        return np.mod(arr, self.q).astype(np.int64)

    def random(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.int64)

    def matmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        inner = a.shape[-1] if a.ndim else 1
        if inner <= self._int64_inner_limit:
            return (a @ b) % self.q
        prod = a.astype(object) @ b.astype(object)
        return (prod % self.q).astype(np.int64)

    def identity(self, n: int) -> np.ndarray:
        return np.eye(n, dtype=np.int64)

    def vandermonde(self, points, rows: int) -> np.ndarray:
        """``rows x len(points)`` matrix whose row ``i`` holds ``x**i``."""
        pts = [int(x) % self.q for x in points]
        out = np.empty((rows, len(pts)), dtype=np.int64)
        for j, x in enumerate(pts):
            v = 1
            for i in range(rows):
                out[i, j] = v
                v = v * x % self.q
        return out

    # -- elimination -----------------------------------------------------

    def _row_reduce(self, m: list[list[int]], ncols: int) -> list[int]:
        """In-place reduced row echelon form over the first ``ncols`` columns.

        Returns the pivot columns.  First-nonzero pivoting is exact here.
        """
        q = self.q
        rows = len(m)
        pivots = []
        r = 0
        for col in range(ncols):
            if r == rows:
                break
            piv = next((i for i in range(r, rows) if m[i][col]), None)
            if piv is None:
                continue
            m[r], m[piv] = m[piv], m[r]
            inv = pow(m[r][col], -1, q)
            m[r] = [x * inv % q for x in m[r]]
            pivot_row = m[r]
            for i in range(rows):
                f = m[i][col]
                if i != r and f:
                    m[i] = [(x - f * y) % q for x, y in zip(m[i], pivot_row)]
            pivots.append(col)
            r += 1
        return pivots

    def rank(self, a: np.ndarray) -> int:
        m = [[int(x) for x in row] for row in np.asarray(a)]
        if not m:
            return 0
        return len(self._row_reduce(m, len(m[0])))

    def solve(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Solve ``a @ x = b``; ``b`` may be a vector or a matrix of columns."""
        a = np.asarray(a)
        b = np.asarray(b)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise UsageError(f"solve needs a square matrix, got shape {a.shape}")
        n = a.shape[0]
        vec = b.ndim == 1
        rhs = b.reshape(n, -1) if n else b.reshape(0, -1)
        if rhs.shape[0] != n:
            raise UsageError(f"right-hand side has {rhs.shape[0]} rows, expected {n}")
        width = rhs.shape[1]
        m = [
            [int(x) % self.q for x in a[i]] + [int(x) % self.q for x in rhs[i]]
            for i in range(n)
        ]
        pivots = self._row_reduce(m, n)
        if len(pivots) < n:
            raise SingularMatrixError(f"{n}x{n} matrix is singular over GF({self.q})")
        x = np.array([row[n:] for row in m], dtype=np.int64).reshape(n, width)
        return x.reshape(n) if vec else x

    def inverse(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        return self.solve(a, self.identity(a.shape[0]))


@lru_cache(maxsize=None)
def get_field(q: int = DEFAULT_MODULUS) -> PrimeField:
    return PrimeField(q)


def solve_linear(a: np.ndarray, b: np.ndarray, q: int = DEFAULT_MODULUS) -> np.ndarray:
    """Solve ``a @ x = b`` over GF(q).

    Raises :class:`SingularMatrixError` when ``a`` is not invertible.
    """
    return get_field(q).solve(a, b)
