"""Closed-form loads, k-sum accounting and converse bounds.

Loads are downloaded symbols per decoded symbol.  In the high-request regime
(``2P >= K - M``) everything is an exact :class:`~fractions.Fraction`.  The
low-request accounting involves ``r = 1 / (N**(1/P) - 1)``, which is
irrational unless ``N`` is a perfect ``P``-th power; those values are
``mpmath.mpf`` numbers computed at :data:`WORKING_DPS` significant digits.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from math import comb, floor
from typing import Callable, Iterable, Union

import mpmath

from .errors import UsageError

HIGH = "high_p"
LOW = "low_p"

WORKING_DPS = 60
LOW_TOLERANCE = 1e-9

Number = Union[Fraction, mpmath.mpf]

CSV_COLUMNS = ("N", "K", "P", "M", "regime", "achievable", "converse", "optimal", "identity_ok")


def _validate(N: int, K: int, P: int, M: int) -> None:
    if N < 2:
        raise UsageError(f"need N >= 2, got {N}")
    if P < 1:
        raise UsageError(f"need P >= 1, got {P}")
    if M < 0:
        raise UsageError(f"need M >= 0, got {M}")
    if P + M > K:
        raise UsageError(f"P + M = {P + M} exceeds K = {K}")


def as_mpf(x: Number) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    return mpmath.mpf(x)


def regime_of(K: int, P: int, M: int = 0) -> str:
    """``HIGH`` when ``2P >= K - M`` (the boundary counts as high)."""
    return HIGH if 2 * P >= K - M else LOW


def in_theorem_regime(N: int, K: int, P: int, M: int) -> bool:
    """True where the optimal load is known in closed form."""
    _validate(N, K, P, M)
    return 2 * P >= K - M or (K - M) % P == 0


def dpsi(N: int, K: int, P: int, M: int) -> Fraction | None:
    """Optimal load, or ``None`` where the capacity is not known.

    ``None`` is returned for ``2P < K - M`` with ``(K - M) / P`` not an
    integer.
    """
    _validate(N, K, P, M)
    if 2 * P >= K - M:
        return 1 + Fraction(K - M - P, P * N)
    if (K - M) % P == 0:
        ratio = (K - M) // P
        return (1 - Fraction(1, N) ** ratio) / (1 - Fraction(1, N))
    return None


def dpsi_equiv_check(N: int, K: int, P: int, M: int) -> bool:
    """Side information of size M acts like removing M files from the library."""
    with_side = dpsi(N, K, P, M)
    reduced = dpsi(N, K - M, P, 0)
    return with_side is not None and with_side == reduced


# -- k-sum accounting ---------------------------------------------------------


def _integer_root(n: int, k: int) -> int | None:
    root = round(n ** (1.0 / k))
    for cand in (root - 1, root, root + 1):
        if cand > 0 and cand**k == n:
            return cand
    return None


def low_ratio(N: int, P: int) -> Number:
    """``r`` with ``(1 + 1/r)**K = N**(K/P)``, i.e. ``r = 1/(N**(1/P) - 1)``.

    Exact when ``N`` is a perfect ``P``-th power.
    """
    root = _integer_root(N, P)
    if root is not None:
        return Fraction(1, root - 1)
    with mpmath.workdps(WORKING_DPS):
        return 1 / (mpmath.root(mpmath.mpf(N), P) - 1)


@dataclass(frozen=True)
class RegimeCoefficients:
    """Block structure of the underlying linear scheme without side information.

    ``weight(k)`` is the number of chunk-equations contributed per type of
    ``k``-sum; it equals ``alpha(k) * beta(k)`` except that a one-file library
    (``K == 1``) collapses the single-chunk and all-file blocks into one.
    ``chunk_norm`` is the chunk size in units of ``L``.
    """

    N: int
    K: int
    P: int
    regime: str
    alpha: Callable[[int], Number]
    beta: Callable[[int], Number]
    weight: Callable[[int], Number]
    chunk_norm: Number
    r: Number | None = None


def coefficients(N: int, K: int, P: int, regime: str) -> RegimeCoefficients:
    if regime == HIGH:

        def alpha(k):
            return 1 if k == 1 else (N - 1 if k == K else 0)

        def beta(k):
            return 1 if k == 1 else (P if k == K else 0)

        def weight(k):
            return (1 if k == 1 else 0) + ((N - 1) * P if k == K else 0)

        return RegimeCoefficients(N, K, P, HIGH, alpha, beta, weight, Fraction(1, N * N))

    if regime != LOW:
        raise UsageError(f"unknown regime {regime!r}")
    r = low_ratio(N, P)
    exact = isinstance(r, Fraction)

    def alpha(k):
        # The aggregate of the per-root weights cancels in every ratio; it is 1 here.
        if exact:
            return r ** (K - P - k)
        with mpmath.workdps(WORKING_DPS):
            return r ** (K - P - k)

    def beta(k):
        return 1

    with mpmath.workdps(WORKING_DPS):
        useful = sum(comb(K, k) * alpha(k) for k in range(1, K + 1)) - sum(
            comb(K - P, k) * alpha(k) for k in range(1, K - P + 1)
        )
        chunk_norm = Fraction(P, N) / useful if exact else mpmath.mpf(P) / N / useful
    return RegimeCoefficients(N, K, P, LOW, alpha, beta, alpha, chunk_norm, r)


def _check_regime(K: int, P: int, M: int, regime: str) -> None:
    if regime == HIGH and 2 * P < K - M:
        raise UsageError(f"high-request accounting needs 2P >= K - M (P={P}, K-M={K - M})")
    if regime == LOW and 2 * P > K - M:
        raise UsageError(f"low-request accounting needs 2P <= K - M (P={P}, K-M={K - M})")


def accounting_p(N: int, K: int, P: int, regime: str | None = None) -> Number:
    """Symbols each server sends without side information, in units of ``L``."""
    if P > K or P < 1:
        raise UsageError(f"need 1 <= P <= K, got P={P}, K={K}")
    regime = regime or regime_of(K, P)
    co = coefficients(N, K, P, regime)
    with mpmath.workdps(WORKING_DPS):
        return co.chunk_norm * sum(comb(K, k) * co.weight(k) for k in range(1, K + 1))


def accounting_q(N: int, K: int, M: int, P: int, regime: str | None = None) -> Number:
    """Symbols per server the user can rebuild from ``M`` side files, in units of ``L``."""
    if not 0 <= M <= K:
        raise UsageError(f"need 0 <= M <= K, got M={M}, K={K}")
    regime = regime or regime_of(K, P)
    co = coefficients(N, K, P, regime)
    with mpmath.workdps(WORKING_DPS):
        total = sum(comb(M, k) * co.weight(k) for k in range(1, M + 1))
        return co.chunk_norm * total


@dataclass(frozen=True)
class IdentityReport:
    N: int
    K: int
    P: int
    M: int
    regime: str
    lhs: Number  # p(N, K) - q(N, K, M)
    rhs: Number  # p(N, K - M)
    exact: bool
    ok: bool


def verify_reduction_identity(
    N: int, K: int, P: int, M: int, regime: str | None = None
) -> IdentityReport:
    """Check that side information removes exactly the load of ``M`` files."""
    _validate(N, K, P, M)
    regime = regime or regime_of(K, P, M)
    _check_regime(K, P, M, regime)
    with mpmath.workdps(WORKING_DPS):
        lhs = accounting_p(N, K, P, regime) - accounting_q(N, K, M, P, regime)
        rhs = accounting_p(N, K - M, P, regime)
        exact = isinstance(lhs, Fraction) and isinstance(rhs, Fraction)
        ok = lhs == rhs if exact else bool(abs(as_mpf(lhs) - as_mpf(rhs)) <= LOW_TOLERANCE)
    return IdentityReport(N, K, P, M, regime, lhs, rhs, exact, ok)


def converse_bound(N: int, K: int, P: int, M: int) -> Fraction:
    """Information-theoretic lower bound on the load."""
    _validate(N, K, P, M)
    if 2 * P >= K - M:
        return 1 + Fraction(K - M - P, N * P)
    ratio = Fraction(K - M, P)
    whole = floor(ratio)
    inv = Fraction(1, N)
    return (1 - inv**whole) / (1 - inv) + (ratio - whole) / Fraction(N) ** whole


def scheme_load(N: int, K: int, P: int, M: int) -> Fraction:
    """Load of the implemented two-phase scheme, valid for every parameter set."""
    _validate(N, K, P, M)
    return 1 + Fraction(K - M - P, P * N)


@dataclass(frozen=True)
class CapacityReport:
    N: int
    K: int
    P: int
    M: int
    regime: str
    theorem_regime: bool
    achievable: Fraction
    converse: Fraction
    optimal: bool
    identity_ok: bool

    @property
    def capacity(self) -> Fraction | None:
        return 1 / self.achievable if self.optimal else None


def capacity_report(N: int, K: int, P: int, M: int) -> CapacityReport:
    """Best known achievable load next to the converse.

    Outside the theorem regimes the achievable value is the implemented
    scheme's load and ``optimal`` is False.
    """
    theorem = in_theorem_regime(N, K, P, M)
    known = dpsi(N, K, P, M)
    achievable = known if known is not None else scheme_load(N, K, P, M)
    converse = converse_bound(N, K, P, M)
    optimal = theorem and achievable == converse
    identity = verify_reduction_identity(N, K, P, M).ok
    return CapacityReport(
        N, K, P, M, regime_of(K, P, M), theorem, achievable, converse, optimal, identity
    )


def valid_tuples(Ns: Iterable[int], Ks: Iterable[int]):
    Ks = list(Ks)
    for N in Ns:
        for K in Ks:
            for P in range(1, K + 1):
                for M in range(0, K - P + 1):
                    yield N, K, P, M


def format_number(x: Number, decimal: bool = False) -> str:
    """Rationals print as ``a/b``; ``decimal`` (or an irrational) gives 15 digits."""
    if isinstance(x, Fraction) and not decimal:
        return str(x)
    with mpmath.workdps(WORKING_DPS):
        return mpmath.nstr(as_mpf(x), 15)


def sweep_csv(reports: Iterable[CapacityReport], decimal: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in reports:
        writer.writerow(
            [
                rep.N,
                rep.K,
                rep.P,
                rep.M,
                rep.regime,
                format_number(rep.achievable, decimal),
                format_number(rep.converse, decimal),
                rep.optimal,
                rep.identity_ok,
            ]
        )
    return buf.getvalue()
