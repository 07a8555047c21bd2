import csv
import io
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from pirpsi.capacity import (
    HIGH,
    LOW,
    as_mpf,
    accounting_p,
    accounting_q,
    capacity_report,
    converse_bound,
    dpsi,
    dpsi_equiv_check,
    format_number,
    in_theorem_regime,
    low_ratio,
    regime_of,
    scheme_load,
    sweep_csv,
    valid_tuples,
    verify_reduction_identity,
)
from pirpsi.errors import UsageError


def low_closed_form(N, K, P, M):
    """Per-server load of the low-request accounting, summed in closed form."""
    with mpmath.workdps(60):
        a = lambda e: mpmath.power(N, mpmath.mpf(e) / P)  # noqa: E731
        return mpmath.mpf(P) / N * (a(K) - a(M)) / (a(K) - a(K - P))


@pytest.mark.parametrize(
    "args,expected",
    [
        ((2, 4, 2, 1), Fraction(5, 4)),
        ((2, 4, 2, 0), Fraction(3, 2)),
        ((2, 6, 1, 2), Fraction(15, 8)),
        ((3, 4, 2, 0), Fraction(4, 3)),
        ((2, 3, 3, 0), Fraction(1)),
        ((3, 6, 2, 0), Fraction(13, 9)),
    ],
)
def test_dpsi_examples(args, expected):
    assert dpsi(*args) == expected


def test_dpsi_unknown_outside_theorem():
    assert dpsi(2, 7, 2, 0) is None
    assert not in_theorem_regime(2, 7, 2, 0)
    assert in_theorem_regime(2, 7, 2, 1)


def test_dpsi_rejects_bad_tuples():
    with pytest.raises(UsageError):
        dpsi(2, 3, 2, 2)
    with pytest.raises(UsageError):
        dpsi(1, 3, 1, 0)


def test_boundary_is_high():
    assert regime_of(4, 2, 0) == HIGH
    assert regime_of(5, 2, 0) == LOW
    assert regime_of(5, 2, 1) == HIGH


@pytest.mark.parametrize("N", [2, 3, 4])
def test_side_information_equals_smaller_library(N):
    for K in range(1, 11):
        for P in range(1, K + 1):
            for M in range(K - P + 1):
                if in_theorem_regime(N, K, P, M):
                    assert dpsi_equiv_check(N, K, P, M)


def test_accounting_examples():
    # Four chunk-sized units of 1/N^2 plus (N-1)P mixed ones.
    assert accounting_p(2, 4, 2) == Fraction(6, 4)
    assert accounting_q(2, 4, 1, 2) == Fraction(1, 4)
    assert accounting_p(2, 4, 2) - accounting_q(2, 4, 1, 2) == accounting_p(2, 3, 2) == Fraction(5, 4)
    assert accounting_p(3, 1, 1) == Fraction(1, 3)


@pytest.mark.parametrize("N", [2, 3, 4])
def test_high_accounting_reproduces_load(N):
    for K in range(1, 8):
        for P in range(1, K + 1):
            if 2 * P >= K:
                assert N * accounting_p(N, K, P) / P == dpsi(N, K, P, 0)


def test_low_ratio_exact_path():
    assert low_ratio(4, 2) == Fraction(1)
    assert low_ratio(2, 1) == Fraction(1)
    assert low_ratio(27, 3) == Fraction(1, 2)
    with mpmath.workdps(60):
        assert abs(low_ratio(2, 2) - 1 / (mpmath.sqrt(2) - 1)) < mpmath.mpf(10) ** -50


@pytest.mark.parametrize("N,P", [(2, 1), (2, 2), (3, 1), (3, 2), (4, 2), (5, 3)])
def test_low_accounting_matches_closed_form(N, P):
    for K in range(2 * P, 2 * P + 7):
        for M in range(0, K - 2 * P + 1):
            with mpmath.workdps(60):
                lhs = accounting_p(N, K, P, LOW) - accounting_q(N, K, M, P, LOW)
                assert abs(as_mpf(lhs) - low_closed_form(N, K, P, M)) < mpmath.mpf(10) ** -40


def test_low_accounting_reproduces_known_optimum():
    for N in (2, 3):
        for P in (1, 2):
            for ratio in (2, 3, 4):
                K = ratio * P
                with mpmath.workdps(60):
                    load = N * as_mpf(accounting_p(N, K, P, LOW)) / P
                    assert abs(load - as_mpf(dpsi(N, K, P, 0))) < mpmath.mpf(10) ** -40


def test_identity_high_regime_exact():
    for N, K, P, M in valid_tuples([2, 3], range(1, 7)):
        if 2 * P >= K - M and 2 * P >= K:
            rep = verify_reduction_identity(N, K, P, M, HIGH)
            assert rep.exact and rep.ok


def test_identity_low_regime_irrational():
    rep = verify_reduction_identity(3, 7, 2, 1, LOW)
    assert rep.regime == LOW and not rep.exact and rep.ok


def test_identity_wrong_regime_rejected():
    with pytest.raises(UsageError):
        verify_reduction_identity(2, 6, 1, 0, HIGH)
    with pytest.raises(UsageError):
        verify_reduction_identity(2, 4, 2, 1, LOW)


@pytest.mark.parametrize(
    "args,expected",
    [
        ((2, 7, 2, 1), Fraction(7, 4)),
        ((2, 7, 2, 0), Fraction(29, 16)),
        ((2, 4, 2, 1), Fraction(5, 4)),
        ((3, 5, 1, 0), Fraction(121, 81)),
    ],
)
def test_converse_examples(args, expected):
    assert converse_bound(*args) == expected


def test_converse_never_exceeds_scheme_or_optimum():
    for N, K, P, M in valid_tuples([2, 3, 4], range(1, 9)):
        conv = converse_bound(N, K, P, M)
        assert conv <= scheme_load(N, K, P, M)
        known = dpsi(N, K, P, M)
        if known is not None:
            assert conv == known


def test_capacity_report_flags():
    rep = capacity_report(2, 4, 2, 1)
    assert rep.optimal and rep.achievable == Fraction(5, 4) and rep.capacity == Fraction(4, 5)
    off = capacity_report(2, 7, 2, 0)
    assert not off.optimal and off.capacity is None
    assert off.achievable == Fraction(9, 4)


def test_sweep_csv_shape():
    reports = [capacity_report(*t) for t in valid_tuples([2], [1, 2])]
    rows = list(csv.reader(io.StringIO(sweep_csv(reports))))
    assert rows[0] == ["N", "K", "P", "M", "regime", "achievable", "converse", "optimal", "identity_ok"]
    assert len(rows) == 1 + len(reports)
    assert rows[1] == ["2", "1", "1", "0", "high_p", "1", "1", "True", "True"]


def test_format_number():
    assert format_number(Fraction(5, 4)) == "5/4"
    assert format_number(Fraction(5, 4), decimal=True) == "1.25"


@given(st.integers(2, 5), st.integers(1, 9), st.data())
def test_dpsi_between_one_and_K(N, K, data):
    P = data.draw(st.integers(1, K))
    M = data.draw(st.integers(0, K - P))
    d = dpsi(N, K, P, M)
    if d is not None:
        assert 1 <= d <= Fraction(K - M, P)
