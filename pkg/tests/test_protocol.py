from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pirpsi.capacity import dpsi
from pirpsi.errors import FieldTooSmallError, MalformedQueryError, UsageError
from pirpsi.mds import encode, inner_generator, make_mds
from pirpsi.protocol import (
    Answer,
    Library,
    Params,
    Randomness,
    SideInfo,
    admissible_pairs,
    answer_query,
    decode,
    generate_queries,
    logical_layout,
    plain_chunks,
    plan_scheme,
    run_exchange,
)

SMALL = Params(N=2, K=4, P=2, M=1)


@pytest.mark.parametrize(
    "params,p_prime,outer,answer,load",
    [
        (Params(2, 4, 2, 1), 6, 11, 5, Fraction(5, 4)),
        (Params(2, 4, 2, 0), 6, 6, 6, Fraction(3, 2)),
        (Params(3, 4, 2, 0), 8, 8, 8, Fraction(4, 3)),
        (Params(3, 5, 2, 1), 9, 17, 8, Fraction(4, 3)),
        (Params(2, 1, 1, 0), 2, 2, 2, Fraction(1)),
    ],
)
def test_plan(params, p_prime, outer, answer, load):
    plan = plan_scheme(params)
    assert (plan.p_prime, plan.outer_length, plan.answer_chunks) == (p_prime, outer, answer)
    assert plan.expected_load == load
    assert plan.chunks_per_file == params.N**2
    assert plan.file_length == params.L


@pytest.mark.parametrize(
    "kwargs",
    [dict(N=1, K=2, P=1), dict(N=2, K=2, P=0), dict(N=2, K=2, P=2, M=1), dict(N=2, K=2, P=1, c=0),
     dict(N=2, K=2, P=1, modulus=15)],
)
def test_invalid_params(kwargs):
    with pytest.raises(UsageError):
        Params(**kwargs)


def test_field_too_small_for_outer_code():
    with pytest.raises(FieldTooSmallError):
        Params(2, 4, 2, 1, modulus=11)


def test_admissible_pairs_are_disjoint_and_complete():
    pairs = list(admissible_pairs(SMALL))
    assert len(pairs) == 4 * 3  # choose side (4), then 2 of the remaining 3
    for side, req in pairs:
        assert not set(side) & set(req)


def test_layout_freshness():
    for N, K, P in [(2, 4, 2), (3, 5, 2), (3, 3, 1)]:
        params = Params(N, K, P)
        req = list(range(P))
        layout = logical_layout(params, req)
        for i in req:
            used = layout[:, :, i].ravel().tolist()
            assert sorted(used) == list(range(N * N))  # every chunk exactly once
        for j in range(P, K):
            for n in range(N):
                partners = [m for m in range(N) if m != n]
                assert layout[n, 1:, j].tolist() == partners


def test_second_server_plain_chunks():
    lib = Library.random(4, SMALL.L, seed=5)
    req, side = (0, 1), (2,)
    queries = generate_queries(SMALL, req, side, seed=11)
    q1 = queries[1]
    plain = plain_chunks(lib, q1)
    assert plain.shape == (6, 1)
    for j in range(4):
        assert plain[j, 0] == lib.files[j, q1.phase1[j][0]]
    inst = q1.phase2[0]
    g = np.array(inst.coefficients)
    vec = np.array([lib.files[j, inst.chunks[j][0]] for j in range(4)])
    assert plain[4:, 0].tolist() == ((g @ vec) % 65537).tolist()
    # Unrequested files reuse server 0's phase-1 chunk; requested ones are fresh.
    q0 = queries[0]
    for j in (2, 3):
        assert inst.chunks[j] == q0.phase1[j]
    for i in req:
        assert inst.chunks[i] not in (q0.phase1[i], q1.phase1[i])
    # Coefficients are a column permutation of the Vandermonde generator.
    base = inner_generator(2, 4)
    assert sorted(map(tuple, g.T.tolist())) == sorted(map(tuple, base.T.tolist()))


def test_small_answer_sizes_and_load():
    lib = Library.random(4, SMALL.L, seed=2)
    t = run_exchange(SMALL, lib, (0, 1), (2,), seed=3)
    assert t.success
    assert [a.coded_chunks.shape for a in t.answers] == [(5, 1), (5, 1)]
    assert t.achieved_load == Fraction(5, 4)
    t0 = run_exchange(Params(2, 4, 2, 0), lib, (0, 1), (), seed=3)
    assert t0.achieved_load == Fraction(3, 2)


def test_answer_is_outer_parity():
    lib = Library.random(4, SMALL.L, seed=8)
    q = generate_queries(SMALL, (1, 3), (0,), seed=4)[0]
    plain = plain_chunks(lib, q)
    word = encode(make_mds(6, 11), plain)
    assert np.array_equal(answer_query(lib, q).coded_chunks, word[6:])


def test_rate_one_answer_is_plain():
    params = Params(3, 4, 2, 0, c=2)
    lib = Library.for_params(params, seed=1)
    for q in generate_queries(params, (0, 2), (), seed=9):
        assert np.array_equal(answer_query(lib, q).coded_chunks, plain_chunks(lib, q))


def test_query_shape_independent_of_request():
    params = Params(3, 5, 2, 1, c=2)
    shapes = set()
    for side, req in admissible_pairs(params):
        for seed in (0, 1):
            for q in generate_queries(params, req, side, seed):
                shapes.add(
                    (len(q.phase1), len(q.phase2), q.plain_count, q.answer_count,
                     tuple(len(d) for d in q.phase1), q.outer_n, q.outer_k)
                )
    assert len(shapes) == 1


def test_queries_deterministic_in_seed():
    a = generate_queries(SMALL, (0, 1), (2,), seed=42)
    b = generate_queries(SMALL, (0, 1), (2,), seed=42)
    c = generate_queries(SMALL, (0, 1), (2,), seed=43)
    assert a == b and a != c


def test_zero_library_gives_zero_answers():
    lib = Library(np.zeros((4, SMALL.L), dtype=np.int64))
    t = run_exchange(SMALL, lib, (0, 1), (2,), seed=0)
    assert all(not a.coded_chunks.any() for a in t.answers)
    assert t.success


def test_tampered_answer_changes_output():
    lib = Library.random(4, SMALL.L, seed=3)
    queries = generate_queries(SMALL, (0, 1), (2,), seed=5)
    answers = [answer_query(lib, q) for q in queries]
    side = SideInfo.from_library(lib, (2,))
    bad = answers[0].coded_chunks.copy()
    bad[0, 0] = (bad[0, 0] + 1) % 65537
    out = decode(SMALL, queries, [Answer(bad), answers[1]], (0, 1), side)
    assert not all(np.array_equal(out[i], lib.files[i]) for i in (0, 1))


def test_out_of_range_position_rejected():
    lib = Library.random(4, SMALL.L, seed=0)
    q = generate_queries(SMALL, (0, 1), (2,), seed=0)[0]
    broken = replace(q, phase1=((SMALL.L,),) + q.phase1[1:])
    with pytest.raises(MalformedQueryError):
        answer_query(lib, broken)


def test_overlapping_request_and_side_rejected():
    with pytest.raises(UsageError):
        generate_queries(SMALL, (0, 1), (1,), seed=0)


def test_no_permutation_control_still_decodes():
    lib = Library.random(4, SMALL.L, seed=1)
    assert run_exchange(SMALL, lib, (0, 3), (1,), seed=2, permute_chunks=False).success


def test_explicit_randomness_matches_seed():
    rnd = Randomness.from_seed(SMALL, 17)
    assert generate_queries(SMALL, (0, 1), (2,), randomness=rnd) == generate_queries(
        SMALL, (0, 1), (2,), seed=17
    )


@st.composite
def exchanges(draw):
    N = draw(st.integers(2, 3))
    K = draw(st.integers(1, 6))
    P = draw(st.integers(1, K))
    M = draw(st.integers(0, K - P))
    c = draw(st.integers(1, 3))
    perm = draw(st.permutations(range(K)))
    return Params(N, K, P, M, c), tuple(perm[:P]), tuple(perm[P : P + M]), draw(st.integers(0, 2**63))


@given(exchanges())
def test_decode_round_trip(case):
    params, req, side, seed = case
    lib = Library.for_params(params, seed=seed % 1000)
    t = run_exchange(params, lib, req, side, seed)
    assert t.success
    assert t.downloaded_symbols == params.N * params.answer_chunks * params.c
    if params.high_p:
        assert t.achieved_load == dpsi(params.N, params.K, params.P, params.M)
