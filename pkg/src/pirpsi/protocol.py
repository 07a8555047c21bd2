"""Multi-message PIR with private side information, high-request regime.

The scheme runs in three layers:

* phase 1 -- every server returns one chunk of every file;
* phase 2 -- for each other server ``m``, server ``n`` returns ``P``
  combinations (rows of a column-shuffled ``P x K`` Vandermonde) of one chunk
  per file: a fresh chunk for each requested file and server ``m``'s phase-1
  chunk for every other file;
* outer code -- the ``p' = K + P(N-1)`` plain chunks are encoded with a
  systematic ``[2p' - M, p']`` MDS code and only the ``p' - M`` parity chunks
  are sent.  The user fills the systematic gaps with the phase-1 chunks of its
  side-information files.

All files are scrambled by secret per-file chunk permutations, so every
server sees ``N`` distinct uniformly placed chunks of every file no matter
which files are requested or held.  File indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    FieldTooSmallError,
    MalformedQueryError,
    ProtocolInvariantError,
    SingularMatrixError,
    UsageError,
)
from .field import DEFAULT_MODULUS, get_field, is_prime
from .mds import encode, inner_generator, make_mds, recover


@dataclass(frozen=True)
class Params:
    """System parameters.  Each file holds ``L = c * N**2`` symbols."""

    N: int
    K: int
    P: int
    M: int = 0
    c: int = 1
    modulus: int = DEFAULT_MODULUS

    def __post_init__(self):
        if self.N < 2:
            raise UsageError(f"need at least 2 servers, got N={self.N}")
        if self.K < 1:
            raise UsageError(f"need K >= 1, got {self.K}")
        if self.P < 1:
            raise UsageError(f"need P >= 1, got {self.P}")
        if self.M < 0:
            raise UsageError(f"need M >= 0, got {self.M}")
        if self.P + self.M > self.K:
            raise UsageError(f"P + M = {self.P + self.M} exceeds K = {self.K}")
        if self.c < 1:
            raise UsageError(f"chunk size must be positive, got {self.c}")
        if not is_prime(self.modulus):
            raise UsageError(f"modulus {self.modulus} is not prime")
        needed = max(self.K, self.outer_length)
        if self.modulus <= needed:
            raise FieldTooSmallError(
                f"GF({self.modulus}) too small: codes need more than {needed} points"
            )

    @property
    def L(self) -> int:
        return self.c * self.N**2

    @property
    def high_p(self) -> bool:
        return 2 * self.P >= self.K - self.M

    @property
    def p_prime(self) -> int:
        return self.K + self.P * (self.N - 1)

    @property
    def q_prime(self) -> int:
        return self.M

    @property
    def outer_length(self) -> int:
        # M = 0 degenerates to the rate-1 code: send the plain chunks.
        return 2 * self.p_prime - self.q_prime if self.q_prime else self.p_prime

    @property
    def answer_chunks(self) -> int:
        return self.p_prime - self.q_prime


@dataclass(frozen=True)
class SchemePlan:
    chunks_per_file: int
    p_prime: int
    q_prime: int
    outer_length: int
    answer_chunks: int
    file_length: int
    expected_load: Fraction
    high_p: bool


def plan_scheme(params: Params) -> SchemePlan:
    return SchemePlan(
        chunks_per_file=params.N**2,
        p_prime=params.p_prime,
        q_prime=params.q_prime,
        outer_length=params.outer_length,
        answer_chunks=params.answer_chunks,
        file_length=params.L,
        expected_load=Fraction(params.answer_chunks, params.P * params.N),
        high_p=params.high_p,
    )


@dataclass(frozen=True, eq=False)
class Library:
    files: np.ndarray  # (K, L)
    modulus: int = DEFAULT_MODULUS

    @property
    def K(self) -> int:
        return self.files.shape[0]

    @property
    def L(self) -> int:
        return self.files.shape[1]

    @classmethod
    def random(cls, K: int, L: int, seed: int, modulus: int = DEFAULT_MODULUS) -> Library:
        rng = np.random.default_rng(seed)
        return cls(rng.integers(0, modulus, size=(K, L), dtype=np.int64), modulus)

    @classmethod
    def for_params(cls, params: Params, seed: int) -> Library:
        return cls.random(params.K, params.L, seed, params.modulus)

    def __eq__(self, other):
        return (
            isinstance(other, Library)
            and self.modulus == other.modulus
            and np.array_equal(self.files, other.files)
        )


@dataclass(frozen=True, eq=False)
class SideInfo:
    indices: tuple[int, ...]
    contents: np.ndarray  # (M, L), row t holds file indices[t]

    @classmethod
    def from_library(cls, library: Library, indices: Iterable[int]) -> SideInfo:
        idx = tuple(sorted(int(i) for i in indices))
        return cls(idx, library.files[list(idx)].copy())

    def file(self, index: int) -> np.ndarray:
        return self.contents[self.indices.index(index)]


@dataclass(frozen=True)
class RequestSet:
    indices: tuple[int, ...]


def _normalize_sets(params: Params, request, side) -> tuple[tuple[int, ...], tuple[int, ...]]:
    req = tuple(sorted(int(i) for i in getattr(request, "indices", request)))
    s = tuple(sorted(int(i) for i in getattr(side, "indices", side)))
    for name, idx, size in (("request", req, params.P), ("side information", s, params.M)):
        if len(idx) != size or len(set(idx)) != size:
            raise UsageError(f"{name} must hold {size} distinct indices, got {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= params.K):
            raise UsageError(f"{name} indices must lie in [0, {params.K}), got {idx}")
    if set(req) & set(s):
        raise UsageError(f"request {req} and side information {s} overlap")
    return req, s


def admissible_pairs(params: Params):
    """All ``(side, request)`` index pairs allowed by ``params``."""
    for side in combinations(range(params.K), params.M):
        rest = [i for i in range(params.K) if i not in side]
        for req in combinations(rest, params.P):
            yield side, req


@dataclass(frozen=True, eq=False)
class Randomness:
    """The user's secret coins.

    ``chunk_perms[i, t]`` is the stored chunk slot holding logical chunk ``t``
    of file ``i``; ``column_perms[n, r]`` is the column order applied to the
    inner generator for server ``n``'s ``r``-th phase-2 instance.
    """

    chunk_perms: np.ndarray  # (K, N**2)
    column_perms: np.ndarray  # (N, N-1, K)

    @classmethod
    def from_seed(cls, params: Params, seed: int, permute_chunks: bool = True) -> Randomness:
        rng = np.random.default_rng(seed)
        n_slots = params.N**2
        base = np.tile(np.arange(n_slots), (params.K, 1))
        chunks = rng.permuted(base, axis=1) if permute_chunks else base
        cols = np.tile(np.arange(params.K), (params.N, params.N - 1, 1))
        cols = rng.permuted(cols, axis=2)
        return cls(chunks, cols)


def logical_layout(params: Params, request: Sequence[int]) -> np.ndarray:
    """Logical chunk index used by each server, instance row and file.

    Shape ``(N, N, K)``: row 0 is phase 1 (server ``n`` takes chunk ``n``),
    row ``1 + r`` is the ``r``-th phase-2 instance, paired with the ``r``-th
    other server in ascending order.  Requested files draw fresh chunks
    ``N, N+1, ...`` in (server, partner) order; the rest reuse the partner's
    phase-1 chunk.
    """
    N, K = params.N, params.K
    requested = np.zeros(K, dtype=bool)
    requested[list(request)] = True
    layout = np.empty((N, N, K), dtype=np.int64)
    fresh = N
    for n in range(N):
        layout[n, 0, :] = n
        partners = [m for m in range(N) if m != n]
        for r, m in enumerate(partners):
            layout[n, 1 + r, :] = np.where(requested, fresh, m)
            fresh += 1
    return layout


@dataclass(frozen=True)
class Phase2Instance:
    coefficients: tuple[tuple[int, ...], ...]  # P x K
    chunks: tuple[tuple[int, ...], ...]  # one position list per file


@dataclass(frozen=True)
class Query:
    """What one server sees: raw stored positions and coefficients only."""

    phase1: tuple[tuple[int, ...], ...]
    phase2: tuple[Phase2Instance, ...]
    outer_n: int
    outer_k: int

    @property
    def plain_count(self) -> int:
        return len(self.phase1) + sum(len(inst.coefficients) for inst in self.phase2)

    @property
    def answer_count(self) -> int:
        return self.outer_n - self.outer_k if self.outer_n > self.outer_k else self.outer_k


@dataclass(frozen=True, eq=False)
class Answer:
    coded_chunks: np.ndarray  # (chunks, c)

    def __eq__(self, other):
        return isinstance(other, Answer) and np.array_equal(self.coded_chunks, other.coded_chunks)

    @property
    def symbol_count(self) -> int:
        return int(self.coded_chunks.size)


def build_query(
    params: Params,
    layout: np.ndarray,
    randomness: Randomness,
    server: int,
    generator: np.ndarray | None = None,
) -> Query:
    if generator is None:
        generator = inner_generator(params.P, params.K, params.modulus)
    K, c = params.K, params.c
    slots = randomness.chunk_perms[np.arange(K), layout[server]]  # (N, K)
    lanes = np.arange(c)
    positions = [[tuple((int(s) * c + lanes).tolist()) for s in row] for row in slots]
    instances = []
    for r, cols in enumerate(randomness.column_perms[server]):
        coeffs = generator[:, cols]
        instances.append(
            Phase2Instance(
                coefficients=tuple(tuple(int(x) for x in row) for row in coeffs),
                chunks=tuple(positions[1 + r]),
            )
        )
    return Query(
        phase1=tuple(positions[0]),
        phase2=tuple(instances),
        outer_n=params.outer_length,
        outer_k=params.p_prime,
    )


def generate_queries(
    params: Params,
    request,
    side,
    seed: int | None = None,
    *,
    randomness: Randomness | None = None,
    permute_chunks: bool = True,
) -> list[Query]:
    """One query per server, a deterministic function of the inputs.

    ``permute_chunks=False`` disables the chunk scrambling; that variant leaks
    the request and only exists as a negative control for the privacy audit.
    """
    req, _ = _normalize_sets(params, request, side)
    if randomness is None:
        if seed is None:
            raise UsageError("either seed or randomness is required")
        randomness = Randomness.from_seed(params, seed, permute_chunks)
    layout = logical_layout(params, req)
    g = inner_generator(params.P, params.K, params.modulus)
    return [build_query(params, layout, randomness, n, g) for n in range(params.N)]


def validate_query(query: Query, K: int, L: int, modulus: int) -> int:
    """Check a query against library dimensions; returns its chunk size."""
    if len(query.phase1) != K:
        raise MalformedQueryError(f"phase 1 names {len(query.phase1)} files, library has {K}")
    descriptors = [query.phase1] + [inst.chunks for inst in query.phase2]
    try:
        positions = np.array(descriptors, dtype=np.int64)
    except (ValueError, OverflowError):
        raise MalformedQueryError("chunk descriptors differ in shape") from None
    if positions.ndim != 3 or positions.shape[1] != K or positions.shape[2] == 0:
        raise MalformedQueryError("every instance must name one non-empty chunk per file")
    if positions.min() < 0 or positions.max() >= L:
        raise MalformedQueryError(f"symbol position outside [0, {L})")
    for inst in query.phase2:
        try:
            coeffs = np.array(inst.coefficients, dtype=np.int64)
        except (ValueError, OverflowError):
            raise MalformedQueryError("ragged coefficient matrix") from None
        if coeffs.ndim != 2 or coeffs.shape[0] == 0 or coeffs.shape[1] != K:
            raise MalformedQueryError("phase-2 coefficient matrix must have K columns")
        if coeffs.min() < 0 or coeffs.max() >= modulus:
            raise MalformedQueryError("coefficient outside the field")
    if query.outer_k != query.plain_count:
        raise MalformedQueryError(
            f"outer code dimension {query.outer_k} != {query.plain_count} plain chunks"
        )
    if not query.outer_k <= query.outer_n < modulus:
        raise MalformedQueryError(f"outer code [{query.outer_n}, {query.outer_k}] is invalid")
    return positions.shape[2]


def plain_chunks(library: Library, query: Query) -> np.ndarray:
    """The ``p'`` uncoded answer chunks, shape ``(p', c)``."""
    validate_query(query, library.K, library.L, library.modulus)
    f = get_field(library.modulus)
    files = library.files
    rows_of = np.arange(library.K)[:, None]
    parts = [files[rows_of, np.array(query.phase1)]]
    for inst in query.phase2:
        chunks = files[rows_of, np.array(inst.chunks)]
        parts.append(f.matmul(np.array(inst.coefficients, dtype=np.int64), chunks))
    return np.concatenate(parts)


def answer_query(library: Library, query: Query) -> Answer:
    plain = plain_chunks(library, query)
    if query.outer_n == query.outer_k:
        return Answer(plain)
    code = make_mds(query.outer_k, query.outer_n, library.modulus)
    codeword = encode(code, plain)
    return Answer(codeword[query.outer_k :])


def recover_plain(params: Params, query: Query, answer: Answer, side: SideInfo) -> np.ndarray:
    """Undo the outer code for one server using the side-information chunks."""
    p = params.p_prime
    coded = np.asarray(answer.coded_chunks, dtype=np.int64)
    if coded.shape != (params.answer_chunks, params.c):
        raise ProtocolInvariantError(
            f"answer shape {coded.shape} != ({params.answer_chunks}, {params.c})"
        )
    if params.q_prime == 0:
        return coded
    code = make_mds(p, params.outer_length, params.modulus)
    known = {j: side.file(j)[list(query.phase1[j])] for j in side.indices}
    for t in range(params.answer_chunks):
        known[p + t] = coded[t]
    try:
        return recover(code, known)
    except SingularMatrixError as exc:
        raise ProtocolInvariantError("outer-code recovery failed") from exc


def decode(
    params: Params,
    queries: Sequence[Query],
    answers: Sequence[Answer],
    request,
    side: SideInfo,
) -> dict[int, np.ndarray]:
    """Recover the requested files from answers, queries and side information.

    Returns ``{file index: symbols}``.  There is no integrity check: a wrong
    answer symbol yields wrong output (or a ProtocolInvariantError when it
    makes a system unsolvable).
    """
    req, side_idx = _normalize_sets(params, request, side)
    if len(queries) != params.N or len(answers) != params.N:
        raise UsageError(f"need {params.N} queries and answers")
    f = get_field(params.modulus)
    K, P = params.K, params.P
    req_set = set(req)
    others = [j for j in range(K) if j not in req_set]

    plains = [recover_plain(params, q, a, side) for q, a in zip(queries, answers)]

    # Every chunk the user knows, keyed by (file, stored positions).
    known: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}
    for q, plain in zip(queries, plains):
        for j, d in enumerate(q.phase1):
            known[(j, d)] = plain[j]
    for j in side_idx:
        content = side.file(j)
        for q in queries:
            for inst in q.phase2:
                d = inst.chunks[j]
                known[(j, d)] = content[list(d)]

    out = {i: np.full(params.L, -1, dtype=np.int64) for i in req}
    for q, plain in zip(queries, plains):
        for i in req:
            out[i][list(q.phase1[i])] = plain[i]
        row = K
        for inst in q.phase2:
            coeffs = np.array(inst.coefficients, dtype=np.int64)
            rhs = plain[row : row + P]
            row += P
            if others:
                try:
                    interference = np.stack([known[(j, inst.chunks[j])] for j in others])
                except KeyError as exc:
                    raise ProtocolInvariantError(
                        "phase-2 instance references a chunk the user never received"
                    ) from exc
                rhs = (rhs - f.matmul(coeffs[:, others], interference)) % f.q
            try:
                solved = f.matmul(_inverse_cached(f, coeffs[:, list(req)]), rhs)
            except SingularMatrixError as exc:
                raise ProtocolInvariantError("phase-2 system is singular") from exc
            for t, i in enumerate(req):
                out[i][list(inst.chunks[i])] = solved[t]
    for i, symbols in out.items():
        if (symbols < 0).any():
            raise ProtocolInvariantError(f"file {i} was not fully covered by the answers")
    return out


_INVERSES: dict[tuple[int, bytes], np.ndarray] = {}


def _inverse_cached(f, a: np.ndarray) -> np.ndarray:
    key = (f.q, a.shape[0], a.tobytes())
    inv = _INVERSES.get(key)
    if inv is None:
        inv = f.inverse(a)
        if len(_INVERSES) < 65536:
            _INVERSES[key] = inv
    return inv


@dataclass(eq=False)
class Transcript:
    params: Params
    request: tuple[int, ...]
    side: tuple[int, ...]
    seed: int
    queries: list[Query]
    answers: list[Answer]
    decoded: dict[int, np.ndarray]
    success: bool | None  # None when no reference library was available
    downloaded_symbols: int = field(init=False)
    achieved_load: Fraction = field(init=False)

    def __post_init__(self):
        self.downloaded_symbols = sum(a.symbol_count for a in self.answers)
        self.achieved_load = Fraction(self.downloaded_symbols, self.params.P * self.params.L)

    @property
    def theorem_regime(self) -> bool:
        """Whether the achieved load is the known optimum (high-request regime)."""
        return self.params.high_p

    def to_bytes(self) -> bytes:
        from .wire import encode_transcript

        return encode_transcript(self)

    def __eq__(self, other):
        return isinstance(other, Transcript) and self.to_bytes() == other.to_bytes()


def run_exchange(
    params: Params,
    library: Library,
    request,
    side,
    seed: int,
    *,
    permute_chunks: bool = True,
) -> Transcript:
    """Full in-memory exchange: queries, answers, decoding and a check."""
    req, side_idx = _normalize_sets(params, request, side)
    _check_library(params, library)
    queries = generate_queries(params, req, side_idx, seed, permute_chunks=permute_chunks)
    answers = [answer_query(library, q) for q in queries]
    side_info = SideInfo.from_library(library, side_idx)
    decoded = decode(params, queries, answers, req, side_info)
    success = all(np.array_equal(decoded[i], library.files[i]) for i in req)
    return Transcript(params, req, side_idx, seed, queries, answers, decoded, success)


def _check_library(params: Params, library: Library) -> None:
    if library.files.shape != (params.K, params.L):
        raise UsageError(
            f"library shape {library.files.shape} does not match (K, L) = ({params.K}, {params.L})"
        )
    if library.modulus != params.modulus:
        raise UsageError(f"library modulus {library.modulus} != {params.modulus}")
