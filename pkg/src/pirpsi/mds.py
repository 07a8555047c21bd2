"""Systematic Reed-Solomon style MDS codes over a prime field.

Two codes appear in the scheme: the ``P x K`` Vandermonde inner generator
that mixes one chunk per file in the second phase, and the systematic
``[2p - q, p]`` outer code whose parity symbols replace the plain answer so
that side information can stand in for the systematic part.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from itertools import combinations
from math import comb
from typing import Mapping

import numpy as np

from .errors import (
    CorruptionError,
    EnumerationTooLargeError,
    FieldTooSmallError,
    InsufficientDataError,
    UsageError,
)
from .field import DEFAULT_MODULUS, PrimeField, get_field

MAX_MDS_SUBSETS = 10**6


@dataclass(frozen=True, eq=False)
class MdsCode:
    """An ``[n, k]`` linear code given by its ``k x n`` generator.

    ``make_mds`` always returns a systematic MDS code; hand-built instances
    (e.g. for negative tests) may be neither, which ``check_mds`` detects.
    """

    n: int
    k: int
    field: PrimeField
    eval_points: tuple[int, ...]
    generator: np.ndarray
    _decoders: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.generator.shape != (self.k, self.n):
            raise UsageError(
                f"generator shape {self.generator.shape} != ({self.k}, {self.n})"
            )

    @property
    def is_systematic(self) -> bool:
        return bool(np.array_equal(self.generator[:, : self.k], np.eye(self.k, dtype=np.int64)))

    def decoder(self, positions: tuple[int, ...]) -> np.ndarray:
        """Inverse of the transposed generator restricted to ``positions``.

        Cached per position set; raises ``SingularMatrixError`` when the
        columns are dependent (never for a true MDS code).
        """
        inv = self._decoders.get(positions)
        if inv is None:
            sub = self.generator[:, list(positions)].T
            inv = self.field.inverse(sub)
            self._decoders[positions] = inv
        return inv


@lru_cache(maxsize=256)
def _make_mds(k: int, n: int, q: int) -> MdsCode:
    f = get_field(q)
    points = tuple(range(n))
    vander = f.vandermonde(points, k)
    generator = f.solve(vander[:, :k], vander)
    generator.setflags(write=False)
    return MdsCode(n=n, k=k, field=f, eval_points=points, generator=generator)


def make_mds(k: int, n: int, q: int = DEFAULT_MODULUS) -> MdsCode:
    """Systematic ``[n, k]`` MDS code from the Vandermonde matrix on ``0..n-1``.

    Deterministic in ``(k, n, q)``; instances are shared.
    """
    if k < 1 or n < k:
        raise UsageError(f"need 1 <= k <= n, got k={k}, n={n}")
    if n >= q:
        raise FieldTooSmallError(f"code length {n} needs a field larger than GF({q})")
    return _make_mds(int(k), int(n), int(q))


def inner_generator(rows: int, cols: int, q: int = DEFAULT_MODULUS) -> np.ndarray:
    """Non-systematic ``rows x cols`` Vandermonde on the points ``1..cols``.

    Any ``rows`` of its columns are linearly independent, so a receiver that
    knows all but ``rows`` of the combined chunks can solve for the rest.
    """
    if rows < 1 or cols < rows:
        raise UsageError(f"need 1 <= rows <= cols, got {rows}x{cols}")
    if cols >= q:
        raise FieldTooSmallError(f"{cols} distinct nonzero points do not fit in GF({q})")
    g = get_field(q).vandermonde(range(1, cols + 1), rows)
    g.setflags(write=False)
    return g


def encode(code: MdsCode, message) -> np.ndarray:
    """Codeword for ``message``; a 2-D message encodes each column (lane)."""
    msg = np.asarray(message, dtype=np.int64)
    if msg.shape[:1] != (code.k,):
        raise UsageError(f"message has {msg.shape[:1]} symbols, code dimension is {code.k}")
    return code.field.matmul(code.generator.T, msg)


def recover(code: MdsCode, known: Mapping[int, object]) -> np.ndarray:
    """Solve for the message from at least ``k`` known codeword positions.

    Extra positions beyond the first ``k`` are checked for consistency and a
    mismatch raises :class:`CorruptionError`.
    """
    positions = sorted(int(p) for p in known)
    if len(set(positions)) != len(positions):
        raise UsageError("duplicate positions in known set")
    if positions and (positions[0] < 0 or positions[-1] >= code.n):
        raise UsageError(f"positions must lie in [0, {code.n})")
    if len(positions) < code.k:
        raise InsufficientDataError(
            f"{len(positions)} known positions, need {code.k} to decode"
        )
    chosen = tuple(positions[: code.k])
    values = np.stack([np.asarray(known[p], dtype=np.int64) for p in chosen])
    message = code.field.matmul(code.decoder(chosen), values)
    extra = positions[code.k :]
    if extra:
        expected = code.field.matmul(code.generator[:, extra].T, message)
        observed = np.stack([np.asarray(known[p], dtype=np.int64) for p in extra])
        if not np.array_equal(expected, observed % code.field.q):
            raise CorruptionError("known symbols are not consistent with any codeword")
    return message


def check_mds(code: MdsCode) -> bool:
    """True iff every ``k`` columns of the generator are independent."""
    n_subsets = comb(code.n, code.k)
    if n_subsets > MAX_MDS_SUBSETS:
        raise EnumerationTooLargeError(
            f"C({code.n}, {code.k}) = {n_subsets} subsets exceeds {MAX_MDS_SUBSETS}"
        )
    f = code.field
    for cols in combinations(range(code.n), code.k):
        if f.rank(code.generator[:, list(cols)]) < code.k:
            return False
    return True
