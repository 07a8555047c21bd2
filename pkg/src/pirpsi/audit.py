"""Privacy audit: each server's query distribution must not depend on (S, P).

Two modes:

* exact -- enumerate all user randomness that can influence one server's
  query and compare the resulting distributions over canonical query bytes
  as rational-valued maps;
* statistical -- sample many queries per (side, request) pair, project them
  onto small categorical features and run chi-square homogeneity tests.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from itertools import permutations, product
from math import factorial, perm
from typing import Sequence

import numpy as np
from scipy.stats import chi2_contingency

from .errors import EnumerationTooLargeError
from .mds import inner_generator
from .protocol import (
    Params,
    Query,
    Randomness,
    _normalize_sets,
    admissible_pairs,
    build_query,
    logical_layout,
)
from .wire import encode_query

log = logging.getLogger(__name__)

MAX_ENUMERATION = 10**7
DEFAULT_ALPHA = 0.01
MIN_SAMPLES = 10**4


@dataclass
class QueryDistribution:
    """Map from canonical query bytes to probability (or raw count)."""

    probabilities: dict[bytes, Fraction | int]
    total: int
    exact: bool

    def __eq__(self, other):
        return (
            isinstance(other, QueryDistribution)
            and self.exact == other.exact
            and self.probabilities == other.probabilities
        )

    @property
    def support(self) -> int:
        return len(self.probabilities)


def enumeration_size(params: Params, layout: np.ndarray, server: int, permute_chunks: bool = True) -> int:
    n_slots = params.N**2
    size = factorial(params.K) ** (params.N - 1)
    if permute_chunks:
        for i in range(params.K):
            size *= perm(n_slots, len(set(layout[server][:, i].tolist())))
    return size


def exact_distribution(
    params: Params, request, side, server_index: int, *, permute_chunks: bool = True
) -> QueryDistribution:
    """Exact law of one server's query under uniform user randomness.

    Only the images of the chunk indices this server actually references
    matter, so the enumeration runs over injective maps from those indices to
    stored slots (each extends to the same number of full permutations) times
    all column orders of this server's phase-2 instances.
    """
    req, side_idx = _normalize_sets(params, request, side)
    layout = logical_layout(params, req)
    size = enumeration_size(params, layout, server_index, permute_chunks)
    if size > MAX_ENUMERATION:
        raise EnumerationTooLargeError(
            f"{size} outcomes exceed {MAX_ENUMERATION}; use statistical_audit instead"
        )
    N, K = params.N, params.K
    n_slots = N * N
    referenced = [sorted(set(layout[server_index][:, i].tolist())) for i in range(K)]
    if permute_chunks:
        slot_choices = [list(permutations(range(n_slots), len(r))) for r in referenced]
    else:
        slot_choices = [[tuple(r)] for r in referenced]
    column_choices = [list(permutations(range(K)))] * (N - 1)
    g = inner_generator(params.P, K, params.modulus)

    chunk_perms = np.tile(np.arange(n_slots), (K, 1))
    column_perms = np.tile(np.arange(K), (N, N - 1, 1))
    counts: Counter[bytes] = Counter()
    total = 0
    for choice in product(*slot_choices, *column_choices):
        for i in range(K):
            images = choice[i]
            chunk_perms[i, referenced[i]] = images
            rest = [s for s in range(n_slots) if s not in images]
            unreferenced = [t for t in range(n_slots) if t not in referenced[i]]
            chunk_perms[i, unreferenced] = rest
        for r in range(N - 1):
            column_perms[server_index, r] = choice[K + r]
        rnd = Randomness(chunk_perms, column_perms)
        counts[encode_query(build_query(params, layout, rnd, server_index, g))] += 1
        total += 1
    return QueryDistribution({k: Fraction(v, total) for k, v in counts.items()}, total, True)


@dataclass
class ExactAuditReport:
    params: Params
    per_server: list[bool]
    pairs: int
    support_sizes: list[int]

    @property
    def private(self) -> bool:
        return all(self.per_server)

    def to_dict(self) -> dict:
        return {
            "mode": "exact",
            "params": asdict(self.params),
            "pairs": self.pairs,
            "servers": [
                {"server": n, "identical": ok, "support": s}
                for n, (ok, s) in enumerate(zip(self.per_server, self.support_sizes))
            ],
            "private": self.private,
        }


def exact_audit(params: Params, *, permute_chunks: bool = True) -> ExactAuditReport:
    pairs = list(admissible_pairs(params))
    verdicts, supports = [], []
    for n in range(params.N):
        dists = [
            exact_distribution(params, req, side, n, permute_chunks=permute_chunks)
            for side, req in pairs
        ]
        verdicts.append(all(d == dists[0] for d in dists[1:]))
        supports.append(dists[0].support)
    return ExactAuditReport(params, verdicts, len(pairs), supports)


# -- statistical mode ---------------------------------------------------------


def draw_randomness(
    params: Params, samples: int, rng: np.random.Generator, permute_chunks: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Batched :class:`Randomness`: arrays of shape (S, K, N^2) and (S, N, N-1, K)."""
    N, K = params.N, params.K
    chunks = np.broadcast_to(np.arange(N * N), (samples, K, N * N))
    chunks = rng.permuted(chunks, axis=2) if permute_chunks else chunks.copy()
    cols = np.broadcast_to(np.arange(K), (samples, N, N - 1, K))
    return chunks, rng.permuted(cols, axis=3)


def _canonical_column_keys(params: Params) -> np.ndarray:
    g = inner_generator(params.P, params.K, params.modulus)
    keys = np.empty(params.K, dtype=np.int64)
    for j in range(params.K):
        keys[j] = next(t for t in range(params.K) if np.array_equal(g[:, t], g[:, j]))
    return keys


def feature_names(params: Params) -> list[str]:
    return [f"file{i}_slots" for i in range(params.K)] + [
        f"instance{r}_columns" for r in range(params.N - 1)
    ]


def batch_features(
    params: Params,
    layout: np.ndarray,
    chunk_perms: np.ndarray,
    column_perms: np.ndarray,
    server: int,
) -> dict[str, np.ndarray]:
    """Feature codes for a batch of randomness draws (vectorized).

    ``file<i>_slots`` encodes the ordered stored slots of file ``i`` across
    phase 1 and the phase-2 instances; ``instance<r>_columns`` encodes which
    canonical generator column sits at each file position.
    """
    N, K = params.N, params.K
    n_slots = N * N
    rows = layout[server]  # (N, K) logical indices
    out = {}
    weights = n_slots ** np.arange(N)
    for i in range(K):
        slots = chunk_perms[:, i, rows[:, i]]  # (S, N)
        out[f"file{i}_slots"] = slots @ weights
    keys = _canonical_column_keys(params)
    col_weights = K ** np.arange(K)
    for r in range(N - 1):
        out[f"instance{r}_columns"] = keys[column_perms[:, server, r, :]] @ col_weights
    return out


def query_features(params: Params, query: Query) -> dict[str, int]:
    """Same projection as :func:`batch_features`, read off a built query."""
    N, K, c = params.N, params.K, params.c
    n_slots = N * N
    g = inner_generator(params.P, K, params.modulus)
    keys = _canonical_column_keys(params)
    out = {}
    for i in range(K):
        slots = [query.phase1[i][0] // c] + [inst.chunks[i][0] // c for inst in query.phase2]
        out[f"file{i}_slots"] = sum(s * n_slots**t for t, s in enumerate(slots))
    for r, inst in enumerate(query.phase2):
        coeffs = np.array(inst.coefficients)
        code = 0
        for j in range(K):
            canon = next(t for t in range(K) if np.array_equal(g[:, t], coeffs[:, j]))
            code += int(keys[canon]) * K**j
        out[f"instance{r}_columns"] = code
    return out


@dataclass
class FeatureTest:
    name: str
    statistic: float | None
    dof: int
    p_value: float | None
    categories: int
    degenerate: bool


@dataclass
class StatisticalReport:
    params: Params
    server: int
    samples: int
    groups: int
    alpha: float
    threshold: float
    tests: list[FeatureTest]
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.degenerate or t.p_value >= self.threshold for t in self.tests)

    def to_dict(self) -> dict:
        return {
            "mode": "statistical",
            "params": asdict(self.params),
            "server": self.server,
            "samples_per_group": self.samples,
            "groups": self.groups,
            "alpha": self.alpha,
            "threshold": self.threshold,
            "passed": self.passed,
            "tests": [asdict(t) for t in self.tests],
            "warnings": self.warnings,
        }


def _chi_square(name: str, groups: Sequence[np.ndarray]) -> FeatureTest:
    cats = np.unique(np.concatenate(groups))
    table = np.stack([np.bincount(np.searchsorted(cats, g), minlength=len(cats)) for g in groups])
    if len(cats) < 2:
        return FeatureTest(name, None, 0, None, len(cats), True)
    res = chi2_contingency(table, correction=False)
    return FeatureTest(name, float(res.statistic), int(res.dof), float(res.pvalue), len(cats), False)


def statistical_audit(
    params: Params,
    server_index: int,
    samples: int,
    *,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    pairs: Sequence[tuple[Sequence[int], Sequence[int]]] | None = None,
    split_halves: bool = False,
    permute_chunks: bool = True,
) -> StatisticalReport:
    """Chi-square homogeneity of query features across (side, request) pairs.

    ``alpha`` is split evenly (Bonferroni) over the non-degenerate features.
    With ``split_halves`` every pair's samples form two groups, which gives a
    self-consistency check usable with a single pair.
    """
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    pairs = list(pairs) if pairs is not None else list(admissible_pairs(params))
    root = np.random.SeedSequence([seed, server_index])
    groups: dict[str, list[np.ndarray]] = {name: [] for name in feature_names(params)}
    for (side, req), child in zip(pairs, root.spawn(len(pairs))):
        req, side = _normalize_sets(params, req, side)
        layout = logical_layout(params, req)
        rng = np.random.default_rng(child)
        chunks, cols = draw_randomness(params, samples, rng, permute_chunks)
        feats = batch_features(params, layout, chunks, cols, server_index)
        for name, codes in feats.items():
            if split_halves:
                half = samples // 2
                groups[name] += [codes[:half], codes[half:]]
            else:
                groups[name].append(codes)
    n_groups = len(next(iter(groups.values())))
    tests = [_chi_square(name, g) for name, g in groups.items()]
    live = [t for t in tests if not t.degenerate]
    warnings = [f"feature {t.name} takes a single value; skipped" for t in tests if t.degenerate]
    if not live:
        warnings.append("no informative features; the test is degenerate")
    for w in warnings:
        log.info(w)
    threshold = alpha / max(len(live), 1)
    return StatisticalReport(params, server_index, samples, n_groups, alpha, threshold, tests, warnings)


def statistical_audit_all(
    params: Params, samples: int, *, alpha: float = DEFAULT_ALPHA, seed: int = 0, **kwargs
) -> list[StatisticalReport]:
    """Audit every server, Bonferroni-correcting ``alpha`` across servers."""
    return [
        statistical_audit(params, n, samples, alpha=alpha / params.N, seed=seed, **kwargs)
        for n in range(params.N)
    ]
