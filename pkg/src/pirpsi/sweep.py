"""Batch exchanges over a parameter grid, as used by the experiment scripts."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .capacity import valid_tuples
from .protocol import Library, Params, admissible_pairs, run_exchange


@dataclass(frozen=True)
class ExchangeRecord:
    params: Params
    side: tuple[int, ...]
    request: tuple[int, ...]
    seed: int
    success: bool
    downloaded_symbols: int
    achieved_load: Fraction


def tuple_exchanges(params: Params, seeds: list[int]) -> list[ExchangeRecord]:
    """Every admissible pair of one tuple, once per seed; the library depends on the seed."""
    libraries = {s: Library.for_params(params, s) for s in seeds}
    out = []
    for side, req in admissible_pairs(params):
        for s in seeds:
            t = run_exchange(params, libraries[s], req, side, s)
            out.append(
                ExchangeRecord(params, side, req, s, bool(t.success), t.downloaded_symbols, t.achieved_load)
            )
    return out


def sweep_exchanges(
    Ns: Iterable[int], Ks: Iterable[int], seeds: Iterable[int], c: int = 1, workers: int = 1
) -> list[ExchangeRecord]:
    """Run the grid; with ``workers > 1`` tuples run in parallel, results stay in grid order."""
    seeds = list(seeds)
    grid = [Params(N, K, P, M, c) for N, K, P, M in valid_tuples(Ns, Ks)]
    if workers <= 1:
        chunks = [tuple_exchanges(p, seeds) for p in grid]
    else:
        with ProcessPoolExecutor(workers) as pool:
            chunks = list(pool.map(tuple_exchanges, grid, [seeds] * len(grid)))
    return [rec for chunk in chunks for rec in chunk]
