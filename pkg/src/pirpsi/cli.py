"""Command-line entry point: ``pirpsi <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 verification or audit failure,
3 I/O or network error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import audit, capacity
from .errors import NetworkError, PirError, UsageError
from .field import DEFAULT_MODULUS
from .protocol import Library, Params, SideInfo, admissible_pairs, run_exchange

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_IO = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x, decimal: bool) -> str:
    return capacity.format_number(x, decimal)


def _parse_range(token: str) -> tuple[str, list[int]]:
    name, sep, spec = token.partition("=")
    if not sep:
        raise UsageError(f"sweep ranges look like N=2..4, got {token!r}")
    try:
        if ".." in spec:
            lo, hi = spec.split("..")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in spec.split(",")]
    except ValueError:
        raise UsageError(f"bad range {token!r}") from None
    if not values:
        raise UsageError(f"empty range {token!r}")
    return name.strip(), values


def _sweep_tuples(tokens: list[str]):
    ranges = dict(_parse_range(t) for t in tokens)
    unknown = set(ranges) - {"N", "K", "P", "M"}
    if unknown:
        raise UsageError(f"unknown sweep variables {sorted(unknown)}")
    if "N" not in ranges or "K" not in ranges:
        raise UsageError("a sweep needs both N and K ranges")
    for N, K, P, M in capacity.valid_tuples(ranges["N"], ranges["K"]):
        if N < 2:
            raise UsageError("sweeps need N >= 2")
        if "P" in ranges and P not in ranges["P"]:
            continue
        if "M" in ranges and M not in ranges["M"]:
            continue
        yield N, K, P, M


def _single_tuple(args) -> tuple[int, int, int, int]:
    missing = [k for k in ("N", "K", "P") if getattr(args, k) is None]
    if missing:
        raise UsageError(f"missing --{', --'.join(missing)} (or use --sweep)")
    return args.N, args.K, args.P, args.M


def _params(args) -> Params:
    N, K, P, M = _single_tuple(args)
    return Params(N, K, P, M, c=getattr(args, "c", 1), modulus=getattr(args, "modulus", DEFAULT_MODULUS))


def _check_exclusive(args) -> None:
    if getattr(args, "sweep", None) and any(getattr(args, k) is not None for k in ("N", "K", "P")):
        raise UsageError("--sweep cannot be combined with --N/--K/--P")


# -- commands -----------------------------------------------------------------


def cmd_capacity(args) -> int:
    _check_exclusive(args)
    if args.sweep:
        reports = [capacity.capacity_report(*t) for t in _sweep_tuples(args.sweep)]
        if args.format == "csv":
            sys.stdout.write(capacity.sweep_csv(reports, args.decimal))
        else:
            print(f"{'N':>3} {'K':>3} {'P':>3} {'M':>3} {'regime':>7} {'achievable':>12} {'converse':>12} optimal")
            for r in reports:
                print(
                    f"{r.N:>3} {r.K:>3} {r.P:>3} {r.M:>3} {r.regime:>7} "
                    f"{_fmt(r.achievable, args.decimal):>12} {_fmt(r.converse, args.decimal):>12} "
                    f"{'yes' if r.optimal else 'no'}"
                )
        return EXIT_OK
    r = capacity.capacity_report(*_single_tuple(args))
    tag = "optimal" if r.optimal else "achievable; capacity unknown"
    print(f"D = {_fmt(r.achievable, args.decimal)} ({tag})")
    print(f"converse bound = {_fmt(r.converse, args.decimal)}")
    print(f"regime = {r.regime}")
    if r.optimal:
        print(f"C = {_fmt(r.capacity, args.decimal)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _params(args)
    rng = np.random.default_rng(args.seed)
    pairs = list(admissible_pairs(params))
    ok = 0
    loads = set()
    for _ in range(args.trials):
        side, req = pairs[rng.integers(len(pairs))]
        lib = Library.for_params(params, int(rng.integers(2**63)))
        t = run_exchange(params, lib, req, side, int(rng.integers(2**63)))
        ok += bool(t.success)
        loads.add(t.achieved_load)
    load = ", ".join(_fmt(x, args.decimal) for x in sorted(loads))
    print(f"decoded {ok}/{args.trials} exchanges correctly")
    print(f"achieved load = {load} per decoded symbol")
    if not params.high_p:
        print("note: outside 2P >= K - M this load is not claimed optimal")
    return EXIT_OK if ok == args.trials else EXIT_FAILED


def cmd_audit(args) -> int:
    params = _params(args)
    permute = not args.no_permute
    if args.exact:
        report = audit.exact_audit(params, permute_chunks=permute)
        result = report.to_dict()
        private = report.private
    else:
        reports = audit.statistical_audit_all(
            params, args.samples, alpha=args.alpha, seed=args.seed, permute_chunks=permute
        )
        result = {"mode": "statistical", "servers": [r.to_dict() for r in reports]}
        private = all(r.passed for r in reports)
        result["private"] = private
    if args.json:
        print(json.dumps(result, indent=2, default=str))
    elif args.exact:
        if private:
            print("PRIVATE: all pairs identical")
        else:
            bad = [s["server"] for s in result["servers"] if not s["identical"]]
            print(f"LEAK: query distributions differ at servers {bad}")
    else:
        for r in reports:
            worst = min((t.p_value for t in r.tests if not t.degenerate), default=None)
            verdict = "pass" if r.passed else "FAIL"
            print(f"server {r.server}: {verdict} (min p = {worst}, threshold {r.threshold:.3g})")
        print("PRIVATE: no detectable dependence" if private else "LEAK: distributions differ")
    return EXIT_OK if private else EXIT_FAILED


def cmd_verify_identity(args) -> int:
    _check_exclusive(args)
    tuples = list(_sweep_tuples(args.sweep)) if args.sweep else [_single_tuple(args)]
    failed = 0
    for N, K, P, M in tuples:
        theorem = capacity.in_theorem_regime(N, K, P, M)
        rep = capacity.verify_reduction_identity(N, K, P, M)
        status = "OK" if rep.ok else "FAIL"
        if theorem and not rep.ok:
            failed += 1
        note = "" if theorem else "  (outside theorem regime)"
        print(
            f"N={N} K={K} P={P} M={M} {rep.regime}: "
            f"p-q={_fmt(rep.lhs, args.decimal)} p(K-M)={_fmt(rep.rhs, args.decimal)} {status}{note}"
        )
    return EXIT_FAILED if failed else EXIT_OK


def cmd_gen_library(args) -> int:
    from .wire import write_library

    if args.L is None:
        if args.N is None:
            raise UsageError("give --L or --N (with --c) to size the files")
        args.L = args.c * args.N**2
    lib = Library.random(args.K, args.L, args.seed, args.modulus)
    write_library(args.out, lib)
    print(f"wrote {args.K} files x {args.L} symbols over GF({args.modulus}) to {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .net import serve

    params = _params(args) if args.K is not None else None

    def ready(addr):
        print(f"listening on {addr}", flush=True)

    serve(args.library, args.listen, params, on_ready=ready)
    return EXIT_OK


def _index_list(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated indices, got {text!r}") from None


def cmd_fetch(args) -> int:
    from .net import fetch
    from .wire import read_library

    params = _params(args)
    local = read_library(args.side_from)
    side_idx = _index_list(args.side)
    side = SideInfo.from_library(local, side_idx)
    servers = [s for s in args.servers.split(",") if s]
    t = fetch(servers, params, _index_list(args.request), side, args.seed,
              reference=local if args.verify else None)
    print(f"downloaded {t.downloaded_symbols} symbols, load = {_fmt(t.achieved_load, args.decimal)}")
    if args.out:
        np.save(args.out, np.stack([t.decoded[i] for i in t.request]))
    if t.success is None:
        print(f"decoded files {list(t.request)}")
        return EXIT_OK
    print("decoded output matches" if t.success else "decoded output MISMATCH")
    return EXIT_OK if t.success else EXIT_FAILED


# -- parser -------------------------------------------------------------------


def _add_tuple(p, need_c: bool = False):
    p.add_argument("--N", type=int)
    p.add_argument("--K", type=int)
    p.add_argument("--P", type=int)
    p.add_argument("--M", type=int, default=0)
    if need_c:
        p.add_argument("--c", type=int, default=1, help="chunk size in symbols")
        p.add_argument("--modulus", type=int, default=DEFAULT_MODULUS)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pirpsi", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("capacity", help="achievable load and converse bound")
    _add_tuple(p)
    p.add_argument("--sweep", nargs="+", metavar="VAR=LO..HI")
    p.add_argument("--format", choices=("csv", "table"), default="table")
    p.add_argument("--decimal", action="store_true")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("simulate", help="run in-memory exchanges and check decoding")
    _add_tuple(p, need_c=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--decimal", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("audit", help="check that queries reveal nothing about (S, P)")
    _add_tuple(p, need_c=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true")
    mode.add_argument("--samples", type=int, default=10**5)
    p.add_argument("--alpha", type=float, default=audit.DEFAULT_ALPHA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-permute", action="store_true", help="negative control: disable chunk scrambling")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("verify-identity", help="check p(N,K) - q(N,K,M) = p(N,K-M)")
    _add_tuple(p)
    p.add_argument("--sweep", nargs="+", metavar="VAR=LO..HI")
    p.add_argument("--decimal", action="store_true")
    p.set_defaults(func=cmd_verify_identity)

    p = sub.add_parser("serve", help="answer queries for one library over TCP")
    p.add_argument("--library", required=True)
    p.add_argument("--listen", default="127.0.0.1:0")
    _add_tuple(p, need_c=True)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("fetch", help="retrieve files from running servers")
    p.add_argument("--servers", required=True, help="comma-separated host:port list")
    _add_tuple(p, need_c=True)
    p.add_argument("--request", required=True, help="comma-separated 0-based file indices")
    p.add_argument("--side", default="", help="comma-separated 0-based side-information indices")
    p.add_argument("--side-from", required=True, help="library file holding the user's side information")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--verify", action="store_true", help="compare output with --side-from")
    p.add_argument("--out", help="save decoded files as .npy")
    p.add_argument("--decimal", action="store_true")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("gen-library", help="write a random library file")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--L", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--c", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modulus", type=int, default=DEFAULT_MODULUS)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_library)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pirpsi: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NetworkError, OSError) as exc:
        print(f"pirpsi: {exc}", file=sys.stderr)
        return EXIT_IO
    except PirError as exc:
        print(f"pirpsi: verification failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
