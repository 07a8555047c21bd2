#!/usr/bin/env python3
"""Privacy audits: exact enumeration on tiny tuples, chi-square on larger ones.

Each audit is repeated with chunk scrambling disabled as a negative control.
"""

import argparse
import json
import sys
import time

from pirpsi.audit import exact_audit, statistical_audit_all
from pirpsi.protocol import Params

EXACT = [(2, 2, 1, 0), (2, 3, 1, 1), (2, 3, 2, 0)]
STATISTICAL = [(2, 4, 2, 1), (3, 4, 2, 1), (2, 5, 1, 2)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10**5)
    ap.add_argument("--alpha", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-exact", action="store_true")
    args = ap.parse_args(argv)

    rows = []
    ok = True
    if not args.skip_exact:
        for tup in EXACT:
            for permute in (True, False):
                t0 = time.perf_counter()
                rep = exact_audit(Params(*tup), permute_chunks=permute)
                rows.append({"mode": "exact", "tuple": tup, "scrambled": permute,
                             "private": rep.private, "seconds": round(time.perf_counter() - t0, 2)})
                ok &= rep.private == permute
    for tup in STATISTICAL:
        for permute in (True, False):
            t0 = time.perf_counter()
            reps = statistical_audit_all(Params(*tup), args.samples, alpha=args.alpha,
                                         seed=args.seed, permute_chunks=permute)
            passed = all(r.passed for r in reps)
            worst = min((t.p_value for r in reps for t in r.tests if not t.degenerate), default=None)
            rows.append({"mode": "statistical", "tuple": tup, "scrambled": permute, "private": passed,
                         "min_p": worst, "seconds": round(time.perf_counter() - t0, 2)})
            ok &= passed == permute
    for row in rows:
        print(json.dumps(row))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
