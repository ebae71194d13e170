"""Run the full Monte Carlo verification suite and write one JSON line per check.

    python3 scripts/run_verify.py --seed 1 --output verify.jsonl
"""

import argparse
import sys
import time

from isocomplexity.mc_verifier import VERIFY_CHECKS, run_verify
from isocomplexity.structure_function import FieldParams, make_builtin


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mu", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--checks", nargs="+", choices=sorted(VERIFY_CHECKS))
    parser.add_argument("--output", default="-")
    args = parser.parse_args()

    start = time.perf_counter()
    outcomes = run_verify(FieldParams(make_builtin("log-correlator"), args.mu), args.checks, seed=args.seed)
    lines = [o.to_json() for o in outcomes]
    if args.output == "-":
        print("\n".join(lines))
    else:
        with open(args.output, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    for o in outcomes:
        print(f"{'PASS' if o.passed else 'FAIL'}  {o.name:<20} {o.seconds:6.1f}s  ({o.tolerance})", file=sys.stderr)
    print(f"total {time.perf_counter() - start:.1f}s", file=sys.stderr)
    return 0 if all(o.passed for o in outcomes) else 4


if __name__ == "__main__":
    sys.exit(main())
