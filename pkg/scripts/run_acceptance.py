"""Run the acceptance battery and write its JSON report.

    python3 scripts/run_acceptance.py --out acceptance.json [--quick] [--filter 7 ...]
"""
import argparse
import sys

from progeq.cli import emit
from progeq.suite import run_suite


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="acceptance.json")
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--filter", action="append")
    args = ap.parse_args()
    report = run_suite(args.filter, seed=args.seed, quick=args.quick)
    emit(report, "json", args.out)
    for row in report["criteria"]:
        print(f"{'PASS' if row['passed'] else 'FAIL'} {row['id']:>2} {row['name']:<24} {row['seconds']:8.1f}s")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
