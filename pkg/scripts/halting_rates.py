"""Halting rate of three mutually simulating naive bots against the fixed point.

Each bot halts at once with probability eps and otherwise simulates the other
two, so the halting probability p solves p = eps + (1 - eps) p^2, giving
eps / (1 - eps) below eps = 1/2 and 1 above.
"""
import argparse
import sys
import warnings

from progeq import builtin_games as bg
from progeq.pibots import naive_two_sim
from progeq.program_vm import Fuel, estimate_outcomes


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--depth", type=int, default=200)
    ap.add_argument("--seed", type=int, default=4)
    args = ap.parse_args()
    print("eps,predicted,observed,se")
    for k in range(1, 10):
        eps = k / 10
        prof = [naive_two_sim(j, eps) for j in range(3)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est = estimate_outcomes(prof, bg.pd3_game(), args.trials, args.seed, "correlated",
                                    Fuel(depth=args.depth), players=[0])
        p = est.halted / est.trials
        want = min(1.0, eps / (1 - eps))
        print(f"{eps:.1f},{want:.4f},{p:.4f},{(p * (1 - p) / est.trials) ** 0.5:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
