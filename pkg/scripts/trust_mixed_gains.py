"""Exact gain of the q-mixed Grab deviation in the alternating trust game.

Prints the gain on a (q, eps) grid and the largest eps for which every
q in (0, 1] loses; optionally checks one eps by simulation.
"""
import argparse
import math
import sys
from fractions import Fraction as F

from progeq import builtin_games as bg
from progeq.equilibrium_analysis import empirical_best_response, trust_mixed_gain
from progeq.game_core import MixedStrategy
from progeq.pibots import build_uncorrelated_bot, q_mix, trust_mixed_policy
from progeq.program_vm import Fuel


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--simulate", type=float, help="also estimate gains at this eps")
    ap.add_argument("--trials", type=int, default=5000)
    args = ap.parse_args()
    qs = [F(k, 10) for k in range(1, 11)]
    eps_grid = [F(1, 100), F(1, 20), F(1, 10), F(1, 5), F(1, 4), F(3, 10), F(2, 5), F(1, 2)]
    print("eps\\q," + ",".join(str(q) for q in qs))
    for eps in eps_grid:
        print(f"{eps}," + ",".join(f"{float(trust_mixed_gain(q, eps)):+.4f}" for q in qs))
    # small-q slope 2 - 4g - 2g^2 with g = (1-eps)/(2-eps) is negative iff eps < 1 - 1/sqrt(2)
    print(f"every q loses for eps < {1 - 1 / math.sqrt(2):.4f}")
    if args.simulate:
        eps = args.simulate
        prof = [build_uncorrelated_bot(j, eps, trust_mixed_policy(j)) for j in range(2)]
        fam = [({"q": q}, q_mix(prof[1], float(q), MixedStrategy.pure(0, 2), eps)) for q in qs]
        reps = empirical_best_response(prof, bg.trust_mixed_game(), 1, fam, args.trials, 11, "uncorrelated",
                                       Fuel(depth=10_000, calls=10 ** 8), paired=True)
        for r in reps:
            exact = float(trust_mixed_gain(r.params["q"], eps))
            print(f"q={r.params['q']}: simulated {r.gain:+.4f} (se {r.gain_se:.4f}), exact {exact:+.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
