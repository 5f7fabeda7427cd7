"""Monte Carlo deviation gain across epsilon, next to the closed-form gain.

Prints CSV: family, eps, formula gain, estimated gain, stderr. The sign of
both columns should flip at the listed threshold.
"""
import argparse
import csv
import sys

from progeq import builtin_games as bg
from progeq.equilibrium_analysis import empirical_best_response, epsilon_thresholds, threshold_gain
from progeq.game_core import MixedStrategy
from progeq.pibots import (build_correlated_bot, build_uncorrelated_bot, intro_policy, mixed_bot,
                           pirates_policy, q_mix, random_opponent_sim)
from progeq.rand_streams import derive_seed


def family(name: str, eps: float):
    """(game, profile, deviator, deviating program, mode)."""
    if name == "intro":
        prof = [build_uncorrelated_bot(j, eps, intro_policy(j)) for j in range(3)]
        return bg.intro_game(), prof, 1, q_mix(prof[1], 1.0, MixedStrategy.pure(1, 2), eps), "uncorrelated"
    if name == "pd3":
        prof = [random_opponent_sim(j, eps) for j in range(3)]
        return bg.pd3_game(), prof, 1, mixed_bot(1, MixedStrategy.pure(1, 2)), "uncorrelated"
    prof = [build_correlated_bot(j, eps, pirates_policy(j)) for j in range(3)]
    return bg.pirates_game(), prof, 0, q_mix(prof[0], 1.0, MixedStrategy.pure(1, 3), eps), "correlated"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--points", type=int, default=7, help="grid points between 0.5x and 1.5x the threshold")
    args = ap.parse_args()
    out = csv.writer(sys.stdout)
    out.writerow(["family", "threshold", "eps", "formula_gain", "mc_gain", "mc_se"])
    for name, th in epsilon_thresholds().items():
        for k in range(args.points):
            eps = float(th.threshold) * (0.5 + k / (args.points - 1))
            game, prof, i, dev, mode = family(name, eps)
            rep = empirical_best_response(prof, game, i, [({"q": 1}, dev)], args.trials,
                                          derive_seed(args.seed, name, k), mode, paired=True)[0]
            out.writerow([name, th.threshold, f"{eps:.5f}", f"{threshold_gain(name, eps, 1.0):.5f}",
                          f"{rep.gain:.5f}", f"{rep.gain_se:.5f}"])
            sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
