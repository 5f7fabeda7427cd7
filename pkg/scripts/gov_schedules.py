"""Government/citizens game: the two-block schedules pass, geometric ones fail.

Prints the exact certificate, then sweeps geometric (eps_gov, eps_citizen)
pairs and reports each one's worst deviation gain.
"""
import sys
from fractions import Fraction as F

from progeq import builtin_games as bg
from progeq.equilibrium_analysis import gov_closed_form_certificate, gov_instance, simulationist_check
from progeq.rand_streams import DeltaSchedule


def main() -> int:
    cert = gov_closed_form_certificate()
    print(f"certificate: government={cert.government} (q < {cert.government_bound}, "
          f"max detection {cert.max_detection}), citizens={cert.citizens}")
    rep = simulationist_check(gov_instance(), early_exit=False)
    print(f"two-block schedules: passed={rep.passed}, worst gains "
          + ", ".join(f"{w.gain:+.4g}" for w in rep.worst))
    game = bg.gov_citizens_game()
    grid = (F(1, 100), F(1, 20), F(1, 10), F(1, 5), F(1, 2))
    print("eps_gov,eps_citizen,passed,worst_gain")
    for eg in grid:
        for ec in grid:
            inst = gov_instance(game, (DeltaSchedule.geometric(eg), DeltaSchedule.geometric(ec)))
            res = simulationist_check(inst, early_exit=False)
            print(f"{eg},{ec},{res.passed},{max(w.gain for w in res.worst):+.4g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
