import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from progeq import builtin_games as bg
from progeq.game_core import MixedStrategy, minimax
from progeq.pibots import (ActionSequence, ScreenedHistory, build_correlated_bot, constant_bot, grim_minimax,
                           pirates_policy)
from progeq.program_vm import R, Sentinel
from progeq.repeated_game import (CompatibilityError, PolicyPair, RepeatedGameConfig, SequenceTooCoarse,
                                  construct_action_sequence, correspondence_check, simulate_repeated,
                                  synthesize_folk_policies)


def test_constant_pairs_total_is_payoff_over_eps():
    game = bg.pd2_game()
    eps = 0.25
    pairs = [PolicyPair.constant(0, 2, 0), PolicyPair.constant(1, 2, 1)]
    est = simulate_repeated(RepeatedGameConfig(game, eps), pairs, 4000, 3)
    u = [float(x) for x in game.u((0, 1))]
    for i in range(2):
        if u[i] == 0:
            assert est.mean_total[i] == 0
        else:
            assert abs(est.mean_total[i] - u[i] / eps) < 4 * est.stderr[i]
    mean_len = sum(k * c for k, c in est.length_counts.items()) / 4000
    assert abs(mean_len - 1 / eps) < 4 * math.sqrt((1 - eps) / eps ** 2 / 4000)


def test_incompatible_pair_is_rejected():
    bad = PolicyPair(0, 2, lambda h, q: (F(1), F(0)), lambda h, q: (F(0), F(1), F(0)))
    with pytest.raises(CompatibilityError):
        bad.check([], 0.5)
    with pytest.raises(CompatibilityError):
        simulate_repeated(RepeatedGameConfig(bg.pd2_game(), 0.5), [bad, PolicyPair.constant(1, 2, 0)], 5, 1,
                          check=True)


def test_config_validates_eps():
    with pytest.raises(ValueError):
        RepeatedGameConfig(bg.pd2_game(), 0)


def test_associated_pair_of_grim_minimax_screens_mixed_punishment():
    game = bg.intro_game()
    pol = grim_minimax(1, game, (0, 0, 0))
    pair = PolicyPair.from_policy(pol, 1, 2, private=True)
    calm = ScreenedHistory([(0, 0, 0)])
    assert pair.tau(calm, 0.3) == (1, 0) and pair.tau_star(calm, 0.3)[-1] == 0
    punishing = ScreenedHistory([(0, 0, 1)])
    strat = minimax(game, 2).punisher_profile[1]
    if strat.is_pure:
        assert pair.tau_star(punishing, 0.3)[-1] == 0
    else:
        assert pair.tau_star(punishing, 0.3)[-1] == 1
    pair.check(punishing, 0.3)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 1)), max_size=5),
       st.floats(0, 1, exclude_max=True), st.sampled_from(["grim", "finite"]))
def test_folk_pairs_are_compatible(history, q, variant):
    game = bg.intro_game()
    pairs = synthesize_folk_policies(game, ActionSequence.constant((0, 0, 0)), variant=variant)
    for pair in pairs:
        pair.check(history, q)
        a, seen = pair.draw(history, q, 0.5)
        assert seen == a or isinstance(seen, Sentinel)


def test_action_sequence_hits_the_target_within_delta():
    game = bg.trust_simple_game()
    v = (F(7, 2), F(1))
    eps, delta = F(1, 20), F(1, 2)
    sched = construct_action_sequence(game, v, eps, delta)
    assert sum(sched.discounted_weights().values()) == 1
    for tail in sched.tails:
        assert max(abs(t - x) for t, x in zip(tail, v)) <= delta
    assert sum(sched.weights.values()) == 1


def test_action_sequence_rejects_coarse_eps():
    game = bg.trust_simple_game()
    with pytest.raises(SequenceTooCoarse):
        construct_action_sequence(game, (F(7, 2), F(1)), F(9, 10), F(1, 100))


def test_action_sequence_rejects_infeasible_targets():
    with pytest.raises(ValueError):
        construct_action_sequence(bg.trust_simple_game(), (10, 10), F(1, 10), F(1))


def test_correspondence_is_exact_at_eps_one():
    game = bg.pirates_game()
    prof = [build_correlated_bot(j, 1.0, pirates_policy(j)) for j in range(3)]
    rep = correspondence_check(prof, game, 1.0, 100, 3)
    assert rep.exact and rep.passed
    assert rep.program_mean == (10, 10, 10)


def test_correspondence_with_a_constant_deviator():
    game = bg.pirates_game()
    prof = [constant_bot(0, 1)] + [build_correlated_bot(j, 0.3, pirates_policy(j)) for j in (1, 2)]
    rep = correspondence_check(prof, game, 0.3, 3000, 8)
    assert rep.passed
