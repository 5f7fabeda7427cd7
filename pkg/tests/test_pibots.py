import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from progeq import builtin_games as bg
from progeq.game_core import MixedStrategy
from progeq.pibots import (ActionSequence, PunishmentMap, ScreenedHistory, build_correlated_bot, build_policy,
                           build_general_simulationist_bot, build_uncorrelated_bot, constant_bot, double_sample,
                           intro_policy, peek_bot, pirates_policy, q_mix, q_mix_deviated, sequence_follower,
                           threshold_bot, trust_mixed_policy)
from progeq.program_vm import R, Sentinel, estimate_outcomes, run_trial, trial_seed
from progeq.rand_streams import DeltaSchedule, SharedStream, derive_seed

C, D, L = 0, 1, 2


def test_screened_history_first_deviation():
    alpha = ActionSequence.constant((0, 0, 0))
    h = ScreenedHistory([(0, 0, 0), (0, R(1), 0), (1, 0, 0)])
    assert h.first_deviation(alpha) == (1, 1)
    assert ScreenedHistory([(0, 0, 0)]).first_deviation(alpha) is None


def test_action_sequence_prefix_then_cycle():
    seq = ActionSequence([(1, 1)], [(0, 0), (0, 1)])
    assert [seq[t] for t in range(5)] == [(1, 1), (0, 0), (0, 1), (0, 0), (0, 1)]
    assert seq.prefix(3) == [(1, 1), (0, 0), (0, 1)]


def test_pirates_policy():
    pol = pirates_policy(0)
    assert pol(ScreenedHistory([]), 0.3) == C
    assert pol(ScreenedHistory([(C, C, C)] * 4), 0.3) == C
    assert pol(ScreenedHistory([(C, C, C), (C, D, C)]), 0.3) == L
    assert pol(ScreenedHistory([(C, C, R(2))]), 0.3) == L


def test_intro_policy_targets_the_first_defector():
    h = ScreenedHistory([(0, 0, 0), (0, 0, 1), (0, 1, 0)])
    assert intro_policy(0)(h, 0.5) == 2  # P3
    assert intro_policy(1)(h, 0.5) == D
    assert intro_policy(2)(ScreenedHistory([(0, 0, 0)]), 0.5) == C


def test_trust_mixed_policy_alternates():
    p1, p2 = trust_mixed_policy(0), trust_mixed_policy(1)
    K, S, G, Cc = 0, 1, 0, 1
    assert [p2(ScreenedHistory([(S, Cc)] * t), 0.5) for t in range(4)] == [Cc, G, Cc, G]
    assert p1(ScreenedHistory([(S, G)]), 0.5) == K
    assert p1(ScreenedHistory([(S, Cc)]), 0.5) == S
    assert p1(ScreenedHistory([(S, Cc), (S, G)]), 0.5) == S  # even length


def test_sequence_follower_with_punishment_map():
    game = bg.pd2_game()
    alpha = ActionSequence.constant((0, 0))
    pm = {0: PunishmentMap(0, {1: {1: MixedStrategy.pure(1, 2), "R": MixedStrategy((F(1, 2), F(1, 2)))}})}
    pol = sequence_follower(1, alpha, pm, game=game)
    assert pol(ScreenedHistory([(0, 0)]), 0.9) == 0
    assert pol(ScreenedHistory([(1, 0)]), 0.9) == 1
    assert pol(ScreenedHistory([(R(0), 0)]), 0.2) == 0
    assert pol(ScreenedHistory([(R(0), 0)]), 0.7) == 1


def test_build_policy_rejects_unknown_kinds():
    with pytest.raises(ValueError):
        build_policy({"kind": "nope"}, 0)
    assert build_policy({"kind": "constant", "action": "D"}, 0, bg.pd2_game())(ScreenedHistory([]), 0.1) == 1


def test_correlated_pirates_equilibrium_always_cooperates():
    game = bg.pirates_game()
    prof = [build_correlated_bot(j, 0.2, pirates_policy(j)) for j in range(3)]
    est = estimate_outcomes(prof, game, 300, 5, "correlated")
    assert est.counts == {(C, C, C): 300}


def test_uncorrelated_intro_detection_rate():
    """Against a constant defector, player 1 punishes exactly when its time step is positive."""
    game = bg.intro_game()
    eps = 0.3
    prof = [build_uncorrelated_bot(j, eps, intro_policy(j)) for j in range(3)]
    prof[1] = constant_bot(1, D)
    n = 4000
    est = estimate_outcomes(prof, game, n, 6, "uncorrelated")
    p = est.marginal(0, 3)[1]
    assert abs(p - (1 - eps)) < 4 * math.sqrt(eps * (1 - eps) / n)


@given(st.integers(0, 2 ** 32))
@settings(max_examples=20)
def test_q_mix_at_zero_is_the_base(seed):
    game = bg.pirates_game()
    prof = [build_correlated_bot(j, 0.4, pirates_policy(j)) for j in range(3)]
    dev = list(prof)
    dev[0] = q_mix(prof[0], 0.0, MixedStrategy.pure(D, 3), 0.4)
    assert run_trial(prof, seed, "correlated").outcome == run_trial(dev, seed, "correlated").outcome


def test_q_mix_deviation_frequency():
    eps, q = 0.2, 0.35
    n = 5000
    hits = sum(q_mix_deviated(SharedStream(derive_seed(9, k)).view(), q, eps) for k in range(n))
    assert abs(hits / n - q) < 4 * math.sqrt(q * (1 - q) / n)


def test_q_mix_deviates_at_top_level_only_when_the_coin_says_so():
    eps, q = 0.3, 0.5
    base = build_correlated_bot(0, eps, pirates_policy(0))
    prof = [q_mix(base, q, MixedStrategy.pure(D, 3), eps), constant_bot(1, C), constant_bot(2, C)]
    for k in range(200):
        s = trial_seed(4, k)
        view = SharedStream(derive_seed(s, "shared")).view()
        out = run_trial(prof, s, "correlated").outcome[0]
        assert (out == D) == q_mix_deviated(view, q, eps)


def test_double_sample_rewards_only_fair_partners():
    game = bg.trust_simple_game()
    K, S, G, Fa = 0, 1, 0, 1
    assert run_trial([double_sample(0, 1, keep=K, share=S, hoped=Fa), constant_bot(1, Fa)], 1).outcome == (S, Fa)
    assert run_trial([double_sample(0, 1, keep=K, share=S, hoped=Fa), constant_bot(1, G)], 1).outcome == (K, G)


def test_threshold_bot_switches_at_t0():
    eps = 0.5
    prof = [build_correlated_bot(j, eps, pirates_policy(j)) for j in range(3)]
    deep = threshold_bot(prof[0], 10 ** 6, MixedStrategy.pure(D, 3))
    shallow = threshold_bot(prof[0], 0, MixedStrategy.pure(D, 3))
    for k in range(30):
        s = trial_seed(3, k)
        assert run_trial([deep] + prof[1:], s).outcome == run_trial(prof, s).outcome
        assert run_trial([shallow] + prof[1:], s).outcome[0] == D


def test_peek_bot_never_simulates_itself():
    prof = [peek_bot(0, [1, 2], fallback=1, follow=1), constant_bot(1, 0), constant_bot(2, 1)]
    res = run_trial(prof, 2, trace=True)
    assert res.outcome[0] == 0
    assert all(node.player != 0 for node in res.trace.nodes() if node.kind == "apply*")


def test_schedule_bot_copies_an_observed_opponent():
    schedules = [DeltaSchedule.point(0), DeltaSchedule.point(1)]

    def copy_player_one(T, obs):
        seen = obs[(0, 0)]
        return seen.samples[0] if all(seen.consistent) else 1

    ref = constant_bot(0, 1)
    bot = build_general_simulationist_bot(1, schedules, t0=1, k=3, policy=copy_player_one, references={0: ref})
    res = run_trial([constant_bot(0, 1), bot], 7)
    assert res.outcome == (1, 1)
    # a player who differs from the reference is flagged
    res = run_trial([constant_bot(0, 0), bot], 7)
    assert res.outcome == (0, 1)
