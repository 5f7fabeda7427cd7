import json
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from progeq import builtin_games as bg
from progeq.game_core import MixedStrategy
from progeq.pibots import (build_correlated_bot, constant_bot, mixed_bot, naive_two_sim, pirates_policy,
                           private_coin_bot)
from progeq.program_vm import (ContractViolation, Fuel, NonHalting, Program, Sentinel, estimate_outcomes,
                               merge_estimates, replay_star, run_trial, trace_statistics, trial_seed,
                               truncated_call_growth)


def loop_forever(player):
    return Program(player, "loop", lambda call: call.apply(player))


def countdown(player, levels):
    """Simulate itself on ever shorter suffixes until element 0 drops below 1/levels."""
    def behavior(call):
        if call.shared.element(0) < 1 / levels:
            return 0
        return call.apply(player, call.shared.suffix(1))
    return Program(player, f"countdown({levels})", behavior)


def peek_private(player, action=1):
    def behavior(call):
        call.private.element(0)
        return action
    return Program(player, "peek", behavior)


def star_observer(player, other):
    """Return 1 when the screened simulation of ``other`` comes back as R."""
    def behavior(call):
        seen = call.apply_star(other)
        return 1 if isinstance(seen, Sentinel) else 0
    return Program(player, "observer", behavior)


def pirates_profile(eps, coin=True):
    prof = [build_correlated_bot(j, eps, pirates_policy(j)) for j in range(3)]
    if coin:
        prof[2] = private_coin_bot(2, MixedStrategy((F(9, 10), F(0), F(1, 10))))
    return prof


def test_constant_profile():
    res = run_trial([constant_bot(0, 1), constant_bot(1, 0)], 3)
    assert res.outcome == (1, 0)
    assert res.halted


def test_self_loop_exhausts_depth():
    res = run_trial([loop_forever(0), constant_bot(1, 0)], 1, fuel=Fuel(depth=50))
    assert isinstance(res.outcome[0], NonHalting)
    assert res.outcome[0].kind == "depth"
    assert res.outcome[1] == 0
    assert not res.halted


def test_call_budget_is_enforced():
    res = run_trial([loop_forever(0)], 1, fuel=Fuel(depth=10_000, calls=20))
    assert isinstance(res.outcome[0], NonHalting) and res.outcome[0].kind == "calls"


def test_bad_outputs_are_contract_violations():
    for bad in (lambda call: "C", lambda call: True, lambda call: 1.0):
        with pytest.raises(ContractViolation):
            run_trial([Program(0, "bad", bad)], 1)


def test_programs_must_sit_in_their_slot():
    with pytest.raises(ValueError):
        run_trial([constant_bot(1, 0), constant_bot(0, 0)], 1)


def test_apply_star_screens_private_reads():
    prof = [star_observer(0, 1), peek_private(1)]
    res = run_trial(prof, 5, "correlated")
    assert res.outcome == (1, 1)
    # without the private read nothing is screened
    res = run_trial([star_observer(0, 1), constant_bot(1, 1)], 5, "correlated")
    assert res.outcome == (0, 1)


def test_screening_propagates_through_plain_apply():
    def relay(call):
        return call.apply(1)
    prof = [star_observer(0, 2), Program(1, "peeker", lambda call: (call.private.element(0), 0)[1]),
            Program(2, "relay", relay)]
    # player 3 relays player 2, who reads its own private stream; the apply* of
    # player 3 therefore depends on a private read and is screened
    assert run_trial(prof, 9, "correlated").outcome[0] == 1


@given(st.integers(0, 2 ** 40))
@settings(max_examples=25)
def test_memo_does_not_change_outcomes(seed):
    # without memo the call tree is exponential in T, so rare long time
    # steps can exhaust the call budget; only those runs are exempt
    prof = pirates_profile(0.5)
    a = run_trial(prof, seed, "correlated", memo=True)
    b = run_trial(prof, seed, "correlated", memo=False)
    assert a.halted
    if b.halted:
        assert a.outcome == b.outcome
    else:
        assert all(isinstance(x, NonHalting) and x.kind == "calls" for x in b.outcome if not isinstance(x, int))


def test_trace_replay_is_private_seed_independent():
    prof = pirates_profile(0.5)
    nodes = 0
    for k in range(20):
        res = run_trial(prof, trial_seed(1, k), "correlated", trace=True)
        for node in res.trace.nodes():
            if node.kind == "apply*" and not node.memo_hit:
                nodes += 1
                for s in range(5):
                    assert replay_star(node, 1000 * k + s) == node.output
    assert nodes > 0


def test_replay_rejects_plain_nodes():
    res = run_trial(pirates_profile(0.5), 3, "correlated", trace=True)
    plain = next(n for n in res.trace.nodes() if n.kind == "apply")
    with pytest.raises(ValueError):
        replay_star(plain, 1)


def test_trace_exports_are_consistent():
    res = run_trial(pirates_profile(0.4, coin=False), 17, "correlated", trace=True)
    nodes = list(res.trace.nodes())
    assert len(nodes) == res.trace.total_calls
    rows = res.trace.to_csv().strip().splitlines()
    assert len(rows) == len(nodes) + 1
    doc = json.loads(res.trace.to_json())
    assert doc["total_calls"] == res.trace.total_calls

    def count(d):
        return 1 + sum(count(c) for c in d["children"])
    assert sum(count(r) for r in doc["roots"]) == len(nodes)


def test_distinct_star_bounded_by_n_times_T():
    from progeq.rand_streams import SharedStream, derive_seed
    eps = 0.1
    prof = pirates_profile(eps, coin=False)
    for k in range(40):
        s = trial_seed(2, k)
        res = run_trial(prof, s, "correlated")
        T = SharedStream(derive_seed(s, "shared")).view().first_below(eps)
        assert res.trace.distinct_star <= 3 * T


def test_deep_recursion_runs_in_a_worker_thread():
    levels = 1 << 30  # effectively never stops early on its own
    prof = [countdown(0, levels)]
    res = run_trial(prof, 1, fuel=Fuel(depth=3000, calls=10_000))
    assert isinstance(res.outcome[0], NonHalting) and res.outcome[0].kind == "depth"
    assert res.trace.total_calls > 2500


def test_naive_two_sim_halting_rate():
    eps = 0.25
    prof = [naive_two_sim(j, eps) for j in range(3)]
    with pytest.warns(RuntimeWarning):
        est = estimate_outcomes(prof, bg.pd3_game(), 3000, 4, "correlated", Fuel(depth=200), players=[0])
    p = est.halted / est.trials
    se = math.sqrt((1 / 3) * (2 / 3) / 3000)
    assert abs(p - 1 / 3) < 4 * se


def test_chunked_estimates_merge_to_the_single_run():
    game = bg.pirates_game()
    prof = pirates_profile(0.3, coin=False)
    whole = estimate_outcomes(prof, game, 60, 11, "correlated")
    parts = [estimate_outcomes(prof, game, 20, 11, "correlated", offset=o) for o in (0, 20, 40)]
    merged = merge_estimates(parts)
    assert merged.counts == whole.counts
    assert merged.mean_payoff == pytest.approx(whole.mean_payoff)
    assert merged.stderr == pytest.approx(whole.stderr)
    assert merged.steps == whole.steps


def test_estimates_are_deterministic():
    game = bg.pirates_game()
    prof = [mixed_bot(j, MixedStrategy.uniform(3)) for j in range(3)]
    a = estimate_outcomes(prof, game, 200, 8, "uncorrelated")
    b = estimate_outcomes(prof, game, 200, 8, "uncorrelated")
    assert a.counts == b.counts and a.mean_payoff == b.mean_payoff
    assert sum(a.counts.values()) == 200


def test_uniform_mixing_payoff_matches_expected_utility():
    from progeq.game_core import expected_utility
    game = bg.pirates_game()
    strat = MixedStrategy.uniform(3)
    prof = [mixed_bot(j, strat) for j in range(3)]
    est = estimate_outcomes(prof, game, 6000, 8, "uncorrelated")
    exact = expected_utility(game, [strat] * 3)
    for i in range(3):
        assert abs(est.mean_payoff[i] - float(exact[i])) < 4 * est.stderr[i]


def test_trace_statistics_and_growth():
    prof = pirates_profile(0.5, coin=False)
    results = [run_trial(prof, trial_seed(6, k), "correlated") for k in range(30)]
    summary = trace_statistics(results, calls_bound=1e9)
    assert summary.halting_rate == 1.0 and not summary.growth_flag
    growth = truncated_call_growth(lambda: pirates_profile(0.5, coin=False), [10, 100, 1000], 20, 6)
    assert growth == sorted(growth)
    assert growth[0] <= 10
