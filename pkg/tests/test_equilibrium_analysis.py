import itertools
from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings, strategies as st

from progeq import builtin_games as bg
from progeq.equilibrium_analysis import (_maxmin, AnomalyError, ExcessiveNonHalting, SimulationistInstance, cor7_check,
                                         detection_schedule_2p, empirical_best_response, epsilon_thresholds,
                                         example3_profiles, example3_values, geometric_instance,
                                         gov_closed_form_certificate, independent_detection_value, pirates_chain,
                                         pirates_impossibility_search, prop5_check, prop6_check,
                                         simulationist_bound, simulationist_check, threshold_gain,
                                         trust_mixed_gain)
from progeq.game_core import MixedStrategy, NormalFormGame, expected_utility, minimax
from progeq.pibots import build_uncorrelated_bot, constant_bot, q_mix, trust_mixed_policy
from progeq.program_vm import Fuel, Program, estimate_outcomes
from progeq.rand_streams import DeltaSchedule

from strategies import games

probs = st.fractions(0, 1, max_denominator=24)


# example 3 -----------------------------------------------------------------------------

def test_example3_headline_values():
    assert example3_values(F(3, 4)) == (F(43, 4), F(341, 32))


@given(probs)
def test_example3_zero_eps_polynomials(q):
    with_l, with_d = example3_values(q)
    assert with_l == 10 + 4 * q - q ** 2 - 4 * q ** 3
    assert with_d == 14 * q + 10 * (1 - q) ** 3


@given(probs, probs)
def test_example3_three_routes_agree(q, eps):
    """closed form == expected utility of the mixed profiles == detection model on the table."""
    game = bg.pirates_game()
    closed = example3_values(q, eps)
    by_profile = tuple(expected_utility(game, prof)[0] for prof in example3_profiles(q, eps))
    C, D, L = 0, 1, 2
    by_detection = tuple(independent_detection_value(game, (C, C, C), 0, D, {1: p, 2: p}, q, eps) for p in (L, D))
    assert closed == by_profile == by_detection


def test_example3_rejects_bad_q():
    with pytest.raises(ValueError):
        example3_values(F(3, 2))


# thresholds -----------------------------------------------------------------------------

def root_of_linear(f):
    """Root in eps of a function that the caller asserts is affine in eps."""
    a, b, c = f(F(0)), f(F(1, 2)), f(F(1))
    assert b - a == c - b
    return -a / (2 * (b - a))


def test_intro_threshold_from_the_payoff_table():
    game = bg.intro_game()
    # player 2 defects; player 1 answers with P2, player 3 defects, each on detection
    gain = lambda e: independent_detection_value(game, (0, 0, 0), 1, 1, {0: 1, 2: 1}, 1, e) - 6
    assert root_of_linear(gain) == epsilon_thresholds()["intro"].threshold == F(1, 6)


def pd3_gain_oracle(eps):
    """Copy-a-random-opponent bots: a non-deviator defects with the fixed point
    p = (1-eps)(1/2 + p/2); the two are independent."""
    game = bg.pd3_game()
    p = (1 - eps) / (1 + eps)
    other = MixedStrategy((1 - p, p))
    dev = expected_utility(game, [other, MixedStrategy.pure(1, 2), other])[1]
    return dev - game.u((0, 0, 0))[1]


@pytest.mark.parametrize("eps", [F(1, 10), F(1, 4), F(1, 3), F(1, 2), F(4, 5)])
def test_pd3_gain_matches_fixed_point_oracle(eps):
    assert threshold_gain("pd3", float(eps), 1.0) == pytest.approx(float(pd3_gain_oracle(eps)))


def test_pd3_threshold_sign_change():
    t = epsilon_thresholds()["pd3"].threshold
    assert t == F(1, 3)
    assert pd3_gain_oracle(t) == 0
    assert pd3_gain_oracle(t * F(4, 5)) < 0 < pd3_gain_oracle(t * F(6, 5))


def test_pirates_correlated_threshold():
    # always deviating: undetected only at time step 0 (14 instead of 10), else punished with L (9)
    t = epsilon_thresholds()["pirates-correlated"].threshold
    assert t == F(1, 5)
    for e in (0.1, 0.2, 0.3):
        assert threshold_gain("pirates-correlated", e, 1.0) == pytest.approx(e * 4 + (1 - e) * (9 - 10))


# trust-mixed ---------------------------------------------------------------------------

@given(st.fractions(F(1, 100), F(99, 100), max_denominator=100))
def test_trust_mixed_gain_vanishes_at_q_zero(eps):
    assert trust_mixed_gain(0, eps) == 0


@given(st.fractions(F(1, 100), F(1, 4), max_denominator=100), st.fractions(F(1, 20), 1, max_denominator=20))
def test_trust_mixed_gain_is_negative(eps, q):
    assert trust_mixed_gain(q, eps) < 0


def test_trust_mixed_small_deviations_pay_for_large_eps():
    # the gain's slope at q = 0 is 2 - 4g - 2g^2 with g = (1-eps)/(2-eps); it
    # turns positive once eps exceeds 1 - 1/sqrt(2)
    assert trust_mixed_gain(F(1, 100), F(7, 25)) < 0
    assert trust_mixed_gain(F(1, 100), F(3, 10)) > 0


def test_trust_mixed_gain_against_simulation():
    game = bg.trust_mixed_game()
    eps, q = 0.3, F(1, 2)
    prof = [build_uncorrelated_bot(j, eps, trust_mixed_policy(j)) for j in range(2)]
    dev = q_mix(prof[1], float(q), MixedStrategy.pure(0, 2), eps)
    rep = empirical_best_response(prof, game, 1, [({"q": q}, dev)], 6000, 12, "uncorrelated", paired=True)[0]
    assert abs(rep.gain - float(trust_mixed_gain(q, eps))) < 4 * rep.gain_se


# Prop 5 / 6 -------------------------------------------------------------------------------

def test_prop5_intro_holds():
    rep = prop5_check(bg.intro_game(), (0, 0, 0), lam=F(1, 2))
    assert rep.holds == "yes"
    assert [r.margin for r in rep.players] == [F(-5, 2), F(-1, 2), F(-1, 2)]


def test_prop5_trust_simple_fails_for_player_two():
    game = bg.trust_simple_game()
    rep = prop5_check(game, (1, 1))
    assert rep.holds == "no"
    assert rep.for_player(1).holds == "no" and rep.for_player(1).margin == 2 + F(1, 1000)


def test_prop5_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        prop5_check(bg.intro_game(), (0, 0, 0), lam=0)


@given(games(n_players=st.just(2), sizes=st.integers(2, 2), values=st.integers(0, 4)), st.data())
@settings(max_examples=25)
def test_prop5_implies_prop6(game, data):
    s = tuple(data.draw(st.integers(0, k - 1)) for k in game.sizes)
    p5 = prop5_check(game, s, resolution=2)
    p6 = prop6_check(game, s, resolution=2)
    for a, b in zip(p5.players, p6.players):
        if a.holds == "yes":
            assert b.holds == "yes"
        if b.holds == "no":
            assert a.holds == "no"


# Cor 7 ------------------------------------------------------------------------------------

def joint_cor7(game, s):
    """max_i max_a min over joint punisher tuples of the summed single-deviation losses."""
    v = game.u(s)
    best = None
    for i in range(game.n):
        others = [j for j in range(game.n) if j != i]
        for a in range(game.sizes[i]):
            own = game.u(tuple(a if k == i else s[k] for k in range(game.n)))[i] - v[i]
            worst = None
            for combo in itertools.product(*(range(game.sizes[j]) for j in others)):
                tot = own
                for j, b in zip(others, combo):
                    tot += game.u(tuple(b if k == j else s[k] for k in range(game.n)))[i] - v[i]
                worst = tot if worst is None else min(worst, tot)
            best = worst if best is None else max(best, worst)
    return best


@given(games(), st.data())
def test_cor7_matches_joint_enumeration(game, data):
    s = tuple(data.draw(st.integers(0, k - 1)) for k in game.sizes)
    res = cor7_check(game, s)
    assert res.value == joint_cor7(game, s)
    assert res.violated == (res.value > 0)


def test_cor7_trust_simple_witness():
    res = cor7_check(bg.trust_simple_game(), (1, 1))
    assert res.violated and res.value == 2 and (res.player, res.deviation) == (1, 0)
    assert res.punishers == {0: 0}


def test_cor7_pirates_and_intro():
    assert cor7_check(bg.intro_game(), (0, 0, 0)).value == -1
    assert cor7_check(bg.pirates_game(), (0, 0, 0)).value == -16


# simulationist conditions -------------------------------------------------------------------

@given(st.integers(2, 3).flatmap(lambda k: st.lists(st.lists(st.integers(-6, 6), min_size=k, max_size=k),
                                                       min_size=1, max_size=5)))
def test_maxmin_exact_and_float_routes_agree(rows):
    exact, d = _maxmin([[F(x) for x in r] for r in rows], True)
    approx, d2 = _maxmin([[float(x) for x in r] for r in rows], False)
    assert float(exact) == pytest.approx(approx, abs=1e-7)
    assert sum(d) == 1 and min(sum(a * b for a, b in zip(d, r)) for r in rows) == exact


@given(games(n_players=st.just(2), sizes=st.integers(2, 3)), st.data())
@settings(max_examples=20)
def test_simulationist_bound_is_a_payoff(game, data):
    eps = [data.draw(st.fractions(F(1, 10), F(9, 10), max_denominator=10)) for _ in range(2)]
    s = tuple(data.draw(st.integers(0, k - 1)) for k in game.sizes)
    inst = geometric_instance(game, eps, s)
    for i in range(2):
        pays = [game.u(p)[i] for p in game.profiles()]
        for t0 in range(3):
            res = simulationist_bound(inst, i, t0)
            assert min(pays) <= res.value <= max(pays)
            assert res.gain == res.value - game.u(s)[i]


def test_pirates_geometric_schedules_are_rejected():
    inst = geometric_instance(bg.pirates_game(), [F(1, 5)] * 3, (0, 0, 0))
    rep = simulationist_check(inst)
    assert not rep.passed and rep.first_violation.gain > 0


def test_pirates_chain_and_anomaly_guard():
    g = DeltaSchedule.geometric
    assert pirates_chain(g(F(1, 5)), g(F(1, 5))).step in (1, 2)
    rep = pirates_impossibility_search([(g(F(1, 5)), g(F(1, 10)), g(F(1, 2)))])
    assert rep.candidates == 1 and not rep.anomalies


def test_gov_certificate():
    cert = gov_closed_form_certificate()
    assert cert.government and cert.citizens
    assert cert.government_bound == F(97, 2178)
    assert cert.max_detection <= cert.government_bound


def test_gov_geometric_schedule_fails():
    from progeq.equilibrium_analysis import gov_instance
    g = DeltaSchedule.geometric(F(1, 10))
    assert not simulationist_check(gov_instance(bg.gov_citizens_game(), (g, g))).passed


# two-player detection schedules -------------------------------------------------------------

def test_zero_sum_target_fails_a_precondition():
    pennies = NormalFormGame([("H", "T")] * 2, {(0, 0): (1, -1), (1, 1): (1, -1), (0, 1): (-1, 1), (1, 0): (-1, 1)})
    half = MixedStrategy((F(1, 2), F(1, 2)))
    res = detection_schedule_2p(pennies, (half, half))
    assert not res.ok and "individually rational" in res.reason


def test_detection_schedule_degenerate_trust_simple():
    res = detection_schedule_2p(bg.trust_simple_game(), (1, 1))
    assert res.ok
    assert res.schedules == (DeltaSchedule.point(1), DeltaSchedule.point(0))


def test_detection_schedule_pd_is_constructed_and_verified():
    game = bg.pd2_game()
    res = detection_schedule_2p(game, (0, 0), resolution=50)
    if res.ok:
        assert res.verified_steps > 0
        s1, s2 = res.schedules
        assert s1.survival(0) == 1 and s2.survival(0) == 1
    else:
        assert res.reason


def test_detection_schedule_two_players_only():
    with pytest.raises(ValueError):
        detection_schedule_2p(bg.intro_game(), (0, 0, 0))


# empirical deviations ---------------------------------------------------------------------------

def test_baseline_estimate_must_share_the_seed():
    game = bg.pd2_game()
    prof = [constant_bot(0, 0), constant_bot(1, 0)]
    base = estimate_outcomes(prof, game, 20, 1, "uncorrelated")
    with pytest.raises(ValueError):
        empirical_best_response(prof, game, 0, [({}, constant_bot(0, 1))], 20, 2, baseline=base)


def test_excessive_non_halting_is_reported():
    game = bg.pd2_game()
    loop = Program(0, "loop", lambda call: call.apply(0))
    prof = [constant_bot(0, 0), constant_bot(1, 0)]
    with pytest.warns(RuntimeWarning), pytest.raises(ExcessiveNonHalting):
        empirical_best_response(prof, game, 0, [({}, loop)], 10, 1, fuel=Fuel(depth=20))


def test_constant_deviation_gain_is_exact():
    game = bg.pd2_game()
    prof = [constant_bot(0, 0), constant_bot(1, 0)]
    rep = empirical_best_response(prof, game, 0, [({"a": 1}, constant_bot(0, 1))], 50, 3)[0]
    assert rep.gain == float(game.u((1, 0))[0] - game.u((0, 0))[0])
    assert rep.gain_se == 0
