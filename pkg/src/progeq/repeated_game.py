"""Repeated games with correlating signals and screening.

A round draws one uniform signal ``q`` shared by everybody; each player then
samples a pair (unscreened action, screened observation) from a compatible
policy pair. Utilities accrue from the unscreened actions, everybody observes
the screened ones, and the game stops after each round with probability ε.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .game_core import MixedStrategy, correlated_decomposition, expected_utility, minimax
from .pibots import ActionSequence, Policy, ScreenedHistory
from .program_vm import (APPLY_STAR, Fuel, Machine, Program, Sentinel, estimate_outcomes,
                         make_streams, run_trial, trial_seed)
from .rand_streams import as_fraction

F = Fraction


class HorizonExceeded(RuntimeError):
    pass


class CompatibilityError(ValueError):
    """A screened policy put more mass on an action than the unscreened one."""


@dataclass(frozen=True)
class RepeatedGameConfig:
    game: Any
    eps: float
    max_rounds: int = 1_000_000

    def __post_init__(self):
        if not 0 < float(self.eps) <= 1:
            raise ValueError("eps must lie in (0, 1]")


class _PrivateProbe:
    """Stand-in for the private stream view handed to a policy; records reads."""

    __slots__ = ("value", "accessed")

    def __init__(self, value: float):
        self.value = value
        self.accessed = False

    def element(self, m: int) -> float:
        self.accessed = True
        if m == 0:
            return self.value
        # later elements are never used by the built-in policies; keep them
        # deterministic but distinct from element 0
        return math.modf(self.value * 2 ** (m + 7))[0]


_GRID = 4096


class PolicyPair:
    """Compatible unscreened policy τ and screened policy τ* for one player.

    ``tau(h, q)`` returns probabilities over the player's actions;
    ``tau_star(h, q)`` returns probabilities over the actions followed by R.
    ``draw`` samples the coupled pair from one uniform.
    """

    def __init__(self, player: int, size: int, tau: Callable, tau_star: Callable,
                 sampler: Callable | None = None, name: str = "pair"):
        self.player = player
        self.size = size
        self._tau = tau
        self._tau_star = tau_star
        self._sampler = sampler
        self.name = name

    def tau(self, history, q: float) -> tuple:
        return tuple(self._tau(history, q))

    def tau_star(self, history, q: float) -> tuple:
        return tuple(self._tau_star(history, q))

    def check(self, history, q: float) -> None:
        tau, star = self.tau(history, q), self.tau_star(history, q)
        if len(tau) != self.size or len(star) != self.size + 1:
            raise CompatibilityError("policy output has the wrong length")
        if abs(sum(tau) - 1) > 1e-12 or abs(sum(star) - 1) > 1e-12:
            raise CompatibilityError("policy outputs must be distributions")
        for a in range(self.size):
            if star[a] > tau[a] + 1e-15:
                raise CompatibilityError(
                    f"player {self.player + 1}: screened mass {star[a]} on action {a} "
                    f"exceeds unscreened mass {tau[a]}")

    def draw(self, history, q: float, u: float) -> tuple[int, Any]:
        """(unscreened action, screened observation) from one uniform u.

        The unit interval is cut into, per action a, a piece of length τ*(a)
        observed as a and a piece of length τ(a)-τ*(a) observed as R.
        """
        if self._sampler is not None:
            return self._sampler(history, q, u)
        tau, star = self.tau(history, q), self.tau_star(history, q)
        acc = 0.0
        last = None
        for a in range(self.size):
            if star[a] > tau[a] + 1e-15:
                raise CompatibilityError(f"screened mass exceeds unscreened mass at action {a}")
            shown = float(star[a])
            hidden = float(tau[a]) - shown
            if shown > 0:
                acc += shown
                last = (a, a)
                if u < acc:
                    return a, a
            if hidden > 0:
                acc += hidden
                last = (a, Sentinel(self.player))
                if u < acc:
                    return last
        return last

    # constructors -----------------------------------------------------------

    @classmethod
    def constant(cls, player: int, size: int, action: int) -> "PolicyPair":
        point = tuple(F(int(a == action)) for a in range(size))
        return cls(player, size, lambda h, q: point, lambda h, q: point + (F(0),),
                   lambda h, q, u: (action, action), f"constant({action})")

    @classmethod
    def from_policy(cls, policy: Policy, player: int, size: int, private: bool = True) -> "PolicyPair":
        """Associated pair of a grounded bot's policy.

        The unscreened action is π on the observed history with x_0 uniform;
        the screened observation is R exactly when π read x_0.
        """

        def run(history, q, x):
            if not private:
                return policy(_as_history(history), q, None), False
            probe = _PrivateProbe(x)
            out = policy(_as_history(history), q, probe)
            return out, probe.accessed

        def sampler(history, q, u):
            out, read = run(history, q, u)
            return out, (Sentinel(player) if read else out)

        def tables(history, q):
            out, read = run(history, q, 0.5 / _GRID)
            if not read:
                point = tuple(F(int(a == out)) for a in range(size))
                return point, point + (F(0),)
            # x_0 was read; integrate over a midpoint grid
            counts = [0] * size
            for k in range(_GRID):
                a, _ = run(history, q, (k + 0.5) / _GRID)
                counts[a] += 1
            tau = tuple(F(c, _GRID) for c in counts)
            return tau, tuple(F(0) for _ in range(size)) + (F(1),)

        return cls(player, size, lambda h, q: tables(h, q)[0], lambda h, q: tables(h, q)[1],
                   sampler, f"associated[{policy.name}]")


def _as_history(history) -> ScreenedHistory:
    return history if isinstance(history, ScreenedHistory) else ScreenedHistory(history)


# simulation ---------------------------------------------------------------------------

@dataclass
class RepeatedEstimate:
    episodes: int
    mean_total: tuple
    stderr: tuple
    length_counts: dict
    last_actions: list = field(default_factory=list)  # per player: counts per action
    screened_rounds: int = 0


def simulate_repeated(config: RepeatedGameConfig, pairs: Sequence[PolicyPair], trials: int,
                      seed: int, keep_histories: bool = False, check: bool = False) -> RepeatedEstimate:
    """Monte Carlo over episodes; totals are undiscounted sums over rounds.

    With ``check`` every draw also verifies compatibility of the pair at the
    current history (slow; used by the property tests).
    """
    game = config.game
    n = game.n
    if len(pairs) != n:
        raise ValueError("need one policy pair per player")
    rng = np.random.default_rng(seed)
    table = game.float_payoffs()
    eps = float(config.eps)
    lengths = rng.geometric(eps, size=trials)
    if int(lengths.max(initial=0)) > config.max_rounds:
        raise HorizonExceeded(f"an episode needs {int(lengths.max())} rounds")
    totals = np.zeros((trials, n))
    length_counts: dict[int, int] = {}
    last = [[0] * game.sizes[i] for i in range(n)]
    screened = 0
    histories = []
    for e in range(trials):
        L = int(lengths[e])
        length_counts[L] = length_counts.get(L, 0) + 1
        signals = rng.random(L)
        draws = rng.random((L, n))
        observed: list[tuple] = []
        real: list[tuple] = []
        acc = [0.0] * n
        for k in range(L):
            h = ScreenedHistory(observed)
            q = float(signals[k])
            unscreened, seen = [], []
            for i, pair in enumerate(pairs):
                if check:
                    pair.check(h, q)
                a, s = pair.draw(h, q, float(draws[k, i]))
                if isinstance(s, Sentinel):
                    if s.player != i:
                        raise CompatibilityError("screening symbol in the wrong column")
                    screened += 1
                elif s != a:
                    raise CompatibilityError(f"player {i + 1} observed {s} but played {a}")
                unscreened.append(a)
                seen.append(s)
            prof = tuple(unscreened)
            pay = table[prof]
            for i in range(n):
                acc[i] += pay[i]
            observed = observed + [tuple(seen)]
            real.append(prof)
        totals[e] = acc
        for i in range(n):
            last[i][real[-1][i]] += 1
        if keep_histories:
            histories.append((real, observed))
    mean = totals.mean(axis=0)
    se = totals.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.zeros(n)
    est = RepeatedEstimate(trials, tuple(float(m) for m in mean), tuple(float(s) for s in se),
                           dict(sorted(length_counts.items())), last, screened)
    if keep_histories:
        est.histories = histories
    return est


# action sequences ---------------------------------------------------------------------------

class SequenceTooCoarse(ValueError):
    """ε is too large for the requested continuation bound."""

    def __init__(self, achieved, requested):
        super().__init__(f"continuation error {float(achieved):.6g} exceeds {float(requested):.6g}; lower eps")
        self.achieved = achieved
        self.requested = requested


@dataclass
class ActionSequenceSchedule:
    sequence: ActionSequence
    target: tuple
    eps: Fraction
    delta: Fraction
    weights: dict  # pure profile -> exact weight in the convex decomposition
    tails: list  # continuation payoff vectors at each cycle position, exact

    @property
    def period(self) -> int:
        return len(self.sequence.cycle)

    def discounted_weights(self) -> dict:
        """Law of the profile played at a Geom(ε) round index, exact."""
        eps, P = self.eps, self.period
        norm = 1 - (1 - eps) ** P
        out: dict = {}
        for k, prof in enumerate(self.sequence.cycle):
            out[prof] = out.get(prof, F(0)) + eps * (1 - eps) ** k / norm
        return out

    def marginal(self, player: int, size: int) -> MixedStrategy:
        probs = [F(0)] * size
        for prof, w in self.discounted_weights().items():
            probs[prof[player]] += w
        return MixedStrategy(tuple(probs))

    def to_dict(self) -> dict:
        return {
            "sequence": self.sequence.to_dict(),
            "target": [str(x) for x in self.target],
            "eps": str(self.eps),
            "delta": str(self.delta),
            "weights": [{"profile": list(p), "weight": str(w)} for p, w in self.weights.items()],
        }


def _cyclic_tails(cycle: Sequence[tuple], game, eps: Fraction) -> list[tuple]:
    P = len(cycle)
    pays = [game.u(p) for p in cycle]
    norm = 1 - (1 - eps) ** P
    coef = [eps * (1 - eps) ** k / norm for k in range(P)]
    tails = []
    for t in range(P):
        tails.append(tuple(sum(coef[k] * pays[(t + k) % P][i] for k in range(P))
                           for i in range(game.n)))
    return tails


def construct_action_sequence(game, v: Sequence, eps, delta, max_period: int = 4096) -> ActionSequenceSchedule:
    """Deterministic cyclic sequence of pure profiles whose discounted
    continuation payoffs all lie within ``delta`` of v.

    v is decomposed into pure-profile weights by an exact LP. Each cycle
    position then goes to the profile with the largest deficit
    weight·(k+1) - count; ties go to the profile player 1 likes most, then
    to the lexicographically smallest. Raises SequenceTooCoarse when ε is too
    large for δ.
    """
    v = tuple(as_fraction(x) for x in v)
    eps = as_fraction(eps)
    delta = as_fraction(delta)
    weights = correlated_decomposition(game, v)
    if weights is None:
        raise ValueError(f"{tuple(str(x) for x in v)} is not a feasible payoff vector")
    profs = sorted(weights, key=lambda p: (-game.u(p)[0], p))
    denom = math.lcm(*(w.denominator for w in weights.values()))
    approx = dict(weights)
    if denom > max_period:
        approx = {p: w.limit_denominator(max_period) for p, w in weights.items()}
        total = sum(approx.values())
        approx = {p: w / total for p, w in approx.items()}
        denom = math.lcm(*(w.denominator for w in approx.values()))
    counts = {p: 0 for p in profs}
    cycle = []
    for k in range(denom):
        best = max(profs, key=lambda p: (approx[p] * (k + 1) - counts[p], -profs.index(p)))
        counts[best] += 1
        cycle.append(best)
    tails = _cyclic_tails(cycle, game, eps)
    achieved = max(abs(t[i] - v[i]) for t in tails for i in range(game.n))
    if achieved > delta:
        raise SequenceTooCoarse(achieved, delta)
    return ActionSequenceSchedule(ActionSequence([], cycle), v, eps, delta, weights, tails)


# folk policies ---------------------------------------------------------------------------

def synthesize_folk_policies(game, schedule: ActionSequenceSchedule | ActionSequence,
                             variant: str = "grim", punish_rounds: int = 1) -> list[PolicyPair]:
    """Follow α; once player j deviates first (R_j counts), the others punish j
    with the minimax profile against j. Mixed punishments are drawn privately
    and therefore shown as R.

    ``variant="finite"`` punishes for ``punish_rounds`` rounds after the
    deviation and then returns to α, forgetting the episode.
    """
    alpha = schedule.sequence if isinstance(schedule, ActionSequenceSchedule) else schedule
    if variant not in ("grim", "finite"):
        raise ValueError(f"unknown variant {variant!r}")
    punishers = {j: minimax(game, j).punisher_profile for j in range(game.n)}
    pairs = []
    for i in range(game.n):
        size = game.sizes[i]
        pairs.append(_folk_pair(i, size, alpha, punishers, variant, punish_rounds))
    return pairs


def _first_deviation(rounds, alpha: ActionSequence, start: int = 0):
    for t in range(start, len(rounds)):
        got, want = rounds[t], alpha[t]
        if got != want:
            for j, (a, b) in enumerate(zip(got, want)):
                if a != b:
                    return t, j
    return None


def _folk_pair(i, size, alpha, punishers, variant, punish_rounds) -> PolicyPair:
    def state(history):
        rounds = history.rounds if isinstance(history, ScreenedHistory) else list(history)
        t = len(rounds)
        start = 0
        while True:
            dev = _first_deviation(rounds, alpha, start)
            if dev is None:
                return None
            t_dev, j = dev
            if variant == "grim":
                return j
            end = t_dev + 1 + punish_rounds
            if t < end:
                return j
            # punishment is over; deviations during it are forgiven
            start = end

    def tau(history, q):
        j = state(history)
        if j is None or j == i:
            a = alpha[len(history)][i]
            return tuple(F(int(k == a)) for k in range(size))
        return punishers[j][i].probs

    def tau_star(history, q):
        j = state(history)
        if j is None or j == i:
            return tau(history, q) + (F(0),)
        strat = punishers[j][i]
        if strat.is_pure:
            return strat.probs + (F(0),)
        return tuple(F(0) for _ in range(size)) + (F(1),)

    return PolicyPair(i, size, tau, tau_star, name=f"folk-{variant}(p{i + 1})")


# program <-> repeated game -------------------------------------------------------------------

def associated_pairs(profile: Sequence[Program], game) -> list[PolicyPair | None]:
    """Analytic associated pairs for grounded and constant bots; None otherwise."""
    out = []
    for i, prog in enumerate(profile):
        kind = prog.meta.get("kind")
        if kind == "correlated":
            out.append(PolicyPair.from_policy(prog.meta["policy"], i, game.sizes[i], private=True))
        elif kind == "uncorrelated":
            out.append(PolicyPair.from_policy(prog.meta["policy"], i, game.sizes[i], private=False))
        elif kind == "constant":
            out.append(PolicyPair.constant(i, game.sizes[i], prog.behavior(None)))
        else:
            out.append(None)
    return out


@dataclass
class EmpiricalPolicy:
    """Conditional frequencies of one program's (screened, unscreened) output
    per observed history; unseen histories fall back to the first action."""

    player: int
    size: int
    bins: dict  # history tuple -> Counter over (action, observation)
    min_count: int

    @property
    def sparse_bins(self) -> list:
        return [h for h, c in self.bins.items() if sum(c.values()) < self.min_count]

    def pair(self) -> PolicyPair:
        def tables(history):
            key = tuple(history.rounds if isinstance(history, ScreenedHistory) else history)
            counts = self.bins.get(key)
            if not counts:
                point = tuple(F(int(a == 0)) for a in range(self.size))
                return point, point + (F(0),)
            total = sum(counts.values())
            tau = [F(0)] * self.size
            star = [F(0)] * (self.size + 1)
            for (a, seen), c in counts.items():
                tau[a] += F(c, total)
                if isinstance(seen, Sentinel):
                    star[-1] += F(c, total)
                else:
                    star[a] += F(c, total)
            return tuple(tau), tuple(star)

        return PolicyPair(self.player, self.size, lambda h, q: tables(h)[0],
                          lambda h, q: tables(h)[1], name=f"empirical(p{self.player + 1})")


def estimate_associated_policy(profile: Sequence[Program], j: int, eps: float, game, trials: int,
                               seed: int, fuel: Fuel = Fuel(depth=300), min_count: int = 30) -> EmpiricalPolicy:
    """Bin program j's outputs on suffix inputs by the screened history the
    grounded bots observe before it. The history at time step t is the same
    for every correlated grounded bot, so it is recomputed here directly."""
    from collections import Counter

    programs = tuple(profile)
    n = len(programs)
    bins: dict = {}
    for k in range(trials):
        seed_k = trial_seed(seed, k)
        views, privates = make_streams(seed_k, n, "correlated")
        vm = Machine(fuel, memo_star=True)
        for p in privates:
            p.on_read = vm.on_private_read
        view = views[0]
        T = view.first_below(float(eps))
        rounds = []
        for t in range(1, T + 1):
            v = view.suffix(T + 1 - t)
            rounds.append(tuple(vm.invoke(APPLY_STAR, p, programs, v, privates[j]) for p in programs))
        vm.depth = -1
        action = vm.invoke("apply", programs[j], programs, view, privates[j])
        vm.depth = -1
        seen = vm.invoke(APPLY_STAR, programs[j], programs, view, privates[j])
        bins.setdefault(tuple(rounds), Counter())[(action, seen)] += 1
    return EmpiricalPolicy(j, game.sizes[j], bins, min_count)


@dataclass
class CorrespondenceReport:
    eps: float
    program_mean: tuple
    program_se: tuple
    repeated_scaled_mean: tuple
    repeated_scaled_se: tuple
    overlap: tuple
    exact: bool
    passed: bool
    sparse_bins: int = 0


def correspondence_check(profile: Sequence[Program], game, eps: float, trials: int, seed: int,
                         fuel: Fuel = Fuel(), estimate_trials: int = 2000) -> CorrespondenceReport:
    """Compare E[u | programs] with ε times the repeated game's mean total
    under the associated policies (3σ interval overlap per player).

    With ε = 1 and q-independent first-round policies both sides are
    computed exactly.
    """
    pairs = associated_pairs(profile, game)
    odd = [i for i, p in enumerate(pairs) if p is None]
    if len(odd) > 1:
        raise ValueError("at most one program may lack an analytic associated policy")
    sparse = 0
    if odd:
        emp = estimate_associated_policy(profile, odd[0], eps, game, estimate_trials, seed + 1)
        pairs[odd[0]] = emp.pair()
        sparse = len(emp.sparse_bins)
    if float(eps) == 1.0:
        exact = _exact_single_round(profile, pairs, game, seed)
        if exact is not None:
            prog, rep = exact
            same = tuple(a == b for a, b in zip(prog, rep))
            zero = tuple(0.0 for _ in prog)
            return CorrespondenceReport(1.0, prog, zero, rep, zero, same, True, all(same), sparse)
    est = estimate_outcomes(profile, game, trials, seed, "correlated", fuel)
    rep = simulate_repeated(RepeatedGameConfig(game, eps), pairs, trials, seed + 7)
    e = float(eps)
    scaled = tuple(e * m for m in rep.mean_total)
    scaled_se = tuple(e * s for s in rep.stderr)
    overlap = tuple(abs(a - b) <= 3 * (sa + sb) + 1e-12
                    for a, b, sa, sb in zip(est.mean_payoff, scaled, est.stderr, scaled_se))
    return CorrespondenceReport(e, est.mean_payoff, est.stderr, scaled, scaled_se, overlap,
                                False, all(overlap) and est.nonhalt_rate == 0, sparse)


def _exact_single_round(profile, pairs, game, seed, probes: int = 64):
    """Exact payoffs at ε=1 when every first-round policy ignores the signal."""
    empty = ScreenedHistory([])
    strategies = []
    for pair in pairs:
        first = pair.tau(empty, 0.0)
        for k in range(probes):
            if pair.tau(empty, (k + 0.5) / probes) != first:
                return None
        strategies.append(MixedStrategy(first))
    rep = expected_utility(game, strategies)
    # program side: with ε = 1 every bot grounds immediately, so its law is
    # the policy law on the empty history; confirm on concrete trials
    outcomes = set()
    for k in range(probes):
        res = run_trial(profile, trial_seed(seed, k), "correlated", Fuel(depth=50))
        outcomes.add(res.outcome)
    if any(not s.is_pure for s in strategies):
        return None
    if len(outcomes) != 1:
        return None
    prog = game.u(next(iter(outcomes)))
    return prog, rep


# uncorrelated marginals ----------------------------------------------------------------------

@dataclass
class LastActionReport:
    eps: float
    program_marginals: list
    repeated_marginals: list
    p_values: list
    marginals_match: bool
    separable: bool
    program_payoff: tuple
    program_se: tuple
    repeated_scaled: tuple
    repeated_scaled_se: tuple
    payoffs_match: bool | None


def _chi2_p(a: Sequence[int], b: Sequence[int]) -> float:
    cols = [k for k in range(len(a)) if a[k] + b[k] > 0]
    if len(cols) < 2:
        return 1.0
    table = np.array([[a[k] for k in cols], [b[k] for k in cols]])
    return float(stats.chi2_contingency(table, correction=False)[1])


def last_action_law(profile: Sequence[Program], game, eps: float, trials: int, seed: int,
                    fuel: Fuel = Fuel(), alpha: float = 0.01) -> LastActionReport:
    """Per-player action law of uncorrelated grounded bots against the last
    round of the repeated game under their policies; for additively
    separable games also compares payoffs."""
    from .game_core import separable_decomposition

    pairs = associated_pairs(profile, game)
    if any(p is None for p in pairs):
        raise ValueError("every program needs an analytic associated policy")
    est = estimate_outcomes(profile, game, trials, seed, "uncorrelated", fuel)
    rep = simulate_repeated(RepeatedGameConfig(game, eps), pairs, trials, seed + 11)
    prog_counts = []
    for i in range(game.n):
        tally = [0] * game.sizes[i]
        for prof, c in est.counts.items():
            tally[prof[i]] += c
        prog_counts.append(tally)
    ps = [_chi2_p(prog_counts[i], rep.last_actions[i]) for i in range(game.n)]
    sep = separable_decomposition(game) is not None if hasattr(game, "payoffs") else False
    e = float(eps)
    scaled = tuple(e * m for m in rep.mean_total)
    scaled_se = tuple(e * s for s in rep.stderr)
    pay_ok = None
    if sep:
        pay_ok = all(abs(a - b) <= 3 * (sa + sb) + 1e-12
                     for a, b, sa, sb in zip(est.mean_payoff, scaled, est.stderr, scaled_se))
    return LastActionReport(e, [[c / max(sum(t), 1) for c in t] for t in prog_counts],
                            [[c / max(sum(t), 1) for c in t] for t in rep.last_actions],
                            ps, all(p > alpha for p in ps), sep, est.mean_payoff, est.stderr,
                            scaled, scaled_se, pay_ok)
