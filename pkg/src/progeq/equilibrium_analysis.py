"""Deviation analysis: closed-form evaluators, necessary/sufficient conditions
for grounded-bot equilibria, and the schedule-based simulationist checks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import sympy as sp
from scipy import stats as sstats

from ._exact_lp import linprog_exact
from .builtin_games import GovernmentCitizensGame
from .game_core import MixedStrategy, _as_vector, _simplex_grid, expected_utility, minimax
from .pibots import PunishmentMap
from .program_vm import Fuel, OutcomeEstimate, Program, estimate_outcomes
from .rand_streams import DeltaSchedule, as_fraction

F = Fraction


# closed forms -------------------------------------------------------------------------

def example3_values(q, eps=0) -> tuple[Fraction, Fraction]:
    """Player 1's value in the pirates game when it plays D with probability q
    and each other pirate punishes independently with probability x = q(1-ε):
    (punishing with L, punishing with D).

    Expanded: (1-x²)(10+4q) + 9x² and 14q + 10(1-q)(1-x)². At ε = 0 these are
    10+4q-q²-4q³ and 14q+10(1-q)³.
    """
    q = as_fraction(q)
    eps = as_fraction(eps)
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    x = q * (1 - eps)
    with_l = (1 - x * x) * (10 + 4 * q) + 9 * x * x
    with_d = 14 * q + 10 * (1 - q) * (1 - x) ** 2
    return with_l, with_d


def example3_profiles(q, eps=0):
    """The independent mixed profiles example3_values evaluates (L and D punishments)."""
    q = as_fraction(q)
    x = q * (1 - as_fraction(eps))
    attacker = MixedStrategy((1 - q, q, F(0)))
    punish_l = MixedStrategy((1 - x, F(0), x))
    punish_d = MixedStrategy((1 - x, x, F(0)))
    return (attacker, punish_l, punish_l), (attacker, punish_d, punish_d)


def independent_detection_value(game, target: Sequence[int], deviator: int, deviation: int,
                                punish: Mapping[int, int], q, eps=0) -> Fraction:
    """Deviator's exact value when it plays ``deviation`` with probability q and
    every other player j independently switches to ``punish[j]`` with
    probability q(1-ε), the detection rate of uncorrelated grounded bots whose
    simulations all share one deviation coin."""
    q, eps = as_fraction(q), as_fraction(eps)
    x = q * (1 - eps)
    prof = []
    for j, a in enumerate(target):
        base = MixedStrategy.pure(a, game.sizes[j])
        if j == deviator:
            prof.append(base.mix(MixedStrategy.pure(deviation, game.sizes[j]), q))
        elif j in punish:
            prof.append(base.mix(MixedStrategy.pure(punish[j], game.sizes[j]), x))
        else:
            prof.append(base)
    return expected_utility(game, prof)[deviator]


_EPS, _Q, _P = sp.symbols("epsilon q P", positive=True)

GAIN_FORMULAS = {
    # player 2 of the intro game deviating to D with probability q
    "intro": 5 * _Q - 6 * _Q * (1 - _EPS),
    # three-player prisoner's dilemma with copy-a-random-opponent bots
    "pd3": _Q - 2 * _Q * (1 - _EPS) / (1 + _EPS),
    # correlated pirates; P is the probability of deviating undetected
    "pirates-correlated": 4 * _P - ((1 - _EPS) / _EPS) * _P,
}


@dataclass(frozen=True)
class Threshold:
    name: str
    gain: str
    threshold: Fraction


def epsilon_thresholds() -> dict[str, Threshold]:
    """ε at which each deviation gain changes sign, solved symbolically."""
    out = {}
    for name, expr in GAIN_FORMULAS.items():
        scale = _P if _P in expr.free_symbols else _Q
        roots = sp.solve(sp.Eq(sp.simplify(expr / scale), 0), _EPS)
        roots = [r for r in roots if r.is_real and 0 < r < 1]
        if len(roots) != 1:
            raise RuntimeError(f"expected one threshold for {name}, got {roots}")
        r = sp.nsimplify(roots[0])
        out[name] = Threshold(name, str(expr), F(int(r.p), int(r.q)))
    return out


def threshold_gain(name: str, eps: float, q: float = 1.0) -> float:
    """Numerical gain from GAIN_FORMULAS (for pirates, P = qε)."""
    expr = GAIN_FORMULAS[name]
    vals = {_EPS: eps, _Q: q, _P: q * eps}
    return float(expr.subs(vals))


def trust_mixed_gain(q, eps) -> Fraction:
    """Exact gain of player 2 deviating to G with probability q against the
    alternating trust-game bots (player 1 keeps iff it sees G at an odd step)."""
    q, eps = as_fraction(q), as_fraction(eps)
    g = (1 - eps) / (2 - eps)  # probability of an odd time step
    detect = q * g
    greedy = q + (1 - q) * g
    return (1 - detect) * (2 + 2 * greedy) - (2 + 2 * g)


# polynomials in q over Fractions -----------------------------------------------------

def _pmul(a: list, b: list) -> list:
    out = [F(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x == 0:
            continue
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _peval(p: list, x) -> Any:
    acc = 0 * x
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _sup_on_unit(p: list) -> tuple[Any, Any, bool]:
    """(sup of p on [0,1], argmax, exact?)."""
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    cands = [F(0), F(1)]
    exact = True
    if len(p) == 3 and p[2] < 0:
        vertex = -p[1] / (2 * p[2])
        if 0 < vertex < 1:
            cands.append(vertex)
    elif len(p) > 3:
        exact = False
        deriv = [k * c for k, c in enumerate(p)][1:]
        roots = np.roots([float(c) for c in reversed(deriv)])
        for r in roots:
            if abs(r.imag) < 1e-12 and 0 < r.real < 1:
                cands.append(F(r.real))
    best = max(cands, key=lambda x: _peval(p, x))
    return _peval(p, best), best, exact


# Prop-5/Prop-6 conditions -------------------------------------------------------------

def _deviation_poly(game, s: Sequence[MixedStrategy], i: int, maps: Mapping[int, Sequence],
                    dev: Sequence) -> list:
    """u_i((1-q)s_i + q s_i', ((1-q)s_j + q S_j'•s_i')_j) as a polynomial in q."""
    polys = []
    for j in range(game.n):
        base = s[j].probs
        if j == i:
            target = tuple(dev)
        else:
            target = tuple(sum(dev[a] * maps[j][a][b] for a in range(game.sizes[i]))
                           for b in range(game.sizes[j]))
        polys.append([[base[b], target[b] - base[b]] for b in range(game.sizes[j])])
    total = [F(0)] * (game.n + 1)
    for prof in game.profiles():
        term = [F(1)]
        for j, a in enumerate(prof):
            pj = polys[j][a]
            if pj[0] == 0 and pj[1] == 0:
                term = None
                break
            term = _pmul(term, pj)
        if term is None:
            continue
        ui = game.u(prof)[i]
        if ui == 0:
            continue
        for k, c in enumerate(term):
            total[k] += c * ui
    return total


@dataclass
class ConditionResult:
    player: int
    holds: str  # "yes" | "no" | "indeterminate"
    margin: Any  # best (smallest) sup of the slack-adjusted gain rate found
    witness_map: Any
    witness_deviation: Any
    witness_q: Any
    exact: bool
    bound: float


@dataclass
class ConditionReport:
    lam: Any
    players: list
    holds: str

    def for_player(self, i: int) -> ConditionResult:
        return self.players[i]


def _attacker_candidates(size: int, resolution: int) -> list[tuple]:
    pts = {tuple(F(int(k == a)) for k in range(size)) for a in range(size)}
    if resolution > 1 and size > 1:
        for counts in _simplex_grid(size, resolution):
            pts.add(tuple(F(c, resolution) for c in counts))
    return sorted(pts)


def _map_space(game, i: int, mixed_step: int | None):
    """Iterator over punishment maps {j: [strategy per attacker action]}."""
    others = [j for j in range(game.n) if j != i]
    per_player = []
    for j in others:
        if mixed_step is None:
            strategies = [tuple(F(int(k == b)) for k in range(game.sizes[j])) for b in range(game.sizes[j])]
        else:
            strategies = [tuple(F(c, mixed_step) for c in counts)
                          for counts in _simplex_grid(game.sizes[j], mixed_step)]
        per_player.append(list(itertools.product(strategies, repeat=game.sizes[i])))
    for combo in itertools.product(*per_player):
        yield dict(zip(others, combo))


def _map_count(game, i: int, mixed_step: int | None) -> int:
    total = 1
    for j in range(game.n):
        if j == i:
            continue
        k = game.sizes[j] if mixed_step is None else math.comb(mixed_step + game.sizes[j] - 1, game.sizes[j] - 1)
        total *= k ** game.sizes[i]
    return total


def _condition(game, s, lam, resolution: int, mixed_limit: int) -> ConditionReport:
    s = [x if isinstance(x, MixedStrategy) else MixedStrategy(_as_vector(x, game.sizes[j]))
         for j, x in enumerate(s)]
    lam = as_fraction(lam)
    spread = max(max(c) - min(c) for c in zip(*[game.u(p) for p in game.profiles()]))
    # at q -> 0 a pure deviation's rate is linear in the map rows, so the
    # separable minimum over punishers is exact and certifies failure
    first_order = cor7_check(game, s).table
    results = []
    for i in range(game.n):
        attackers = _attacker_candidates(game.sizes[i], resolution)
        bound = float(spread) * (game.n - 1) / max(resolution, 1)
        lower = max(first_order[(i, a)] for a in range(game.sizes[i])) + lam
        if lower > 0:
            a = max(range(game.sizes[i]), key=lambda k: first_order[(i, k)])
            dev = tuple(F(int(k == a)) for k in range(game.sizes[i]))
            results.append(ConditionResult(i, "no", lower, None, dev, F(0), True, bound))
            continue
        best = None

        def evaluate(maps):
            worst = None
            for dev in attackers:
                poly = _deviation_poly(game, s, i, maps, dev)
                # f(q) = u - v + λq with f(0) = 0; the rate f(q)/q decides the sign
                rate = poly[1:] if len(poly) > 1 else [F(0)]
                rate = list(rate)
                rate[0] += lam
                sup, arg, exact = _sup_on_unit(rate)
                if worst is None or sup > worst[0]:
                    worst = (sup, dev, arg, exact)
            return worst

        for maps in _map_space(game, i, None):
            worst = evaluate(maps)
            if best is None or worst[0] < best[0][0]:
                best = (worst, maps)
            if best[0][0] <= 0:
                break
        step = resolution
        if best[0][0] > 0 and _map_count(game, i, step) <= mixed_limit:
            for maps in _map_space(game, i, step):
                worst = evaluate(maps)
                if worst[0] < best[0][0]:
                    best = (worst, maps)
                if best[0][0] <= 0:
                    break
        (sup, dev, arg, exact), maps = best
        if sup <= 0:
            verdict = "yes"
        elif float(sup) > bound:
            verdict = "no"
        else:
            verdict = "indeterminate"
        results.append(ConditionResult(i, verdict, sup, maps, dev, arg, exact, bound))
    overall = "yes" if all(r.holds == "yes" for r in results) else (
        "no" if any(r.holds == "no" for r in results) else "indeterminate")
    return ConditionReport(lam, results, overall)


def prop5_check(game, s: Sequence, lam=F(1, 1000), resolution: int = 4,
                mixed_limit: int = 20_000) -> ConditionReport:
    """Sufficient condition for uncorrelated grounded-bot equilibria at u(s).

    For each player, searches punishment maps (pure first, then a mixed grid)
    for one under which every deviation (q, s_i') satisfies
    u_i(...) + λq ≤ v_i. The margin reported is the supremum over q of
    (u_i(...) - v_i)/q + λ; it is exact in q for games with up to three
    players. "indeterminate" means the best margin found is positive but
    below the grid resolution bound.
    """
    if as_fraction(lam) <= 0:
        raise ValueError("lambda must be positive")
    return _condition(game, s, lam, resolution, mixed_limit)


def prop6_check(game, s: Sequence, resolution: int = 4, mixed_limit: int = 20_000) -> ConditionReport:
    """Necessary condition: the same search without slack."""
    return _condition(game, s, F(0), resolution, mixed_limit)


@dataclass
class Cor7Result:
    violated: bool
    player: int | None
    deviation: int | None
    value: Fraction | None
    punishers: dict | None
    table: dict  # (player, deviation) -> value


def cor7_check(game, s: Sequence, v: Sequence | None = None) -> Cor7Result:
    """For every player i and pure s_i': min over pure (s_j')_{j≠i} of
    Σ_j (u_i(s_j', s_{-j}) - v_i). Positive means u(s) cannot be sustained by
    uncorrelated grounded bots. The sum separates across j, so each s_j' is
    minimised on its own."""
    s = [x if isinstance(x, MixedStrategy) else MixedStrategy(_as_vector(x, game.sizes[j]))
         for j, x in enumerate(s)]
    v = expected_utility(game, s) if v is None else tuple(as_fraction(x) for x in v)

    def replaced(j, a):
        prof = list(s)
        prof[j] = MixedStrategy.pure(a, game.sizes[j])
        return prof

    table = {}
    best = None
    for i in range(game.n):
        punish_sum = F(0)
        punishers = {}
        for j in range(game.n):
            if j == i:
                continue
            vals = [expected_utility(game, replaced(j, b))[i] - v[i] for b in range(game.sizes[j])]
            m = min(vals)
            punishers[j] = vals.index(m)
            punish_sum += m
        for a in range(game.sizes[i]):
            val = expected_utility(game, replaced(i, a))[i] - v[i] + punish_sum
            table[(i, a)] = val
            if best is None or val > best[0]:
                best = (val, i, a, dict(punishers))
    val, i, a, punishers = best
    if val > 0:
        return Cor7Result(True, i, a, val, punishers, table)
    return Cor7Result(False, None, None, val, None, table)


# simulationist conditions ---------------------------------------------------------------

@dataclass
class SimulationistInstance:
    """Per-player time-step schedules and per-step strategies c_j^t.

    ``strategies[j]`` is either one MixedStrategy (the same at every step) or
    a callable t -> MixedStrategy.
    """

    game: Any
    schedules: Sequence[DeltaSchedule]
    strategies: Sequence[Any]
    target: tuple | None = None
    exact: bool = True

    def strategy(self, j: int, t: int) -> MixedStrategy:
        c = self.strategies[j]
        return c(t) if callable(c) else c

    def overall(self, j: int, horizon: int | None = None) -> tuple:
        """Σ_t δ_j^t c_j^t, summed up to the schedule's tail horizon."""
        c = self.strategies[j]
        if not callable(c):
            return c.probs
        sched = self.schedules[j]
        h = horizon or sched.tail_horizon(1e-12)
        acc = [F(0)] * len(c(0))
        for t in range(h):
            w = sched.prob(t)
            if w:
                for k, p in enumerate(c(t).probs):
                    acc[k] += w * p
        return tuple(acc)


def _pre_mix(inst: SimulationistInstance, j: int, upto: int) -> tuple[list, Any]:
    """(Σ_{t<upto} δ_j^t c_j^t as a sub-probability vector, remaining mass)."""
    sched = inst.schedules[j]
    c = inst.strategies[j]
    if not callable(c):
        mass = sched.cdf(upto - 1) if inst.exact else sched.cdf_float(upto - 1)
        return [p * mass for p in (c.probs if inst.exact else [float(x) for x in c.probs])], 1 - mass
    acc = None
    for t in range(upto):
        w = sched.prob(t) if inst.exact else float(sched.prob(t))
        vec = c(t).probs if inst.exact else [float(x) for x in c(t).probs]
        acc = [w * p for p in vec] if acc is None else [x + w * p for x, p in zip(acc, vec)]
    if acc is None:
        acc = [0 * x for x in (c(0).probs if inst.exact else [0.0] * len(c(0).probs))]
    rest = sched.survival(upto) if inst.exact else sched.survival_float(upto)
    return acc, rest


@dataclass
class BoundResult:
    player: int
    t0: int
    value: Any  # max_d min_s u_i
    gain: Any  # value - v_i
    deviation: tuple  # optimal d_i
    punishment: Any  # the minimising corner against the optimal d_i


def _corner_matrix(inst: SimulationistInstance, i: int, t0: int):
    """M[corner][a]: u_i with the attacker switching to pure a from t0 on and
    the punishers switching to the corner's actions after t0."""
    game = inst.game
    if isinstance(game, GovernmentCitizensGame):
        return _gov_matrix(inst, i, t0)
    pre_i, mass_i = _pre_mix(inst, i, t0)
    others = [j for j in range(game.n) if j != i]
    pre = {j: _pre_mix(inst, j, t0 + 1) for j in others}
    corners = list(itertools.product(*[range(game.sizes[j]) for j in others]))
    rows = []
    for corner in corners:
        row = []
        for a in range(game.sizes[i]):
            prof = [None] * game.n
            vec = list(pre_i)
            vec[a] += mass_i
            prof[i] = vec
            for j, b in zip(others, corner):
                pj, mj = pre[j]
                w = list(pj)
                w[b] += mj
                prof[j] = w
            row.append(_eu_vectors(game, prof, i, inst.exact))
        rows.append(row)
    return corners, rows


def _eu_vectors(game, prof, i, exact):
    total = F(0) if exact else 0.0
    for cell in game.profiles():
        w = F(1) if exact else 1.0
        for j, a in enumerate(cell):
            w *= prof[j][a]
            if not w:
                break
        if w:
            u = game.u(cell)[i]
            total += w * (u if exact else float(u))
    return total


def _gov_matrix(inst: SimulationistInstance, i: int, t0: int):
    """Symmetric evaluator for the government/citizens game (floats).

    Citizens share one schedule and equilibrium action P; the government's
    equilibrium action is L. Corners for the government as attacker are the
    number k of citizens punishing with E; for a citizen they are the
    government's action.
    """
    game = inst.game
    m = game.citizens
    s_gov = inst.schedules[0]
    s_cit = inst.schedules[1]
    if i == 0:
        p = s_gov.survival_float(t0)
        q = s_cit.survival_float(t0 + 1)
        counts = np.arange(m + 1)
        gov_l = np.array([float(game.gov_payoff(0, e)) for e in counts])
        gov_d = np.array([float(game.gov_payoff(1, e)) for e in counts])
        corners, rows = [], []
        for k in range(m + 1):
            law = sstats.binom.pmf(counts, k, q) if k else (counts == 0).astype(float)
            u_l = float(law @ gov_l)
            u_d = float(law @ gov_d)
            # the government plays L before t0 and the chosen action after
            rows.append([u_l, (1 - p) * u_l + p * u_d])
            corners.append(k)
        return corners, rows
    p = s_cit.survival_float(t0)
    q = s_gov.survival_float(t0 + 1)
    corners, rows = [], []
    for g in (0, 1):
        gov = [1 - q, 0.0]
        gov[g] += q
        row = []
        for a in (0, 1):
            own = [1 - p, 0.0]
            own[a] += p
            val = sum(gov[x] * own[y] * float(game.citizen_payoff(x, y)) for x in (0, 1) for y in (0, 1))
            row.append(val)
        rows.append(row)
        corners.append(g)
    return corners, rows


def _maxmin(rows, exact: bool):
    """max over attacker mixtures d of min over corners of Σ_a d_a M[c][a]."""
    k = len(rows[0])
    if exact:
        # variables d_0..d_{k-1}, z+, z-; maximise z
        c = [0] * k + [-1, 1]
        A_ub = [[-x for x in row] + [1, -1] for row in rows]
        res = linprog_exact(c, A_ub, [0] * len(rows), [[1] * k + [0, 0]], [1])
        d = tuple(res.x[:k])
        value = -res.value
        return value, d
    if k == 2:
        # the lower envelope of lines in w = P(action 1) is concave; check kinks
        lines = [(r[0], r[1] - r[0]) for r in rows]
        cands = {0.0, 1.0}
        for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
            if b1 != b2:
                w = (a2 - a1) / (b1 - b2)
                if 0 < w < 1:
                    cands.add(w)
        best_w = max(cands, key=lambda w: min(a + b * w for a, b in lines))
        return min(a + b * best_w for a, b in lines), (1 - best_w, best_w)
    from scipy.optimize import linprog
    res = linprog([0] * k + [-1], A_ub=[[-x for x in row] + [1] for row in rows], b_ub=[0] * len(rows),
                  A_eq=[[1] * k + [0]], b_eq=[1], bounds=[(0, 1)] * k + [(None, None)])
    return -res.fun, tuple(res.x[:k])


def simulationist_bound(inst: SimulationistInstance, i: int, t0: int) -> BoundResult:
    corners, rows = _corner_matrix(inst, i, t0)
    value, d = _maxmin(rows, inst.exact)
    scores = [sum(x * y for x, y in zip(d, row)) for row in rows]
    worst = corners[scores.index(min(scores))]
    v = _target(inst)[i]
    return BoundResult(i, t0, value, value - v, d, worst)


def _target(inst: SimulationistInstance) -> tuple:
    if inst.target is not None:
        return tuple(inst.target) if inst.exact else tuple(float(x) for x in inst.target)
    game = inst.game
    if isinstance(game, GovernmentCitizensGame):
        return (0.0,) + (0.0,) * game.citizens
    overall = [MixedStrategy(inst.overall(j)) for j in range(game.n)]
    return expected_utility(game, overall)


@dataclass
class SimulationistReport:
    passed: bool
    worst: list  # per attacker: the BoundResult with the largest gain examined
    first_violation: BoundResult | None
    horizon: int
    checked: int


def simulationist_check(inst: SimulationistInstance, tol: float = 1e-9, early_exit: bool = True,
                        players: Sequence[int] | None = None, max_t0: int | None = None) -> SimulationistReport:
    """Sweep t0 until every schedule's remaining mass is below ``tol``; for
    each attacker and t0 solve max_d min_s exactly (or in floats for the
    symmetric large game). A deviation is profitable when its gain is > 0."""
    game = inst.game
    horizon = max(s.tail_horizon(tol) for s in inst.schedules) + 1
    if max_t0 is not None:
        horizon = min(horizon, max_t0)
    if isinstance(game, GovernmentCitizensGame):
        attackers = [0, 1] if players is None else list(players)
    else:
        attackers = list(range(game.n)) if players is None else list(players)
    worst: dict[int, BoundResult] = {}
    first = None
    checked = 0
    for t0 in range(horizon + 1):
        for i in attackers:
            res = simulationist_bound(inst, i, t0)
            checked += 1
            if i not in worst or res.gain > worst[i].gain:
                worst[i] = res
            if res.gain > 0 and first is None:
                first = res
                if early_exit:
                    return SimulationistReport(False, [worst[k] for k in sorted(worst)], first, horizon, checked)
    return SimulationistReport(first is None, [worst[k] for k in sorted(worst)], first, horizon, checked)


def geometric_instance(game, eps: Sequence, profile: Sequence[int]) -> SimulationistInstance:
    scheds = [DeltaSchedule.geometric(as_fraction(e)) for e in eps]
    strategies = [MixedStrategy.pure(a, game.sizes[j]) for j, a in enumerate(profile)]
    return SimulationistInstance(game, scheds, strategies, tuple(game.u(tuple(profile))))


def gov_schedules() -> tuple[DeltaSchedule, DeltaSchedule]:
    """Government: step 0 with mass 4/5, then a 0.99-geometric tail.
    Citizens: step 1 with mass 99/100, then a 0.99-geometric tail from step 2."""
    gov = DeltaSchedule((F(4, 5),), F(1, 5), F(99, 100))
    cit = DeltaSchedule((F(0), F(99, 100)), F(1, 100), F(99, 100))
    return gov, cit


def gov_instance(game: GovernmentCitizensGame | None = None, schedules=None) -> SimulationistInstance:
    game = game or GovernmentCitizensGame()
    gov, cit = schedules or gov_schedules()
    strategies = [MixedStrategy.pure(0, 2)] + [MixedStrategy.pure(0, 2)] * game.citizens
    return SimulationistInstance(game, [gov] + [cit] * game.citizens, strategies, exact=False)


@dataclass
class GovCertificate:
    government: bool
    citizens: bool
    government_bound: Fraction  # q below which 10q(2 - 99(1-20q)/(1+99q)) < 0
    max_detection: Fraction


def gov_closed_form_certificate() -> GovCertificate:
    """Exact check of the bounds that make the two-block schedules work.

    Government deviating from step t0 ≥ 1: deviation mass p = 20q with
    detection q ≤ 1/100, and the gain is at most 10q(2 - 99(1-20q)/(1+99q)),
    which is negative iff q < 97/2178. At t0 = 0 the gain is -100.
    Citizens: for t0 ≤ 1 detection is at least 99/500 so p(1-100q) < 0; for
    t0 ≥ 2 the gain is at most p(1 - 0.99²·2) < 0.
    """
    gov, cit = gov_schedules()
    q = sp.symbols("q", positive=True)
    bound = 10 * q * (2 - 99 * (1 - 20 * q) / (1 + 99 * q))
    crit = sp.solve(sp.Eq(sp.together(bound / q), 0), q)
    crit = F(int(sp.Rational(crit[0]).p), int(sp.Rational(crit[0]).q))
    # detection at t0 = 1 is the largest over t0 ≥ 1
    qmax = cit.survival(2)
    # relation p = 20q for every t0 ≥ 1 (spot-checked on the first steps exactly)
    ratio_ok = all(gov.survival(t) == 20 * cit.survival(t + 1) for t in range(1, 40))
    government = ratio_ok and qmax <= F(1, 100) and qmax < crit
    low = gov.survival(2)  # smallest detection when t0 ≤ 1
    citizens = (1 - 100 * low < 0) and (1 - F(99, 100) ** 2 * 2 < 0)
    return GovCertificate(government, citizens, crit, qmax)


# Example-11 chain --------------------------------------------------------------------------

@dataclass
class ChainResult:
    schedules: tuple
    t0: int
    p_first: Fraction
    required_second: Fraction
    p_second: Fraction
    step: int  # which inequality failed: 1 or 2; 0 means neither (an anomaly)
    detail: str


def pirates_chain(s1: DeltaSchedule, s2: DeltaSchedule) -> ChainResult:
    """t0 = max{t: P(T_1 ≥ t) ≥ 3/4}; pirate 1 defecting from t0 needs
    P(T_2 ≥ t0+1) ≥ 4P/(4P+1); if that holds, pirate 2 defecting from t0+1
    needs P(T_1 ≥ t0+2) ≥ 4P'/(4P'+1) ≥ 3/4, contradicting maximality."""
    t0 = 0
    while s1.survival(t0 + 1) >= F(3, 4):
        t0 += 1
        if t0 > 100_000:
            raise RuntimeError("schedule keeps three quarters of its mass forever")
    P = s1.survival(t0)
    need = 4 * P / (4 * P + 1)
    have = s2.survival(t0 + 1)
    if have < need:
        return ChainResult((s1, s2), t0, P, need, have, 1,
                           f"P(T2>={t0 + 1})={float(have):.4f} < {float(need):.4f}")
    P2 = have
    need2 = 4 * P2 / (4 * P2 + 1)
    have2 = s1.survival(t0 + 2)
    if have2 < need2:
        return ChainResult((s1, s2), t0, P, need2, have2, 2,
                           f"P(T1>={t0 + 2})={float(have2):.4f} < {float(need2):.4f}")
    return ChainResult((s1, s2), t0, P, need2, have2, 0, "no violated inequality")


class AnomalyError(AssertionError):
    """A search contradicted an established impossibility result."""


@dataclass
class ImpossibilityReport:
    candidates: int
    chain: list
    checks: list
    anomalies: list


def pirates_impossibility_search(family: Sequence[Sequence[DeltaSchedule]] | None = None,
                                 full_check: bool = True) -> ImpossibilityReport:
    """Run the chain and the full simulationist check on each schedule triple.

    Any candidate passing either test is recorded as an anomaly and raises.
    """
    from .builtin_games import pirates_game

    game = pirates_game()
    if family is None:
        grid = [F(k, 20) for k in (1, 2, 4, 6, 8, 10)]
        family = [tuple(DeltaSchedule.geometric(e) for e in combo)
                  for combo in itertools.product(grid, repeat=3)]
    chain, checks, anomalies = [], [], []
    for scheds in family:
        res = pirates_chain(scheds[0], scheds[1])
        chain.append(res)
        if res.step == 0:
            anomalies.append(("chain", scheds))
        if full_check:
            inst = SimulationistInstance(game, list(scheds), [MixedStrategy.pure(0, 3)] * 3, (10, 10, 10))
            rep = simulationist_check(inst)
            checks.append(rep)
            if rep.passed:
                anomalies.append(("check", scheds))
    report = ImpossibilityReport(len(family), chain, checks, anomalies)
    if anomalies:
        raise AnomalyError(f"schedules passed a check that should be impossible: {anomalies[:3]}")
    return report


# two-player detection schedules ----------------------------------------------------------------

@dataclass
class DetectionSchedules:
    ok: bool
    reason: str
    schedules: tuple | None = None
    eps: Fraction | None = None
    limit_ratio: Fraction | None = None
    grid_sup: float | None = None
    verified_steps: int = 0


def _needed_detection(game, c, deviator: int, p, normalized) -> Fraction:
    """q_{-i}(p): max over pure d of min over pure punishments a of the least
    detection probability making the deviation unprofitable."""
    j = 1 - deviator
    worst = F(0)
    for d in range(game.sizes[deviator]):
        dev = [F(1 - p) * x for x in c[deviator].probs]
        dev[d] += p
        best = None
        for a in range(game.sizes[j]):
            def util(qq):
                pun = [F(1 - qq) * x for x in c[j].probs]
                pun[a] += qq
                prof = [None, None]
                prof[deviator] = MixedStrategy(tuple(dev))
                prof[j] = MixedStrategy(tuple(pun))
                return normalized(prof)[deviator]
            A = util(F(0))
            B = util(F(1)) - A
            if A <= 0:
                need = F(0)
            elif B < 0 and A / (-B) <= 1:
                need = A / (-B)
            else:
                need = None
            if need is not None and (best is None or need < best):
                best = need
        if best is None:
            return F(2)  # cannot be punished
        worst = max(worst, best)
    return worst


def detection_schedule_2p(game, c: Sequence, resolution: int = 200, horizon_tol: float = 1e-9) -> DetectionSchedules:
    """Time-step schedules for a two-player target under which no deviation
    from a time step onwards pays, or the failed precondition."""
    if game.n != 2:
        raise ValueError("two-player games only")
    c = [x if isinstance(x, MixedStrategy) else MixedStrategy.pure(x, game.sizes[j]) for j, x in enumerate(c)]
    v = expected_utility(game, c)

    def normalized(prof):
        u = expected_utility(game, prof)
        return tuple(a - b for a, b in zip(u, v))

    for i in range(2):
        if not v[i] > minimax(game, i).value:
            return DetectionSchedules(False, f"player {i + 1} is not strictly individually rational")
    # strict Pareto optimality over pure profiles
    for prof in game.profiles():
        u = game.u(prof)
        if all(a >= b for a, b in zip(u, v)) and any(a > b for a, b in zip(u, v)):
            return DetectionSchedules(False, f"profile {prof} Pareto-dominates the target")
    # limit condition: no small deviation pair leaves both players weakly better off
    if all(s.is_pure for s in c):
        if not _pareto_limit_lp(game, c, v):
            return DetectionSchedules(False, "not strictly Pareto optimal in the limit of small deviations")
    else:
        for a1, a2 in game.profiles():
            s = (MixedStrategy.pure(a1, game.sizes[0]), MixedStrategy.pure(a2, game.sizes[1]))
            h = [normalized([s[0], c[1]])[k] + normalized([c[0], s[1]])[k] for k in range(2)]
            if h[0] >= 0 and h[1] >= 0 and (s[0] != c[0] or s[1] != c[1]):
                return DetectionSchedules(False, f"pure deviation pair {(a1, a2)} violates the limit condition")

    gains = []
    for i in range(2):
        best = max(normalized([MixedStrategy.pure(a, game.sizes[0]), c[1]] if i == 0 else
                              [c[0], MixedStrategy.pure(a, game.sizes[1])])[i]
                   for a in range(game.sizes[i]))
        worst = min(normalized([c[0], MixedStrategy.pure(a, game.sizes[1])] if i == 0 else
                               [MixedStrategy.pure(a, game.sizes[0]), c[1]])[i]
                    for a in range(game.sizes[1 - i]))
        gains.append((best, worst))
    limit = None
    if all(g[0] > 0 for g in gains):
        limit = (gains[0][0] / -gains[0][1]) * (gains[1][0] / -gains[1][1])
    for i in range(2):
        if gains[i][0] <= 0:
            # player i never gains: only player i needs to watch the other
            steps = [DeltaSchedule.point(0), DeltaSchedule.point(0)]
            steps[i] = DeltaSchedule.point(1)
            return DetectionSchedules(True, f"player {i + 1} has no profitable deviation", tuple(steps),
                                      limit_ratio=limit)

    def q1(p):  # detection player 1 needs against player 2 deviating with prob p
        return _needed_detection(game, c, 1, p, normalized)

    def q2(p):
        return _needed_detection(game, c, 0, p, normalized)

    ratios = []
    for k in range(1, resolution + 1):
        p = F(k, resolution)
        inner = q2(p)
        if inner > 1:
            return DetectionSchedules(False, "a deviation cannot be punished", limit_ratio=limit)
        outer = q1(inner)
        ratios.append(float(outer / p))
    sup = max(ratios + [float(limit)])
    if sup >= 1:
        return DetectionSchedules(False, f"composition ratio reaches {sup:.4f}", limit_ratio=limit, grid_sup=sup)
    # (1-ε)^2 > sup leaves room for the two-step shift
    eps = F(1 - math.sqrt(sup)).limit_denominator(1000) / 2
    H = 1
    while float((1 - eps) ** H) >= horizon_tol:
        H += 1
    surv1 = [(1 - eps) ** t for t in range(H + 2)]
    surv2 = [F(1)] + [min(F(1), q2(surv1[t - 1])) for t in range(1, H + 2)]
    # enforce monotonicity
    for t in range(1, len(surv2)):
        surv2[t] = min(surv2[t], surv2[t - 1])
    s1 = _from_survival(surv1, 1 - eps)
    s2 = _from_survival(surv2, 1 - eps)
    verified = 0
    for t in range(H):
        ok1 = s1.survival(t + 1) >= q1(s2.survival(t))
        ok2 = s2.survival(t + 1) >= q2(s1.survival(t))
        if not (ok1 and ok2):
            return DetectionSchedules(False, f"constructed schedules fail at step {t}", (s1, s2), eps, limit, sup, verified)
        verified += 1
    return DetectionSchedules(True, "constructed", (s1, s2), eps, limit, sup, verified)


def _from_survival(surv: Sequence[Fraction], ratio) -> DeltaSchedule:
    head = [surv[t] - surv[t + 1] for t in range(len(surv) - 1)]
    return DeltaSchedule(tuple(head), surv[-1], F(ratio))


def _pareto_limit_lp(game, c, v) -> bool:
    """Maximise the total deviation weight subject to both players' summed
    unilateral changes being ≥ 0; strict in the limit iff the optimum is 0."""
    sizes = game.sizes
    nvar = sizes[0] + sizes[1]
    a0 = c[0].support[0]
    b0 = c[1].support[0]

    def col(i, k):
        return k if i == 0 else sizes[0] + k

    A_ub, b_ub = [], []
    for player in range(2):
        row = [F(0)] * nvar
        for k in range(sizes[0]):
            row[col(0, k)] = -(game.u((k, b0))[player] - v[player])
        for k in range(sizes[1]):
            row[col(1, k)] = -(game.u((a0, k))[player] - v[player])
        A_ub.append(row)
        b_ub.append(F(0))
    A_eq = [[F(1)] * sizes[0] + [F(0)] * sizes[1], [F(0)] * sizes[0] + [F(1)] * sizes[1]]
    obj = [F(0)] * nvar
    obj[col(0, a0)] = F(1)
    obj[col(1, b0)] = F(1)
    # minimise s_1(c_1) + s_2(c_2); the deviation weight is 2 minus this
    res = linprog_exact(obj, A_ub, b_ub, A_eq, [F(1), F(1)])
    return res.value == 2


# empirical deviations ------------------------------------------------------------------------

@dataclass
class DeviationReport:
    params: dict
    baseline: float
    baseline_se: float
    value: float
    value_se: float
    gain: float
    gain_se: float
    predicted: float | None
    method: str
    nonhalt_rate: float

    @property
    def z_vs_prediction(self) -> float | None:
        if self.predicted is None:
            return None
        return (self.value - self.predicted) / self.value_se if self.value_se > 0 else (
            0.0 if self.value == self.predicted else math.inf)


class ExcessiveNonHalting(RuntimeError):
    pass


def _paired_gain(base, dev, i: int) -> tuple[float, float] | None:
    """Gain from per-trial differences; the baseline may be a longer run with
    the same seed (its first trials share seeds with the deviated run)."""
    a, b = base.payoff_samples[i], dev.payoff_samples[i]
    if base.halted != base.trials or dev.halted != dev.trials or len(a) < len(b):
        return None
    a = a[:len(b)]
    diffs = [y - x for x, y in zip(a, b)]
    k = len(diffs)
    mean = math.fsum(diffs) / k
    if k < 2:
        return mean, 0.0
    var = math.fsum((d - mean) ** 2 for d in diffs) / (k - 1)
    return mean, math.sqrt(var / k)


def empirical_best_response(profile: Sequence[Program], game, deviator: int,
                            family: Sequence[tuple[dict, Program]], trials: int, seed: int,
                            mode: str = "uncorrelated", fuel: Fuel = Fuel(),
                            predictor: Callable[[dict], float] | None = None,
                            baseline: tuple[float, float] | OutcomeEstimate | None = None,
                            paired: bool = False, max_nonhalt: float = 0.01) -> list[DeviationReport]:
    """Estimate the deviator's payoff for each family member (params, program).

    ``baseline`` may supply (value, stderr) of the undeviated profile, or an
    OutcomeEstimate run with ``seed`` and at least ``trials`` trials;
    otherwise it is estimated with the same trial count. With ``paired`` the
    deviated runs reuse the baseline's trial seeds and the gain's standard
    error comes from per-trial differences.
    """
    base_est = None
    if isinstance(baseline, OutcomeEstimate):
        if baseline.seed != seed or baseline.trials < trials:
            raise ValueError("a baseline estimate must share the seed and cover the trials")
        base_est = baseline
        baseline = (base_est.mean_payoff[deviator], base_est.stderr[deviator])
    if baseline is None or (paired and base_est is None):
        base_est = estimate_outcomes(profile, game, trials, seed, mode, fuel)
        if base_est.nonhalt_rate > max_nonhalt:
            raise ExcessiveNonHalting(f"baseline non-halting rate {base_est.nonhalt_rate:.3f}")
        if baseline is None:
            baseline = (base_est.mean_payoff[deviator], base_est.stderr[deviator])
    base, base_se = baseline
    reports = []
    for k, (params, prog) in enumerate(family):
        programs = list(profile)
        programs[deviator] = prog
        run_seed = seed if paired else seed + 1000 * (k + 1)
        est = estimate_outcomes(programs, game, trials, run_seed, mode, fuel)
        if est.nonhalt_rate > max_nonhalt:
            raise ExcessiveNonHalting(f"{params}: non-halting rate {est.nonhalt_rate:.3f}")
        val, se = est.mean_payoff[deviator], est.stderr[deviator]
        gain, gain_se = val - base, math.hypot(se, base_se)
        method = f"monte-carlo({trials})"
        if paired:
            pg = _paired_gain(base_est, est, deviator)
            if pg is not None:
                gain, gain_se = pg
                method = f"monte-carlo-paired({trials})"
        pred = predictor(params) if predictor is not None else None
        reports.append(DeviationReport(dict(params), base, base_se, val, se, gain, gain_se, pred,
                                       method, est.nonhalt_rate))
    return reports
