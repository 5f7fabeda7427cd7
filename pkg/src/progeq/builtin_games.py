"""Games used throughout the examples and experiments."""
from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

from .game_core import GameError, MinimaxResult, MixedStrategy, NormalFormGame, _as_vector

F = Fraction


def _table(labels, rows: dict[tuple[str, ...], tuple]) -> NormalFormGame:
    idx = [{l: k for k, l in enumerate(ls)} for ls in labels]
    payoffs = {tuple(idx[i][a] for i, a in enumerate(key)): val for key, val in rows.items()}
    return NormalFormGame(labels, payoffs)


def intro_game() -> NormalFormGame:
    labels = [("C", "P2", "P3"), ("C", "D"), ("C", "D")]
    rows = {
        ("C", "C", "C"): (6, 6, 6), ("C", "D", "C"): (3, 11, 3),
        ("P2", "C", "C"): (6, 3, 9), ("P2", "D", "C"): (3, 8, 6),
        ("P3", "C", "C"): (6, 9, 3), ("P3", "D", "C"): (3, 14, 0),
        ("C", "C", "D"): (3, 3, 11), ("C", "D", "D"): (0, 8, 8),
        ("P2", "C", "D"): (3, 0, 14), ("P2", "D", "D"): (0, 5, 11),
        ("P3", "C", "D"): (3, 6, 8), ("P3", "D", "D"): (0, 11, 5),
    }
    g = _table(labels, rows)
    g.name = "intro"
    return g


def pirates_game() -> NormalFormGame:
    labels = [("C", "D", "L")] * 3
    rows = {
        # player 3 cooperates
        ("C", "C", "C"): (10, 10, 10), ("C", "D", "C"): (0, 14, 0), ("C", "L", "C"): (10, 9, 10),
        ("D", "C", "C"): (14, 0, 0), ("D", "D", "C"): (14, 14, 0), ("D", "L", "C"): (14, 0, 0),
        ("L", "C", "C"): (9, 10, 10), ("L", "D", "C"): (0, 14, 0), ("L", "L", "C"): (9, 9, 9),
        # player 3 defects
        ("C", "C", "D"): (0, 0, 14), ("C", "D", "D"): (0, 14, 14), ("C", "L", "D"): (0, 0, 14),
        ("D", "C", "D"): (14, 0, 14), ("D", "D", "D"): (14, 14, 0), ("D", "L", "D"): (14, 0, 14),
        ("L", "C", "D"): (0, 0, 14), ("L", "D", "D"): (0, 14, 14), ("L", "L", "D"): (9, 9, 9),
        # player 3 hires a lawyer
        ("C", "C", "L"): (10, 10, 9), ("C", "D", "L"): (0, 14, 0), ("C", "L", "L"): (9, 9, 9),
        ("D", "C", "L"): (14, 0, 0), ("D", "D", "L"): (14, 14, 0), ("D", "L", "L"): (9, 9, 9),
        ("L", "C", "L"): (9, 9, 9), ("L", "D", "L"): (9, 9, 9), ("L", "L", "L"): (9, 9, 9),
    }
    g = _table(labels, rows)
    g.name = "pirates"
    return g


def trust_mixed_game() -> NormalFormGame:
    labels = [("K", "S"), ("G", "C")]
    rows = {("K", "G"): (3, 0), ("K", "C"): (3, 0), ("S", "G"): (2, 4), ("S", "C"): (4, 2)}
    g = _table(labels, rows)
    g.name = "trust-mixed"
    return g


def trust_simple_game() -> NormalFormGame:
    labels = [("K", "S"), ("G", "F")]
    rows = {("K", "G"): (3, 0), ("K", "F"): (3, 0), ("S", "G"): (0, 6), ("S", "F"): (4, 2)}
    g = _table(labels, rows)
    g.name = "trust-simple"
    return g


def pd3_game() -> NormalFormGame:
    """Three-player prisoner's dilemma: #cooperators + 2 for defecting."""
    def pay(prof):
        coop = sum(1 for a in prof if a == 0)
        return tuple(coop + 2 * (a == 1) for a in prof)

    g = NormalFormGame.from_function([("C", "D")] * 3, pay, name="pd3")
    return g


def pd2_game() -> NormalFormGame:
    labels = [("C", "D"), ("C", "D")]
    rows = {("C", "C"): (2, 2), ("C", "D"): (0, 3), ("D", "C"): (3, 0), ("D", "D"): (1, 1)}
    g = _table(labels, rows)
    g.name = "pd2"
    return g


class GovernmentCitizensGame:
    """One government (L/D) and many citizens (P/E).

    The payoff tensor has 2^n cells, so utilities are computed in closed form
    from the number of evading citizens instead of being tabulated.
    """

    name = "gov-citizens"

    def __init__(self, citizens: int = 99):
        self.citizens = citizens
        self.n = citizens + 1
        self.action_labels = (("L", "D"),) + (("P", "E"),) * citizens
        self.sizes = tuple(len(a) for a in self.action_labels)
        self.player_names = ("Government",) + tuple(f"Citizen{j}" for j in range(1, citizens + 1))

    @property
    def player_count(self) -> int:
        return self.n

    def gov_payoff(self, gov: int, evaders: int):
        if evaders == self.citizens:
            return F(-100)
        if evaders == 0:
            return F(0) if gov == 0 else F(1)
        return F(-10) if gov == 0 else F(1)

    @staticmethod
    def citizen_payoff(gov: int, own: int):
        return ((F(0), F(1)), (F(-1, 10), F(-10)))[gov][own]

    def u(self, profile: Sequence[int]) -> tuple:
        if len(profile) != self.n:
            raise GameError("profile length mismatch")
        gov = profile[0]
        k = sum(profile[1:])
        return (self.gov_payoff(gov, k),) + tuple(self.citizen_payoff(gov, a) for a in profile[1:])

    def payoffs_items(self):
        raise GameError("the government/citizens game is not tabulated")

    def expected_utility_fast(self, profile: Sequence) -> tuple:
        vecs = [_as_vector(s, size) for s, size in zip(profile, self.sizes)]
        g = vecs[0]
        evade = [v[1] for v in vecs[1:]]
        one = g[0] * 0 + 1
        none_evade = one
        all_evade = one
        # group identical probabilities so long products stay cheap
        tally: dict = {}
        for e in evade:
            tally[e] = tally.get(e, 0) + 1
        for e, c in tally.items():
            none_evade *= (1 - e) ** c
            all_evade *= e ** c
        some = 1 - none_evade - all_evade
        gov = (g[0] * (self.gov_payoff(0, 0) * none_evade + self.gov_payoff(0, 1) * some)
               + g[1] * (self.gov_payoff(1, 0) * none_evade + self.gov_payoff(1, 1) * some)
               + F(-100) * all_evade)
        out = [gov]
        for e in evade:
            out.append(g[0] * ((1 - e) * 0 + e * 1) + g[1] * ((1 - e) * F(-1, 10) + e * F(-10)))
        return tuple(out)

    def expected_utility(self, profile):
        return self.expected_utility_fast(profile)

    def minimax_custom(self, i: int) -> MinimaxResult:
        if i == 0:
            # all citizens evading caps the government at -100 whatever it does
            punish = {j: MixedStrategy.pure(1, 2) for j in range(1, self.n)}
            return MinimaxResult(0, F(-100), punish, True)
        # the government's D gives the citizen at most -1/10
        punish = {0: MixedStrategy.pure(1, 2)}
        punish.update({j: MixedStrategy.pure(0, 2) for j in range(1, self.n) if j != i})
        return MinimaxResult(i, F(-1, 10), punish, True)

    def __repr__(self) -> str:
        return f"GovernmentCitizensGame(citizens={self.citizens})"


def gov_citizens_game(citizens: int = 99) -> GovernmentCitizensGame:
    return GovernmentCitizensGame(citizens)


BUILTIN_GAMES = {
    "intro": intro_game,
    "pirates": pirates_game,
    "trust-mixed": trust_mixed_game,
    "trust-simple": trust_simple_game,
    "pd3": pd3_game,
    "pd2": pd2_game,
    "gov-citizens": gov_citizens_game,
}


def builtin_game(name: str):
    try:
        return BUILTIN_GAMES[name]()
    except KeyError:
        raise GameError(f"unknown builtin game {name!r}; known: {sorted(BUILTIN_GAMES)}") from None
