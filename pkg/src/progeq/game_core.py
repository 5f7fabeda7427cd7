"""Finite normal-form games with exact rational payoffs."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ._exact_lp import linprog_exact
from .rand_streams import as_fraction

F = Fraction


class GameError(ValueError):
    pass


@dataclass(frozen=True)
class MixedStrategy:
    probs: tuple

    def __post_init__(self):
        probs = tuple(as_fraction(p) for p in self.probs)
        if not probs:
            raise GameError("empty strategy")
        if any(p < 0 for p in probs):
            raise GameError(f"negative probability in {probs}")
        if sum(probs) != 1:
            raise GameError(f"probabilities sum to {sum(probs)}, not 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def pure(cls, k: int, size: int) -> "MixedStrategy":
        if not 0 <= k < size:
            raise GameError(f"action {k} out of range for {size} actions")
        return cls(tuple(F(int(j == k)) for j in range(size)))

    @classmethod
    def uniform(cls, size: int) -> "MixedStrategy":
        return cls(tuple(F(1, size) for _ in range(size)))

    def __len__(self) -> int:
        return len(self.probs)

    def __getitem__(self, k: int) -> Fraction:
        return self.probs[k]

    def mix(self, other: "MixedStrategy", weight) -> "MixedStrategy":
        """(1-weight)·self + weight·other."""
        w = as_fraction(weight)
        return MixedStrategy(tuple((1 - w) * a + w * b for a, b in zip(self.probs, other.probs)))

    @property
    def support(self) -> list[int]:
        return [k for k, p in enumerate(self.probs) if p > 0]

    @property
    def is_pure(self) -> bool:
        return len(self.support) == 1

    def sample(self, u: float) -> int:
        acc = 0.0
        last = self.support[-1]
        for k, p in enumerate(self.probs):
            if p == 0:
                continue
            acc += float(p)
            if u < acc:
                return k
        return last


def pure(k: int, size: int) -> MixedStrategy:
    return MixedStrategy.pure(k, size)


def _as_vector(s, size: int) -> tuple:
    if isinstance(s, MixedStrategy):
        vec = s.probs
    elif isinstance(s, int):
        vec = MixedStrategy.pure(s, size).probs
    else:
        vec = tuple(s)
    if len(vec) != size:
        raise GameError(f"strategy has {len(vec)} entries, expected {size}")
    return vec


class NormalFormGame:
    """n-player game; ``payoffs`` maps each action-index profile to a payoff tuple."""

    def __init__(self, action_labels: Sequence[Sequence[str]], payoffs: Mapping[tuple, Sequence],
                 player_names: Sequence[str] | None = None, name: str = "game"):
        self.action_labels = tuple(tuple(a) for a in action_labels)
        self.n = len(self.action_labels)
        if self.n == 0:
            raise GameError("a game needs at least one player")
        for labels in self.action_labels:
            if not labels:
                raise GameError("every player needs at least one action")
            if len(set(labels)) != len(labels):
                raise GameError(f"duplicate action labels {labels}")
        self.sizes = tuple(len(a) for a in self.action_labels)
        self.player_names = tuple(player_names or (f"P{i + 1}" for i in range(self.n)))
        self.name = name
        table = {}
        for prof in itertools.product(*(range(s) for s in self.sizes)):
            if prof not in payoffs:
                raise GameError(f"missing payoff cell {prof}")
            cell = tuple(as_fraction(v) for v in payoffs[prof])
            if len(cell) != self.n:
                raise GameError(f"cell {prof} has {len(cell)} payoffs, expected {self.n}")
            table[prof] = cell
        if len(payoffs) != len(table):
            raise GameError("payoff table has cells outside the action grid")
        self.payoffs = table

    @classmethod
    def from_function(cls, action_labels, fn: Callable[[tuple], Sequence], **kw) -> "NormalFormGame":
        sizes = [len(a) for a in action_labels]
        table = {prof: fn(prof) for prof in itertools.product(*(range(s) for s in sizes))}
        return cls(action_labels, table, **kw)

    @property
    def player_count(self) -> int:
        return self.n

    def action_index(self, player: int, label: str) -> int:
        return self.action_labels[player].index(label)

    def profile(self, *labels: str) -> tuple:
        return tuple(self.action_index(i, l) for i, l in enumerate(labels))

    def u(self, profile: tuple) -> tuple:
        return self.payoffs[tuple(profile)]

    def profiles(self) -> Iterable[tuple]:
        return itertools.product(*(range(s) for s in self.sizes))

    def float_payoffs(self) -> dict:
        cached = getattr(self, "_float", None)
        if cached is None:
            cached = self._float = {p: tuple(float(v) for v in c) for p, c in self.payoffs.items()}
        return cached

    @cached_property
    def payoff_array(self) -> np.ndarray:
        arr = np.zeros(self.sizes + (self.n,))
        for p, c in self.payoffs.items():
            arr[p] = [float(v) for v in c]
        return arr

    def expected_utility(self, profile: Sequence) -> tuple:
        return expected_utility(self, profile)

    def __repr__(self) -> str:
        return f"NormalFormGame({self.name!r}, sizes={self.sizes})"


def expected_utility(game, profile: Sequence) -> tuple:
    """Exact multilinear expectation of every player's payoff."""
    if len(profile) != game.n:
        raise GameError(f"profile has {len(profile)} strategies, game has {game.n} players")
    if hasattr(game, "expected_utility_fast"):
        return game.expected_utility_fast(profile)
    vecs = [_as_vector(s, size) for s, size in zip(profile, game.sizes)]
    zero = vecs[0][0] * 0
    total = [zero] * game.n
    supports = [[(k, p) for k, p in enumerate(v) if p != 0] for v in vecs]
    for combo in itertools.product(*supports):
        weight = 1
        for _, p in combo:
            weight *= p
        cell = game.payoffs[tuple(k for k, _ in combo)]
        for i in range(game.n):
            total[i] += weight * cell[i]
    return tuple(total)


@dataclass(frozen=True)
class JointOutcomeDistribution:
    mass: Mapping[tuple, Fraction]

    def __post_init__(self):
        mass = {tuple(k): as_fraction(v) for k, v in self.mass.items()}
        if any(v < 0 for v in mass.values()):
            raise GameError("negative mass")
        if sum(mass.values()) != 1:
            raise GameError("joint masses must sum to 1")
        object.__setattr__(self, "mass", mass)

    def marginal(self, player: int, size: int) -> MixedStrategy:
        probs = [F(0)] * size
        for prof, m in self.mass.items():
            probs[prof[player]] += m
        return MixedStrategy(tuple(probs))


def expected_utility_joint(game, joint: JointOutcomeDistribution) -> tuple:
    total = [F(0)] * game.n
    for prof, m in joint.mass.items():
        if len(prof) != game.n or any(not 0 <= a < s for a, s in zip(prof, game.sizes)):
            raise GameError(f"profile {prof} is not in the game")
        cell = game.u(prof)
        for i in range(game.n):
            total[i] += m * cell[i]
    return tuple(total)


# minimax ----------------------------------------------------------------------

@dataclass
class MinimaxResult:
    player: int
    value: Fraction
    punisher_profile: dict  # opponent index -> MixedStrategy
    certified: bool


def _minimax_two_player(game: NormalFormGame, i: int) -> MinimaxResult:
    j = 1 - i
    m, k = game.sizes[i], game.sizes[j]

    def pay(a, b):
        prof = (a, b) if i == 0 else (b, a)
        return game.u(prof)[i]

    # variables y_0..y_{k-1}, z+ , z- ; minimise z s.t. sum_b pay(a,b) y_b <= z
    c = [0] * k + [1, -1]
    A_ub = [[pay(a, b) for b in range(k)] + [-1, 1] for a in range(m)]
    b_ub = [0] * m
    A_eq = [[1] * k + [0, 0]]
    res = linprog_exact(c, A_ub, b_ub, A_eq, [1])
    y = MixedStrategy(tuple(res.x[:k]))
    return MinimaxResult(i, res.value, {j: y}, True)


def _simplex_grid(size: int, step: int) -> list[tuple]:
    """All points of the simplex with coordinates in multiples of 1/step."""
    pts = []
    for combo in itertools.combinations_with_replacement(range(size), step):
        counts = [0] * size
        for c in combo:
            counts[c] += 1
        pts.append(tuple(counts))
    return pts


def _minimax_grid(game, i: int, resolution: int = 64, rounds: int = 3) -> MinimaxResult:
    others = [j for j in range(game.n) if j != i]
    arr = game.payoff_array[..., i]
    arr = np.moveaxis(arr, i, 0)  # own action first, then others in order
    coarse = max(2, resolution // (2 ** rounds))

    def grid_for(size, step, center=None, radius=None):
        pts = np.array(_simplex_grid(size, step), dtype=float) / step
        if center is not None:
            keep = np.max(np.abs(pts - center), axis=1) <= radius + 1e-12
            pts = pts[keep]
        return pts

    def best_over(grids):
        best_val, best_pt = math.inf, None
        for combo in itertools.product(*[range(len(g)) for g in grids]):
            vals = arr
            for axis_grid, idx in zip(grids, combo):
                vals = np.tensordot(vals, axis_grid[idx], axes=([1], [0]))
            v = float(np.max(vals))
            if v < best_val - 1e-15:
                best_val, best_pt = v, [g[idx] for g, idx in zip(grids, combo)]
        return best_val, best_pt

    step = coarse
    grids = [grid_for(game.sizes[j], step) for j in others]
    _, best = best_over(grids)
    for _ in range(rounds):
        step *= 2
        radius = 2.0 / step * 2
        grids = [grid_for(game.sizes[j], step, center=c, radius=radius) for j, c in zip(others, best)]
        _, best = best_over(grids)
    punishers = {}
    for j, pt in zip(others, best):
        counts = [F(round(x * step)) for x in pt]
        total = sum(counts)
        punishers[j] = MixedStrategy(tuple(c / total for c in counts))
    value = _best_reply_value(game, i, punishers)
    return MinimaxResult(i, value, punishers, False)


def _best_reply_value(game, i: int, punishers: Mapping[int, MixedStrategy]) -> Fraction:
    best = None
    for a in range(game.sizes[i]):
        prof = [punishers[j] if j != i else MixedStrategy.pure(a, game.sizes[i]) for j in range(game.n)]
        v = expected_utility(game, prof)[i]
        best = v if best is None or v > best else best
    return best


def minimax(game, i: int, resolution: int = 64, rounds: int = 3) -> MinimaxResult:
    if hasattr(game, "minimax_custom"):
        return game.minimax_custom(i)
    if game.n == 1:
        return MinimaxResult(i, max(game.u((a,))[0] for a in range(game.sizes[0])), {}, True)
    if game.n == 2:
        return _minimax_two_player(game, i)
    return _minimax_grid(game, i, resolution, rounds)


# rationality and feasibility ----------------------------------------------------

@dataclass
class FeasibilityReport:
    individually_rational: bool
    strictly: bool
    ir_certified: bool
    minimax_values: tuple
    feasible_with_corr: bool
    correlation_weights: dict | None
    feasible_no_corr: bool
    no_corr_distance: float
    no_corr_witness: tuple | None
    tolerance: float


def correlated_decomposition(game: NormalFormGame, v: Sequence) -> dict | None:
    """Weights on pure profiles whose payoff mix equals v exactly, or None."""
    v = [as_fraction(x) for x in v]
    profs = list(game.profiles())
    A_eq = [[game.u(p)[i] for p in profs] for i in range(game.n)] + [[1] * len(profs)]
    b_eq = v + [1]
    res = linprog_exact([0] * len(profs), A_eq=A_eq, b_eq=b_eq)
    if res.status != "optimal":
        return None
    return {p: w for p, w in zip(profs, res.x) if w != 0}


def _no_corr_search(game, v, resolution: int) -> tuple[float, tuple]:
    target = np.array([float(x) for x in v])
    grids = [np.array(_simplex_grid(s, resolution), dtype=float) / resolution for s in game.sizes]
    arr = game.payoff_array
    best, witness = math.inf, None
    for combo in itertools.product(*[range(len(g)) for g in grids]):
        vals = arr
        for g, idx in zip(grids, combo):
            vals = np.tensordot(g[idx], vals, axes=([0], [0]))
        d = float(np.max(np.abs(vals - target)))
        if d < best:
            best, witness = d, tuple(tuple(g[idx]) for g, idx in zip(grids, combo))
            if d == 0:
                break
    return best, witness


def rationality_and_feasibility(game, v: Sequence, resolution: int = 16,
                                tolerance: float | None = None) -> FeasibilityReport:
    if len(v) != game.n:
        raise GameError("payoff vector length does not match the game")
    v = tuple(as_fraction(x) for x in v)
    mm = [minimax(game, i) for i in range(game.n)]
    ir = all(v[i] >= mm[i].value for i in range(game.n))
    strict = all(v[i] > mm[i].value for i in range(game.n))
    certified = all(m.certified for m in mm)
    weights = correlated_decomposition(game, v)
    # pure profiles first, exactly
    exact_pure = next((p for p in game.profiles() if game.u(p) == v), None)
    if exact_pure is not None:
        dist, witness = 0.0, tuple(tuple(float(x) for x in MixedStrategy.pure(a, s).probs)
                                   for a, s in zip(exact_pure, game.sizes))
    else:
        dist, witness = _no_corr_search(game, v, resolution)
    spread = max((abs(float(c[i])) for c in game.payoffs.values() for i in range(game.n)), default=1.0)
    tol = tolerance if tolerance is not None else 2 * game.n * spread / resolution
    return FeasibilityReport(ir, strict, certified, tuple(m.value for m in mm), weights is not None,
                             weights, dist <= tol, dist, witness, tol)


# additive separability ----------------------------------------------------------

@dataclass
class SeparableDecomposition:
    components: list  # components[i][j][a_j] -> Fraction

    def value(self, i: int, profile: tuple) -> Fraction:
        return sum((self.components[i][j][a] for j, a in enumerate(profile)), F(0))


def separable_decomposition(game: NormalFormGame) -> SeparableDecomposition | None:
    """u_i(a) = Σ_j u_ij(a_j) with u_ij(first action) = 0 for j ≠ i, or None."""
    base = tuple(0 for _ in range(game.n))
    comps = []
    for i in range(game.n):
        row = []
        for j in range(game.n):
            vals = []
            for a in range(game.sizes[j]):
                prof = list(base)
                prof[j] = a
                if j == i:
                    vals.append(game.u(tuple(prof))[i])
                else:
                    vals.append(game.u(tuple(prof))[i] - game.u(base)[i])
            row.append(vals)
        comps.append(row)
    dec = SeparableDecomposition(comps)
    for prof in game.profiles():
        cell = game.u(prof)
        for i in range(game.n):
            if dec.value(i, prof) != cell[i]:
                return None
    return dec
