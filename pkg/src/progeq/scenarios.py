"""Game and scenario documents: parsing, bot construction, builtin scenarios."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from .builtin_games import BUILTIN_GAMES, builtin_game
from .game_core import GameError, MixedStrategy, NormalFormGame
from .pibots import (build_correlated_bot, build_policy, build_uncorrelated_bot, constant_bot,
                     double_sample, mixed_bot, naive_two_sim, private_coin_bot, q_mix,
                     random_opponent_sim)
from .program_vm import Fuel, Program


class ScenarioError(ValueError):
    """Malformed game or scenario document."""


def parse_rational(x) -> Fraction:
    """Numbers or "p/q" strings; floats go through their shortest repr."""
    if isinstance(x, bool):
        raise ScenarioError(f"not a number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError):
            raise ScenarioError(f"not a rational: {x!r}") from None
    raise ScenarioError(f"not a number: {x!r}")


def format_rational(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# games -----------------------------------------------------------------------------

def game_from_dict(doc: Mapping) -> NormalFormGame:
    """{players: [names], actions: [[labels]], payoffs: nested arrays of payoff vectors}."""
    try:
        actions = [list(a) for a in doc["actions"]]
        payoffs = doc["payoffs"]
    except (KeyError, TypeError):
        raise ScenarioError("a game needs 'actions' and 'payoffs'") from None
    names = doc.get("players")
    n = len(actions)
    if names is not None and len(names) != n:
        raise ScenarioError("'players' and 'actions' lengths differ")
    table = {}

    def walk(node, prefix):
        depth = len(prefix)
        if depth == n:
            if not isinstance(node, list) or len(node) != n:
                raise ScenarioError(f"cell {prefix} must list {n} payoffs")
            table[tuple(prefix)] = tuple(parse_rational(v) for v in node)
            return
        if not isinstance(node, list) or len(node) != len(actions[depth]):
            raise ScenarioError(f"payoff array at depth {depth} must have {len(actions[depth])} entries")
        for k, child in enumerate(node):
            walk(child, prefix + [k])

    walk(payoffs, [])
    try:
        return NormalFormGame(actions, table, names, doc.get("name", "game"))
    except GameError as exc:
        raise ScenarioError(str(exc)) from None


def game_to_dict(game: NormalFormGame) -> dict:
    def build(prefix):
        if len(prefix) == game.n:
            return [format_rational(v) for v in game.u(tuple(prefix))]
        return [build(prefix + [k]) for k in range(game.sizes[len(prefix)])]

    return {"name": game.name, "players": list(game.player_names),
            "actions": [list(a) for a in game.action_labels], "payoffs": build([])}


def load_game(ref, base_dir: str | None = None):
    if isinstance(ref, Mapping):
        return game_from_dict(ref)
    if not isinstance(ref, str):
        raise ScenarioError(f"game must be a builtin name, a path or an object, not {ref!r}")
    if ref in BUILTIN_GAMES:
        return builtin_game(ref)
    path = ref if base_dir is None or os.path.isabs(ref) else os.path.join(base_dir, ref)
    if not os.path.exists(path):
        raise ScenarioError(f"unknown game {ref!r}; builtins are {sorted(BUILTIN_GAMES)}")
    try:
        with open(path) as fh:
            return game_from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


# bots ---------------------------------------------------------------------------------

def _label(game, player: int, a) -> int:
    if isinstance(a, int) and not isinstance(a, bool):
        if not 0 <= a < game.sizes[player]:
            raise ScenarioError(f"action {a} out of range for player {player + 1}")
        return a
    try:
        return game.action_index(player, a)
    except ValueError:
        raise ScenarioError(f"player {player + 1} has no action {a!r}") from None


def _strategy(game, player: int, spec) -> MixedStrategy:
    if isinstance(spec, list):
        try:
            return MixedStrategy(tuple(parse_rational(p) for p in spec))
        except GameError as exc:
            raise ScenarioError(str(exc)) from None
    return MixedStrategy.pure(_label(game, player, spec), game.sizes[player])


def build_bot(spec: Mapping, player: int, game, eps=None) -> Program:
    kind = spec.get("kind")
    e = spec.get("eps", eps)
    e = float(parse_rational(e)) if e is not None else None

    def need_eps():
        if e is None:
            raise ScenarioError(f"bot {kind!r} for player {player + 1} needs an epsilon")
        return e

    try:
        if kind in ("correlated", "uncorrelated"):
            policy = build_policy(spec.get("policy", {}), player, game)
            maker = build_correlated_bot if kind == "correlated" else build_uncorrelated_bot
            return maker(player, need_eps(), policy)
        if kind == "constant":
            return constant_bot(player, _label(game, player, spec["action"]))
        if kind == "mixed":
            return mixed_bot(player, _strategy(game, player, spec["strategy"]))
        if kind == "private_coin":
            return private_coin_bot(player, _strategy(game, player, spec["strategy"]))
        if kind == "naive_two_sim":
            if game.n != 3:
                raise ScenarioError("naive_two_sim needs three players")
            return naive_two_sim(player, need_eps())
        if kind == "random_opponent_sim":
            return random_opponent_sim(player, need_eps())
        if kind == "double_sample":
            if game.n != 2:
                raise ScenarioError("double_sample is a two-player bot")
            other = 1 - player
            return double_sample(player, other, _label(game, player, spec.get("keep", 0)),
                                 _label(game, player, spec.get("share", 1)),
                                 _label(game, other, spec.get("hoped", 1)))
        if kind == "q_mix":
            base = build_bot(spec["base"], player, game, eps)
            return q_mix(base, float(parse_rational(spec["q"])),
                         _strategy(game, player, spec["deviation"]), need_eps())
    except KeyError as exc:
        raise ScenarioError(f"bot {kind!r} is missing field {exc}") from None
    except (ValueError, GameError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"bot {kind!r}: {exc}") from None
    raise ScenarioError(f"unknown bot kind {kind!r}")


# scenarios ---------------------------------------------------------------------------------

MODES = ("correlated", "uncorrelated")


@dataclass
class Scenario:
    name: str
    game_ref: Any
    game: Any
    mode: str
    eps: Fraction | None
    bots: list
    trials: int = 1000
    seed: int = 0
    fuel: Fuel = field(default_factory=Fuel)
    memo: bool = True
    analysis: dict = field(default_factory=dict)
    max_nonhalt: float = 0.01

    def programs(self) -> list[Program]:
        e = float(self.eps) if self.eps is not None else None
        return [build_bot(spec, j, self.game, e) for j, spec in enumerate(self.bots)]

    def to_dict(self) -> dict:
        return {
            "name": self.name, "game": self.game_ref, "mode": self.mode,
            "epsilon": None if self.eps is None else format_rational(self.eps),
            "bots": self.bots, "trials": self.trials, "seed": self.seed,
            "fuel": {"depth": self.fuel.depth, "calls": self.fuel.calls},
            "memo": self.memo, "analysis": self.analysis, "max_nonhalt": self.max_nonhalt,
        }


def scenario_from_dict(doc: Mapping, base_dir: str | None = None) -> Scenario:
    if not isinstance(doc, Mapping):
        raise ScenarioError("a scenario must be a JSON object")
    if "game" not in doc or "bots" not in doc:
        raise ScenarioError("a scenario needs 'game' and 'bots'")
    game = load_game(doc["game"], base_dir)
    if not isinstance(game, NormalFormGame):
        raise ScenarioError("program-game scenarios need a tabulated game")
    bots = list(doc["bots"])
    if len(bots) != game.n:
        raise ScenarioError(f"{len(bots)} bots for a {game.n}-player game")
    mode = doc.get("mode", "correlated")
    if mode not in MODES:
        raise ScenarioError(f"mode must be one of {MODES}")
    eps = doc.get("epsilon")
    eps = parse_rational(eps) if eps is not None else None
    if eps is not None and not 0 < eps <= 1:
        raise ScenarioError("epsilon must lie in (0, 1]")
    fuel_doc = doc.get("fuel", {})
    fuel = Fuel(depth=int(fuel_doc.get("depth", Fuel().depth)), calls=int(fuel_doc.get("calls", Fuel().calls)))
    trials = int(doc.get("trials", 1000))
    if trials < 1:
        raise ScenarioError("trials must be positive")
    seed = parse_seed(doc.get("seed", 0))
    sc = Scenario(doc.get("name", "scenario"), doc["game"], game, mode, eps, bots, trials, seed, fuel,
                  bool(doc.get("memo", True)), dict(doc.get("analysis", {})),
                  float(doc.get("max_nonhalt", 0.01)))
    sc.programs()  # validate bot specs early
    return sc


def parse_seed(x) -> int:
    """Decimal or 0x-prefixed hex 64-bit seed."""
    if isinstance(x, int) and not isinstance(x, bool):
        val = x
    elif isinstance(x, str):
        try:
            val = int(x.strip(), 0)
        except ValueError:
            raise ScenarioError(f"bad seed {x!r}") from None
    else:
        raise ScenarioError(f"bad seed {x!r}")
    if not 0 <= val < 2 ** 64:
        raise ScenarioError("seed must fit in 64 bits")
    return val


def _pirates_bots(kind):
    return [{"kind": kind, "policy": {"kind": "pirates"}}] * 3


BUILTIN_SCENARIOS: dict[str, dict] = {
    "pirates-correlated-eq": {
        "name": "pirates-correlated-eq", "game": "pirates", "mode": "correlated", "epsilon": "1/5",
        "bots": _pirates_bots("correlated"), "trials": 2000, "seed": 1,
        "analysis": {
            "target": ["C", "C", "C"], "thresholds": "pirates-correlated",
            "deviations": [{"player": 1, "family": "q_mix", "q": ["1/2", "1"], "deviation": "D"}],
        },
    },
    "pirates-uncorrelated": {
        "name": "pirates-uncorrelated", "game": "pirates", "mode": "uncorrelated", "epsilon": "1/20",
        "bots": _pirates_bots("uncorrelated"), "trials": 4000, "seed": 3,
        "analysis": {
            "target": ["C", "C", "C"], "cor7": True,
            "deviations": [{"player": 1, "family": "q_mix", "q": ["1/4", "1/2", "3/4"], "deviation": "D",
                            "predictor": "pirates-uncorrelated-L"}],
        },
    },
    "trust-simple-doublesample": {
        "name": "trust-simple-doublesample", "game": "trust-simple", "mode": "correlated",
        "bots": [{"kind": "double_sample", "keep": "K", "share": "S", "hoped": "F"},
                 {"kind": "constant", "action": "F"}],
        "trials": 1000, "seed": 8,
        "analysis": {"target": ["S", "F"], "cor7": True, "prop5": {"lambda": "1/1000"}},
    },
    "intro-uncorrelated": {
        "name": "intro-uncorrelated", "game": "intro", "mode": "uncorrelated", "epsilon": "1/10",
        "bots": [{"kind": "uncorrelated", "policy": {"kind": "intro"}}] * 3, "trials": 2000, "seed": 5,
        "analysis": {
            "target": ["C", "C", "C"], "cor7": True, "prop5": {"lambda": "1/2"}, "thresholds": "intro",
            "deviations": [
                {"player": 2, "family": "q_mix", "q": ["1/2", "1"], "deviation": "D", "predictor": "intro"},
                {"player": 3, "family": "q_mix", "q": ["1/2", "1"], "deviation": "D", "predictor": "intro"},
            ],
        },
    },
    "trust-mixed-eq": {
        "name": "trust-mixed-eq", "game": "trust-mixed", "mode": "uncorrelated", "epsilon": "1/20",
        "bots": [{"kind": "uncorrelated", "policy": {"kind": "trust_mixed"}}] * 2, "trials": 2000, "seed": 7,
        "fuel": {"depth": 10000, "calls": 100000000},
        "analysis": {
            "deviations": [{"player": 2, "family": "q_mix", "q": ["1/4", "1/2", "3/4"], "deviation": "G",
                            "predictor": "trust-mixed", "paired": True}],
        },
    },
    "stage-nash-constant": {
        "name": "stage-nash-constant", "game": "pd2", "mode": "correlated",
        "bots": [{"kind": "constant", "action": "D"}, {"kind": "constant", "action": "D"}],
        "trials": 100, "seed": 2,
        "analysis": {
            "target": ["D", "D"], "cor7": True, "prop5": {"lambda": "1/1000"},
            "deviations": [{"player": 1, "family": "constant", "actions": "all"},
                           {"player": 2, "family": "constant", "actions": "all"}],
        },
    },
}


def load_scenario(ref: str) -> Scenario:
    """A builtin scenario name or a path to a scenario JSON file."""
    if ref in BUILTIN_SCENARIOS:
        return scenario_from_dict(copy.deepcopy(BUILTIN_SCENARIOS[ref]))
    if not os.path.exists(ref):
        raise ScenarioError(f"no builtin scenario or file named {ref!r}; builtins: {sorted(BUILTIN_SCENARIOS)}")
    try:
        with open(ref) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{ref}: {exc}") from None
    return scenario_from_dict(doc, os.path.dirname(os.path.abspath(ref)))
