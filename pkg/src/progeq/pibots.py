"""Bots: grounded policy bots, reference bots, deviation bots and the
schedule-based simulationist bot."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Mapping, Sequence

from .game_core import MixedStrategy, minimax
from .program_vm import APPLY_STAR, Call, Program, Sentinel
from .rand_streams import DeltaSchedule, StreamView, reparameterize_first

F = Fraction


class ScreenedHistory:
    """Rounds of simulated play; entries are action indices or Sentinel(j)."""

    __slots__ = ("rounds",)

    def __init__(self, rounds: Sequence[tuple]):
        self.rounds = rounds

    def __len__(self) -> int:
        return len(self.rounds)

    def __getitem__(self, k):
        return self.rounds[k]

    def __iter__(self):
        return iter(self.rounds)

    def __eq__(self, other) -> bool:
        return isinstance(other, ScreenedHistory) and list(self.rounds) == list(other.rounds)

    def __repr__(self) -> str:
        return f"ScreenedHistory({list(self.rounds)!r})"

    def validate(self, n: int) -> None:
        for rnd in self.rounds:
            if len(rnd) != n:
                raise ValueError("round length does not match the player count")
            for j, a in enumerate(rnd):
                if isinstance(a, Sentinel) and a.player != j:
                    raise ValueError(f"screening symbol {a!r} in column {j}")

    def first_deviation(self, alpha: "ActionSequence") -> tuple[int, int] | None:
        """(round index, deviating player) of the first disagreement with alpha.

        Simultaneous deviators resolve to the lowest player index.
        """
        rounds = self.rounds
        expected = alpha.prefix(len(rounds))
        if rounds == expected:
            return None
        for t, (got, want) in enumerate(zip(rounds, expected)):
            if got != want:
                for j, (a, b) in enumerate(zip(got, want)):
                    if a != b:
                        return t, j
        return None


class ActionSequence:
    """Eventually periodic sequence of pure profiles (rounds numbered from 0)."""

    def __init__(self, prefix: Sequence[tuple], cycle: Sequence[tuple]):
        if not cycle:
            raise ValueError("the cycle must be non-empty")
        self.pre = [tuple(p) for p in prefix]
        self.cycle = [tuple(p) for p in cycle]
        self._cache: list[tuple] = []

    @classmethod
    def constant(cls, profile: tuple) -> "ActionSequence":
        return cls([], [tuple(profile)])

    def __getitem__(self, t: int) -> tuple:
        if t < len(self.pre):
            return self.pre[t]
        return self.cycle[(t - len(self.pre)) % len(self.cycle)]

    def prefix(self, length: int) -> list[tuple]:
        cache = self._cache
        while len(cache) < length:
            cache.append(self[len(cache)])
        return cache[:length]

    def to_dict(self) -> dict:
        return {"prefix": [list(p) for p in self.pre], "cycle": [list(p) for p in self.cycle]}


# policies ------------------------------------------------------------------------

@dataclass
class Policy:
    """π(history, q, x) -> action.

    ``q`` is the uniform signal carried by r_0 (rescaled to [0, 1) given the
    time step); ``x`` is the tracked private stream view or None.
    """

    act: Callable[[ScreenedHistory, float, Any], int]
    reads_private: str = "never"
    horizon: str = "full"
    name: str = "policy"

    def __call__(self, history: ScreenedHistory, q: float, x=None) -> int:
        return self.act(history, q, x)


def constant_policy(action: int) -> Policy:
    return Policy(lambda h, q, x: action, "never", "myopic", f"constant({action})")


@dataclass(frozen=True)
class PunishmentMap:
    """Per punisher j: observed deviator action -> MixedStrategy over A_j."""

    deviator: int
    maps: Mapping[int, Mapping[Any, MixedStrategy]]

    def strategy(self, punisher: int, observed) -> MixedStrategy:
        table = self.maps[punisher]
        if observed in table:
            return table[observed]
        if isinstance(observed, Sentinel) and "R" in table:
            return table["R"]
        return table[min(k for k in table if isinstance(k, int))]


def _draw(strategy: MixedStrategy, uniform_source) -> int:
    if strategy.is_pure:
        return strategy.support[0]
    return strategy.sample(uniform_source())


def sequence_follower(player: int, alpha: ActionSequence,
                      punishments: Mapping[int, PunishmentMap] | str = "minimax-grim",
                      game=None, randomness: str = "signal") -> Policy:
    """Follow alpha; once player j deviates first, play the punishment against j.

    With a PunishmentMap the response depends on j's most recent action; with
    "minimax-grim" it is the minimax punisher strategy against j. A screening
    symbol counts as a deviation. Mixed punishments draw from the signal q
    (``randomness="signal"``) or from the private x_0 (``"private"``).
    """
    grim = punishments == "minimax-grim"
    if grim:
        if game is None:
            raise ValueError("minimax-grim punishment needs the game")
        punishers = {j: minimax(game, j).punisher_profile for j in range(game.n) if j != player}
    mixed_any = False

    def act(history: ScreenedHistory, q: float, x) -> int:
        t = len(history)
        dev = history.first_deviation(alpha)
        if dev is None or dev[1] == player:
            return alpha[t][player]
        j = dev[1]
        if grim:
            strat = punishers[j][player]
        else:
            strat = punishments[j].strategy(player, history[t - 1][j])
        if randomness == "private":
            return _draw(strat, lambda: x.element(0))
        return _draw(strat, lambda: q)

    if grim:
        mixed_any = any(not s[player].is_pure for s in punishers.values())
    else:
        mixed_any = any(not s.is_pure for pm in punishments.values() if player in pm.maps
                        for s in pm.maps[player].values())
    reads = "sometimes" if (mixed_any and randomness == "private") else "never"
    return Policy(act, reads, "full", f"sequence_follower(p{player + 1})")


def grim_minimax(player: int, game, target: tuple | ActionSequence) -> Policy:
    """Follow the target; punish the first deviator (screening included) with
    independent minimax, randomizing from the private stream."""
    alpha = target if isinstance(target, ActionSequence) else ActionSequence.constant(target)
    pol = sequence_follower(player, alpha, "minimax-grim", game=game, randomness="private")
    pol.name = f"grim_minimax(p{player + 1})"
    return pol


def pirates_policy(player: int) -> Policy:
    C, L = 0, 2

    def act(history, q, x):
        rounds = history.rounds
        if not rounds:
            return C
        everyone = rounds[0].__class__((C,) * len(rounds[0]))
        return C if rounds.count(everyone) == len(rounds) else L

    return Policy(act, "never", "full", f"pirates(p{player + 1})")


def intro_policy(player: int) -> Policy:
    """Player 1 punishes the first defector j with P_j; players 2, 3 defect after any defection."""
    C, D = 0, 1

    def act(history, q, x):
        for rnd in history.rounds:
            defectors = [j for j in (1, 2) if rnd[j] == D or isinstance(rnd[j], Sentinel)]
            if defectors:
                if player == 0:
                    return defectors[0]  # P2 has index 1, P3 has index 2
                return D
        return C

    return Policy(act, "never", "full", f"intro(p{player + 1})")


def trust_mixed_policy(player: int) -> Policy:
    """Alternating trust-game policies over a history of t rounds.

    Player 2 plays C when t is even and G when t is odd; player 1 keeps (K)
    iff t is odd and player 2's latest action was G, and sends (S) otherwise.
    Actions: player 1 (K, S), player 2 (G, C).
    """
    K, S, G, C = 0, 1, 0, 1
    if player == 1:
        return Policy(lambda h, q, x: C if len(h) % 2 == 0 else G, "never", "full", "trust_mixed(p2)")

    def act(history, q, x):
        t = len(history)
        return K if t % 2 == 1 and history[t - 1][1] == G else S

    return Policy(act, "never", "full", "trust_mixed(p1)")


def copy_last_policy(player: int, ground: MixedStrategy, other: int) -> Policy:
    """Myopic: copy ``other``'s latest action; randomize by ground when the history is empty."""

    def act(history, q, x):
        if len(history) == 0:
            return ground.sample(q)
        a = history[len(history) - 1][other]
        return a if not isinstance(a, Sentinel) else ground.sample(q)

    return Policy(act, "never", "myopic", f"copy_last(p{player + 1})")


def build_policy(spec: Mapping, player: int, game=None) -> Policy:
    kind = spec.get("kind")
    if kind == "constant":
        return constant_policy(_action(spec["action"], player, game))
    if kind == "pirates":
        return pirates_policy(player)
    if kind == "intro":
        return intro_policy(player)
    if kind == "trust_mixed":
        return trust_mixed_policy(player)
    if kind == "grim_minimax":
        target = tuple(_action(a, j, game) for j, a in enumerate(spec["target"]))
        return grim_minimax(player, game, target)
    if kind == "sequence_follower":
        cycle = [tuple(_action(a, j, game) for j, a in enumerate(p)) for p in spec["cycle"]]
        prefix = [tuple(_action(a, j, game) for j, a in enumerate(p)) for p in spec.get("prefix", [])]
        alpha = ActionSequence(prefix, cycle)
        pun = spec.get("punishment", "minimax-grim")
        if pun != "minimax-grim":
            pun = _punishment_maps(pun, game)
        return sequence_follower(player, alpha, pun, game=game,
                                 randomness=spec.get("randomness", "signal"))
    raise ValueError(f"malformed policy spec {spec!r}")


def _action(a, player, game) -> int:
    if isinstance(a, int):
        return a
    if game is None:
        raise ValueError("action labels need the game")
    return game.action_index(player, a)


def _punishment_maps(spec: Mapping, game) -> dict[int, PunishmentMap]:
    """{"deviator": {"punisher": {"observed label": [probs] | label}}} with 1-based players."""
    out = {}
    for dev_s, per_punisher in spec.items():
        dev = int(dev_s) - 1
        maps = {}
        for pun_s, table in per_punisher.items():
            pun = int(pun_s) - 1
            entry = {}
            for obs, strat in table.items():
                key = "R" if obs == "R" else _action(obs, dev, game)
                if isinstance(strat, str):
                    entry[key] = MixedStrategy.pure(_action(strat, pun, game), game.sizes[pun])
                else:
                    entry[key] = MixedStrategy(tuple(F(s) for s in strat))
            maps[pun] = entry
        out[dev] = PunishmentMap(dev, maps)
    return out


# grounded bots --------------------------------------------------------------------

def _signal(r0: float, eps: float, T: int) -> float:
    """Rescale r_0 to a uniform in [0, 1) given the time step."""
    if T == 0:
        return r0 / eps
    return (r0 - eps) / (1.0 - eps)


def build_correlated_bot(player: int, eps: float, policy: Policy, name: str | None = None) -> Program:
    """Simulate everyone (self included) on shared suffixes under screening, then apply π."""
    eps = float(eps)
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")

    def behavior(call: Call):
        view = call.shared
        T = view.first_below(eps)
        rounds = call.history(T, star=True) if T else []
        call.tick(T * call.n + 1)
        return policy(ScreenedHistory(rounds), _signal(view.element(0), eps, T), call.private)

    return Program(player, name or f"correlated[{policy.name}, eps={eps}]", behavior,
                   kind="correlated", eps=eps, policy=policy)


def build_uncorrelated_bot(player: int, eps: float, policy: Policy, name: str | None = None) -> Program:
    """Same shape with plain apply on the bot's own stream; π sees only the signal."""
    eps = float(eps)
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")

    def behavior(call: Call):
        view = call.shared
        T = view.first_below(eps)
        rounds = call.history(T, star=False) if T else []
        call.tick(T * call.n + 1)
        return policy(ScreenedHistory(rounds), _signal(view.element(0), eps, T), None)

    return Program(player, name or f"uncorrelated[{policy.name}, eps={eps}]", behavior,
                   kind="uncorrelated", eps=eps, policy=policy)


# reference bots ---------------------------------------------------------------------

def constant_bot(player: int, action: int) -> Program:
    return Program(player, f"constant({action})", lambda call: action, kind="constant")


def naive_two_sim(player: int, eps: float, cooperate: int = 0, defect: int = 1) -> Program:
    """With probability 1-eps simulate both opponents on independent substreams;
    cooperate iff both cooperate."""
    eps = float(eps)

    first, second = [j for j in range(3) if j != player]

    def behavior(call: Call):
        view = call.shared
        if view.element(0) < eps:
            return cooperate
        if len(call.programs) != 3:
            raise ValueError("naive_two_sim needs exactly three players")
        a = call.apply(first, view.partition(1, 2))
        b = call.apply(second, view.partition(2, 2))
        return cooperate if a == cooperate and b == cooperate else defect

    return Program(player, f"naive_two_sim(eps={eps})", behavior, kind="naive_two_sim", eps=eps)


def random_opponent_sim(player: int, eps: float, cooperate: int = 0) -> Program:
    """With probability 1-eps copy one uniformly chosen other player, simulated on suffix 2."""
    eps = float(eps)

    def behavior(call: Call):
        view = call.shared
        if view.element(0) < eps:
            return cooperate
        others = [j for j in range(call.n) if j != player]
        pick = others[min(int(view.element(1) * len(others)), len(others) - 1)]
        return call.apply(pick, view.suffix(2))

    return Program(player, f"random_opponent_sim(eps={eps})", behavior, kind="random_opponent_sim",
                   eps=eps)


def double_sample(player: int, other: int, keep: int = 0, share: int = 1, hoped: int = 1) -> Program:
    """Simulate ``other`` twice on the odd/even substreams; share iff both give ``hoped``."""

    def behavior(call: Call):
        view = call.shared
        a = call.apply(other, view.partition(1, 2))
        b = call.apply(other, view.partition(2, 2))
        return share if a == hoped and b == hoped else keep

    return Program(player, "double_sample", behavior, kind="double_sample")


def mixed_bot(player: int, strategy: MixedStrategy) -> Program:
    """Randomize from element 0 of the input stream."""

    def behavior(call: Call):
        return strategy.sample(call.shared.element(0))

    return Program(player, f"mixed{tuple(str(p) for p in strategy.probs)}", behavior, kind="mixed")


def private_coin_bot(player: int, strategy: MixedStrategy) -> Program:
    """Randomize from the private stream (screened whenever simulated under apply*)."""

    def behavior(call: Call):
        if call.private is None:
            return strategy.sample(call.shared.element(0))
        return strategy.sample(call.private.element(0))

    return Program(player, "private_coin", behavior, kind="private_coin")


def build_reference_bot(kind: str, player: int, n_players: int, **kw) -> Program:
    if kind == "naive_two_sim":
        if n_players != 3:
            raise ValueError("naive_two_sim is defined for three players")
        return naive_two_sim(player, kw["eps"])
    if kind == "random_opponent_sim":
        if n_players < 2:
            raise ValueError("random_opponent_sim needs opponents")
        return random_opponent_sim(player, kw["eps"])
    if kind == "double_sample":
        if n_players != 2:
            raise ValueError("double_sample is a two-player bot")
        return double_sample(player, 1 - player, **{k: kw[k] for k in ("keep", "share", "hoped") if k in kw})
    if kind == "constant":
        return constant_bot(player, kw["action"])
    raise ValueError(f"unknown reference bot {kind!r}")


# deviation bots -----------------------------------------------------------------------

def q_mix(base: Program, q: float, deviation: MixedStrategy, eps: float) -> Program:
    """If r_{T+1} < q (T the eps-time step of the input) play the deviation,
    randomized by r_{T+1}/q; otherwise run the base on the same input."""
    q = float(q)
    eps = float(eps)
    player = base.player

    def behavior(call: Call):
        view = call.shared
        if q > 0:
            T = view.first_below(eps)
            r = view.element(T + 1)
            if r < q:
                return deviation.sample(r / q)
        programs = call.programs[:player] + (base,) + call.programs[player + 1:]
        return call.apply(base, view, programs=programs)

    return Program(player, f"q_mix(q={q})", behavior, kind="q_mix", q=q, base=base, eps=eps)


def q_mix_deviated(view: StreamView, q: float, eps: float) -> bool:
    """Whether a q_mix bot deviates on this input."""
    if q <= 0:
        return False
    return view.element(view.first_below(eps) + 1) < q


def threshold_bot(base: Program, t0: int, deviation: MixedStrategy,
                  reference: tuple | None = None) -> Program:
    """Run the base once, measuring its deepest nested call; below t0 return the
    base's action, otherwise randomize the deviation from r_0."""
    player = base.player

    def behavior(call: Call):
        programs = call.programs[:player] + (base,) + call.programs[player + 1:]
        if reference is not None and tuple(p for j, p in enumerate(call.programs) if j != player) != reference:
            return call.apply(base, programs=programs)
        out, depth = call.measure(base, programs=programs)
        if depth < t0:
            return out
        return deviation.sample(call.shared.element(0))

    return Program(player, f"threshold(t0={t0})", behavior, kind="threshold", t0=t0, base=base)


def peek_bot(player: int, offsets: Sequence[int], fallback: int, follow: int) -> Program:
    """Calls apply* on other players at fixed suffix offsets (never itself) and
    copies ``follow``'s answer at the largest offset."""

    def behavior(call: Call):
        result = fallback
        for k in offsets:
            for j in range(call.n):
                if j == player:
                    continue
                out = call.apply_star(j, call.shared.suffix(k))
                if j == follow and not isinstance(out, Sentinel):
                    result = out
        return result

    return Program(player, f"peek{tuple(offsets)}", behavior, kind="peek")


def build_deviation_bot(kind: str, base: Program, **kw) -> Program:
    if kind == "q_mix":
        return q_mix(base, kw["q"], kw["deviation"], kw["eps"])
    if kind == "threshold":
        return threshold_bot(base, kw["t0"], kw["deviation"], kw.get("reference"))
    raise ValueError(f"unknown deviation bot {kind!r}")


# schedule-based simulationist bot ----------------------------------------------------------

@dataclass
class Observation:
    """What the schedule bot saw at one time step for one player."""

    samples: list  # actions from each sample
    consistent: list  # 0/1 per sample

    @property
    def mean(self) -> dict:
        out: dict = {}
        for a in self.samples:
            out[a] = out.get(a, 0) + F(1, len(self.samples))
        return out


def sample_view(view: StreamView, t: int, schedule: DeltaSchedule, sample: int, k: int) -> StreamView:
    """F_{t,j,l,k}: the l-th of k substreams with element 0 forced into bucket t."""
    return reparameterize_first(view.partition(sample, k), t, schedule)


def consistent_check(call: Call, observed, reference: Program, actual: Program,
                     view: StreamView) -> int:
    """1 iff ``reference``, run on ``view`` with its calls going to the actual
    profile (so its own slot holds ``actual``), outputs ``observed``."""
    j = actual.player
    programs = call.programs[:j] + (actual,) + call.programs[j + 1:]
    out = call.apply(reference, view, programs=programs)
    return int(out == observed)


def build_general_simulationist_bot(player: int, schedules: Sequence[DeltaSchedule], t0: int, k: int,
                                    policy: Callable[[dict, dict], int],
                                    references: Mapping[int, Program] | None = None) -> Program:
    """Draw T from the own schedule; for every observed step t < T and every player
    with mass at t take k samples if t < t0, else one; check each against the
    reference program; return policy(observations, flags)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    own = schedules[player]

    def behavior(call: Call):
        view = call.shared
        T = own.sample(view.element(0))
        obs: dict = {}
        for t in range(T - 1, -1, -1):
            reps = k if t < t0 else 1
            for j in range(call.n):
                if schedules[j].prob(t) <= 0:
                    continue
                samples, flags = [], []
                for l in range(1, reps + 1):
                    sv = sample_view(view, t, schedules[j], l, reps)
                    a = call.apply(j, sv)
                    samples.append(a)
                    if references is not None and j in references:
                        flags.append(consistent_check(call, a, references[j], call.programs[j], sv))
                    else:
                        flags.append(1)
                obs[(t, j)] = Observation(samples, flags)
        return policy(T, obs)

    return Program(player, f"simulationist(t0={t0}, k={k})", behavior, kind="simulationist",
                   schedules=tuple(schedules), t0=t0, k=k)
