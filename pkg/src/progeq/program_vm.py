"""Execution engine for program games.

Programs are Python callables that receive a :class:`Call` context and return
an action index. They may run other programs through ``call.apply`` and
``call.apply_star``; the latter screens any result whose computation read the
private stream while its frame was the innermost screening frame.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import threading
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .rand_streams import PrivateStream, SharedStream, StreamView, derive_seed

APPLY = "apply"
APPLY_STAR = "apply*"


class Sentinel:
    """The screening symbol R_j."""

    __slots__ = ("player",)
    _cache: dict[int, "Sentinel"] = {}

    def __new__(cls, player: int):
        obj = cls._cache.get(player)
        if obj is None:
            obj = object.__new__(cls)
            obj.player = player
            cls._cache[player] = obj
        return obj

    def __reduce__(self):
        return (Sentinel, (self.player,))

    def __repr__(self) -> str:
        return f"R{self.player + 1}"


def R(player: int) -> Sentinel:
    return Sentinel(player)


@dataclass(frozen=True)
class NonHalting:
    player: int
    kind: str  # "depth" or "calls"

    def __repr__(self) -> str:
        return f"NonHalting(player={self.player}, fuel={self.kind})"


class FuelExhausted(Exception):
    def __init__(self, kind: str):
        super().__init__(kind)
        self.kind = kind


class ContractViolation(RuntimeError):
    """A program returned something that is not a plain action."""


class Program:
    """A program handle. Identity is object identity."""

    __slots__ = ("player", "name", "behavior", "meta", "__weakref__")

    def __init__(self, player: int, name: str, behavior: Callable[["Call"], Any], **meta):
        self.player = player
        self.name = name
        self.behavior = behavior
        self.meta = meta

    def __repr__(self) -> str:
        return f"Program({self.name!r}, player={self.player})"


ProgramHandle = Program


@dataclass(frozen=True)
class Fuel:
    depth: int = 10_000
    calls: int = 1_000_000


@dataclass
class TraceNode:
    kind: str
    player: int
    program: str
    offset: int
    scale: int
    depth: int
    output: Any = None
    memo_hit: bool = False
    children: list["TraceNode"] = field(default_factory=list)
    # references kept for replay; not exported
    callee: Program | None = field(default=None, repr=False, compare=False)
    programs: tuple | None = field(default=None, repr=False, compare=False)
    view: StreamView | None = field(default=None, repr=False, compare=False)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "player": self.player,
            "program": self.program,
            "offset": self.offset,
            "scale": self.scale,
            "depth": self.depth,
            "output": output_label(self.output),
            "memo_hit": self.memo_hit,
            "children": [c.to_dict() for c in self.children],
        }


def output_label(out) -> Any:
    if isinstance(out, (Sentinel, NonHalting)):
        return repr(out)
    return out


@dataclass
class CallTrace:
    roots: list[TraceNode] = field(default_factory=list)
    max_depth: int = 0
    total_calls: int = 0
    memo_hits: int = 0
    distinct_star: int = 0
    distinct_plain: int = 0
    steps: int = 0

    def nodes(self):
        for r in self.roots:
            yield from r.walk()

    def to_json(self) -> str:
        return json.dumps({
            "max_depth": self.max_depth,
            "total_calls": self.total_calls,
            "memo_hits": self.memo_hits,
            "distinct_star": self.distinct_star,
            "distinct_plain": self.distinct_plain,
            "steps": self.steps,
            "roots": [r.to_dict() for r in self.roots],
        }, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "parent", "kind", "player", "program", "offset", "scale",
                    "depth", "output", "memo_hit"])
        counter = 0

        def rec(node, parent):
            nonlocal counter
            me = counter
            counter += 1
            w.writerow([me, parent, node.kind, node.player, node.program, node.offset,
                        node.scale, node.depth, output_label(node.output), int(node.memo_hit)])
            for c in node.children:
                rec(c, me)

        for r in self.roots:
            rec(r, "")
        return buf.getvalue()


@dataclass
class TrialResult:
    outcome: tuple
    trace: CallTrace
    seed: int
    mode: str

    @property
    def halted(self) -> bool:
        return not any(isinstance(a, NonHalting) for a in self.outcome)


class Call:
    """Execution context handed to a program's behavior."""

    __slots__ = ("vm", "program", "programs", "shared", "private", "depth")

    def __init__(self, vm, program, programs, shared, private, depth):
        self.vm = vm
        self.program = program
        self.programs = programs
        self.shared = shared
        self.private = private
        self.depth = depth

    @property
    def player(self) -> int:
        return self.program.player

    @property
    def n(self) -> int:
        return len(self.programs)

    def _target(self, target, programs):
        programs = self.programs if programs is None else programs
        if isinstance(target, int):
            return programs[target], programs
        return target, programs

    def apply(self, target, shared: StreamView | None = None, programs=None, private=...):
        if target.__class__ is int and programs is None and private is ...:
            programs = self.programs
            return self.vm.invoke(APPLY, programs[target], programs,
                                  self.shared if shared is None else shared, self.private)
        callee, programs = self._target(target, programs)
        return self.vm.invoke(APPLY, callee, programs,
                              self.shared if shared is None else shared,
                              self.private if private is ... else private)

    def apply_star(self, target, shared: StreamView | None = None, programs=None, private=...):
        callee, programs = self._target(target, programs)
        return self.vm.invoke(APPLY_STAR, callee, programs,
                              self.shared if shared is None else shared,
                              self.private if private is ... else private)

    def history(self, T: int, star: bool) -> list:
        """Rounds t=1..T: every player run on the suffix at offset T+1-t."""
        return self.vm.history(self, T, star)

    def measure(self, target, shared=None, programs=None) -> tuple[Any, int]:
        """Plain apply that also returns the maximum nested call depth below it."""
        callee, programs = self._target(target, programs)
        return self.vm.measured(callee, programs, self.shared if shared is None else shared,
                                self.private)

    def tick(self, n: int = 1) -> None:
        self.vm.steps += n


class Machine:
    """Trial-local interpreter state."""

    def __init__(self, fuel: Fuel = Fuel(), memo_star: bool = True, memo_plain: bool = False,
                 trace: bool = False):
        self.fuel = fuel
        self.max_depth = fuel.depth
        self.max_calls = fuel.calls
        self.memo_star = {} if memo_star else None
        self.memo_plain = {} if memo_plain else None
        self.histories: dict = {}
        self.tracing = trace
        self.reset_counters()

    def reset_counters(self):
        self.depth = -1
        self.calls = 0
        self.hits = 0
        self.steps = 0
        self.hw = 0
        self.reads = 0
        self.distinct = {APPLY: 0, APPLY_STAR: 0}
        self.node_stack: list[TraceNode] = []
        self.roots: list[TraceNode] = []

    def on_private_read(self):
        self.reads += 1

    def _node(self, kind, callee, programs, view, depth, hit):
        node = TraceNode(kind, callee.player, callee.name, view.shift, view.scale, depth,
                         memo_hit=hit, callee=callee, programs=programs, view=view)
        if self.node_stack:
            self.node_stack[-1].children.append(node)
        else:
            self.roots.append(node)
        return node

    def invoke(self, kind, callee, programs, shared, private):
        depth = self.depth + 1
        memo = self.memo_star if kind is APPLY_STAR else self.memo_plain
        if memo is not None:
            # screened results never depend on the private stream, so apply*
            # entries are shared across the top-level players' trees
            key = (callee, programs, shared.key,
                   None if (private is None or kind is APPLY_STAR) else private.seed)
            entry = memo.get(key)
            if entry is not None:
                out, touched, sub = entry
                self.calls += 1
                self.hits += 1
                self.steps += 1
                if touched:
                    self.reads += 1
                if depth + sub > self.hw:
                    self.hw = depth + sub
                if self.tracing:
                    self._node(kind, callee, programs, shared, depth, True).output = out
                return out
        if depth > self.max_depth:
            raise FuelExhausted("depth")
        self.calls += 1
        if self.calls > self.max_calls:
            raise FuelExhausted("calls")
        self.steps += 1
        self.distinct[kind] += 1
        node = None
        if self.tracing:
            node = self._node(kind, callee, programs, shared, depth, False)
            self.node_stack.append(node)
        reads_before = self.reads
        saved_hw = self.hw
        self.hw = depth
        self.depth = depth
        try:
            out = callee.behavior(Call(self, callee, programs, shared, private, depth))
        finally:
            self.depth = depth - 1
            if node is not None:
                self.node_stack.pop()
        if isinstance(out, Sentinel) or isinstance(out, bool) or not isinstance(out, int):
            raise ContractViolation(f"{callee!r} returned {out!r}, not an action index")
        sub = self.hw - depth
        if saved_hw > self.hw:
            self.hw = saved_hw
        touched = self.reads != reads_before
        if kind is APPLY_STAR:
            self.reads = reads_before
            if touched:
                out = Sentinel(callee.player)
            touched = False
        if node is not None:
            node.output = out
        if memo is not None:
            memo[key] = (out, touched, sub)
        return out

    def measured(self, callee, programs, shared, private):
        saved = self.hw
        self.hw = self.depth
        try:
            out = self.invoke(APPLY, callee, programs, shared, private)
            reached = self.hw - (self.depth + 1)
        finally:
            self.hw = max(self.hw, saved)
        return out, max(reached, 0)

    def history(self, call: Call, T: int, star: bool) -> list:
        programs = call.programs
        shared = call.shared
        private = call.private
        kind = APPLY_STAR if star else APPLY
        memo = self.memo_star if star else self.memo_plain
        if T <= 0:
            return []
        if memo is None or self.tracing:
            invoke = self.invoke
            rounds = []
            for t in range(1, T + 1):
                view = shared.suffix(T + 1 - t)
                rounds.append(tuple(invoke(kind, p, programs, view, private) for p in programs))
            return rounds
        # Every caller whose view ends at the same raw index sees a prefix of one
        # shared list of rounds, so rounds are computed once and sliced.
        scale = shared.scale
        end = shared.shift + scale * T
        pkey = None if (private is None or star) else private.seed
        hkey = (programs, shared.base, scale, end, pkey, kind)
        entry = self.histories.get(hkey)
        if entry is None:
            entry = self.histories[hkey] = ([], [], [])
        rounds, reach, touched_prefix = entry
        n = len(programs)
        have = len(rounds)
        if have < T:
            invoke = self.invoke
            base = shared.base
            for t in range(have + 1, T + 1):
                view = StreamView(base, scale, end - scale * (t - 1))
                hw_before = self.hw
                reads_before = self.reads
                self.hw = call.depth
                rnd = tuple(invoke(kind, p, programs, view, private) for p in programs)
                sub = self.hw - (call.depth + 1)
                self.hw = max(self.hw, hw_before)
                rounds.append(rnd)
                reach.append(max(sub, reach[-1]) if reach else sub)
                touched_prefix.append(self.reads != reads_before or (bool(touched_prefix) and touched_prefix[-1]))
            # the freshly computed rounds were accounted by invoke itself
            return rounds[:T]
        self.calls += n * T
        self.hits += n * T
        self.steps += n * T
        if touched_prefix[T - 1]:
            self.reads += 1
        top = call.depth + 1 + max(reach[T - 1], 0)
        if top > self.hw:
            self.hw = top
        return rounds[:T]

    def run_top(self, program, programs, shared: StreamView, private):
        """Plain apply of one top-level program; NonHalting on fuel exhaustion."""
        self.depth = -1
        self.hw = 0
        try:
            return self.invoke(APPLY, program, programs, shared, private)
        except FuelExhausted as exc:
            self.node_stack.clear()
            return NonHalting(program.player, exc.kind)


# deep recursion support ------------------------------------------------------

_STACK_BYTES = 512 * 1024 * 1024
_DEEP_THREAD = "progeq-deep"


def run_deep(fn: Callable[[], Any], recursion_limit: int = 200_000):
    """Run fn in a thread with a large C stack so deep simulation trees fit."""
    result: dict = {}

    def target():
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, recursion_limit))
        try:
            result["value"] = fn()
        except BaseException as exc:  # re-raised in the caller
            result["error"] = exc
        finally:
            sys.setrecursionlimit(old)

    prev = threading.stack_size()
    threading.stack_size(_STACK_BYTES)
    try:
        worker = threading.Thread(target=target, name=_DEEP_THREAD)
        worker.start()
    finally:
        threading.stack_size(prev)
    worker.join()
    if "error" in result:
        raise result["error"]
    return result["value"]


def _needs_deep(fuel: Fuel) -> bool:
    return fuel.depth > 300


# trials -----------------------------------------------------------------------

def trial_seed(base_seed: int, index: int) -> int:
    return derive_seed(base_seed, "trial", index)


def make_streams(seed: int, n: int, mode: str):
    """(shared views per player, private streams per player)."""
    if mode == "correlated":
        shared = SharedStream(derive_seed(seed, "shared"))
        privates = [PrivateStream(derive_seed(seed, "private", i), i) for i in range(n)]
        return [shared.view()] * n, privates
    if mode == "uncorrelated":
        views = [SharedStream(derive_seed(seed, "stream", i), label=f"stream-{i}").view()
                 for i in range(n)]
        return views, [None] * n
    raise ValueError(f"unknown mode {mode!r}")


def run_trial(profile: Sequence[Program], seed: int, mode: str = "correlated",
              fuel: Fuel = Fuel(), memo: bool = True, memo_plain: bool | None = None,
              trace: bool = False, players: Iterable[int] | None = None,
              machine: Machine | None = None) -> TrialResult:
    """One draw of the program game.

    ``memo`` controls the apply* cache; ``memo_plain`` (default: on in the
    uncorrelated mode) controls the plain-apply cache.
    """
    if _needs_deep(fuel) and threading.current_thread().name != _DEEP_THREAD:
        return run_deep(lambda: run_trial(profile, seed, mode, fuel, memo, memo_plain, trace, players, machine),
                        8 * fuel.depth + 10_000)
    programs = tuple(profile)
    for idx, p in enumerate(programs):
        if p.player != idx:
            raise ValueError(f"program {p!r} placed in slot {idx}")
    n = len(programs)
    if memo_plain is None:
        memo_plain = memo and mode == "uncorrelated"
    vm = machine or Machine(fuel, memo_star=memo, memo_plain=memo_plain, trace=trace)
    views, privates = make_streams(seed, n, mode)
    for priv in privates:
        if priv is not None:
            priv.on_read = vm.on_private_read
    chosen = range(n) if players is None else list(players)
    outcome = []
    max_depth = 0
    for i in range(n):
        if i not in chosen:
            outcome.append(None)
            continue
        out = vm.run_top(programs[i], programs, views[i], privates[i])
        if isinstance(out, Sentinel):
            raise ContractViolation("a screening symbol reached the top level")
        outcome.append(out)
        if not isinstance(out, NonHalting):
            max_depth = max(max_depth, vm.hw)
    tr = CallTrace(roots=vm.roots, max_depth=max_depth, total_calls=vm.calls,
                   memo_hits=vm.hits, distinct_star=vm.distinct[APPLY_STAR],
                   distinct_plain=vm.distinct[APPLY], steps=vm.steps)
    return TrialResult(tuple(outcome), tr, seed, mode)


def replay_star(node: TraceNode, private_seed: int, fuel: Fuel = Fuel()) -> Any:
    """Re-run a traced apply* call against a fresh private stream."""
    if node.kind != APPLY_STAR:
        raise ValueError("only apply* nodes can be replayed this way")
    vm = Machine(fuel, memo_star=False, memo_plain=False)
    priv = PrivateStream(private_seed, node.callee.player, vm.on_private_read)
    vm.depth = node.depth - 1
    try:
        return vm.invoke(APPLY_STAR, node.callee, node.programs, node.view, priv)
    except FuelExhausted as exc:
        return NonHalting(node.callee.player, exc.kind)


# estimation -------------------------------------------------------------------

@dataclass
class OutcomeEstimate:
    trials: int
    halted: int
    counts: Counter
    mean_payoff: tuple
    stderr: tuple
    nonhalt_rate: float
    max_depths: list
    total_calls: list
    distinct_star: list
    steps: list
    seed: int
    payoff_samples: list = field(default_factory=list)  # per player, halted trials in order

    def frequency(self, profile: tuple) -> float:
        return self.counts.get(tuple(profile), 0) / self.halted if self.halted else float("nan")

    def marginal(self, player: int, n_actions: int) -> list[float]:
        tally = [0] * n_actions
        for prof, c in self.counts.items():
            tally[prof[player]] += c
        return [t / self.halted for t in tally] if self.halted else [math.nan] * n_actions


def _mean_se(values: list[float]) -> tuple[float, float]:
    k = len(values)
    if k == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / k
    if k == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (k - 1)
    return mean, math.sqrt(var / k)


def estimate_outcomes(profile: Sequence[Program], game, trials: int, seed: int,
                      mode: str = "correlated", fuel: Fuel = Fuel(), memo: bool = True,
                      memo_plain: bool | None = None, players: Iterable[int] | None = None,
                      collect: Callable[[TrialResult], None] | None = None,
                      offset: int = 0) -> OutcomeEstimate:
    """i.i.d. trials with seeds derived from ``seed``; payoffs are float means.

    Trial k uses ``trial_seed(seed, offset + k)``, so disjoint offsets split a
    run into chunks whose merge equals the single run.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    programs = tuple(profile)
    n = len(programs)
    table = game.float_payoffs() if game is not None else None

    def body():
        counts: Counter = Counter()
        per_player: list[list[float]] = [[] for _ in range(n)]
        depths, calls, distinct, steps = [], [], [], []
        halted = 0
        for k in range(trials):
            res = run_trial(programs, trial_seed(seed, offset + k), mode, fuel, memo, memo_plain,
                            players=players)
            depths.append(res.trace.max_depth)
            calls.append(res.trace.total_calls)
            distinct.append(res.trace.distinct_star)
            steps.append(res.trace.steps)
            if collect is not None:
                collect(res)
            if not res.halted:
                continue
            halted += 1
            counts[res.outcome] += 1
            if table is not None and players is None:
                pay = table[res.outcome]
                for i in range(n):
                    per_player[i].append(pay[i])
        return counts, per_player, depths, calls, distinct, steps, halted

    if _needs_deep(fuel):
        counts, per_player, depths, calls, distinct, steps, halted = run_deep(body, 8 * fuel.depth + 10_000)
    else:
        counts, per_player, depths, calls, distinct, steps, halted = body()
    stats = [_mean_se(v) for v in per_player]
    rate = 1 - halted / trials
    if rate > 0 and table is not None:
        warnings.warn(f"{trials - halted} of {trials} trials did not halt; excluded from payoffs",
                      RuntimeWarning, stacklevel=2)
    return OutcomeEstimate(trials, halted, counts, tuple(s[0] for s in stats),
                           tuple(s[1] for s in stats), rate, depths, calls, distinct, steps, seed,
                           per_player)


def merge_estimates(parts: Sequence[OutcomeEstimate]) -> OutcomeEstimate:
    """Concatenate chunked estimates (in trial order) into one."""
    if not parts:
        raise ValueError("nothing to merge")
    counts: Counter = Counter()
    n = len(parts[0].payoff_samples)
    samples: list[list[float]] = [[] for _ in range(n)]
    depths, calls, distinct, steps = [], [], [], []
    for part in parts:
        counts.update(part.counts)
        for i in range(n):
            samples[i].extend(part.payoff_samples[i])
        depths += part.max_depths
        calls += part.total_calls
        distinct += part.distinct_star
        steps += part.steps
    trials = sum(p.trials for p in parts)
    halted = sum(p.halted for p in parts)
    stats = [_mean_se(v) for v in samples]
    return OutcomeEstimate(trials, halted, counts, tuple(s[0] for s in stats), tuple(s[1] for s in stats),
                           1 - halted / trials, depths, calls, distinct, steps, parts[0].seed, samples)


@dataclass
class TraceSummary:
    trials: int
    halting_rate: float
    halting_ci: tuple
    depth_law: dict
    mean_total_calls: float
    total_calls_se: float
    mean_distinct_star: float
    mean_steps: float
    steps_se: float
    growth_flag: bool


def trace_statistics(results: Sequence[TrialResult], calls_bound: float | None = None) -> TraceSummary:
    """Summary of a batch of traced trials.

    ``growth_flag`` is set when the mean total call count exceeds ``calls_bound``.
    """
    k = len(results)
    halted = sum(1 for r in results if r.halted)
    p = halted / k if k else math.nan
    half = 3 * math.sqrt(max(p * (1 - p), 0) / k) if k else math.nan
    depth_law = Counter(r.trace.max_depth for r in results if r.halted)
    calls = [float(r.trace.total_calls) for r in results]
    steps = [float(r.trace.steps) for r in results]
    mc, sc = _mean_se(calls)
    ms, ss = _mean_se(steps)
    md, _ = _mean_se([float(r.trace.distinct_star) for r in results])
    flag = calls_bound is not None and mc > calls_bound
    return TraceSummary(k, p, (p - half, p + half),
                        {d: c / max(halted, 1) for d, c in sorted(depth_law.items())},
                        mc, sc, md, ms, ss, flag)


def truncated_call_growth(make_profile: Callable[[], Sequence[Program]], fuels: Sequence[int],
                          trials: int, seed: int, mode: str = "correlated") -> list[float]:
    """Mean total calls without memo, counting fuel-exhausted trials at the cap."""
    means = []
    for cap in fuels:
        fuel = Fuel(depth=10_000, calls=cap)
        programs = tuple(make_profile())
        vals = []
        for k in range(trials):
            res = run_trial(programs, trial_seed(seed, k), mode, fuel, memo=False, memo_plain=False)
            vals.append(min(res.trace.total_calls, cap))
        means.append(sum(vals) / len(vals))
    return means
