"""Command-line entry point: ``progeq simulate | check-eq | paper-suite``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from importlib import resources
from typing import Any, Sequence

import jsonschema

from .equilibrium_analysis import (ExcessiveNonHalting, cor7_check, empirical_best_response,
                                   epsilon_thresholds, example3_values, independent_detection_value, prop5_check,
                                   trust_mixed_gain)
from .game_core import MixedStrategy
from .pibots import constant_bot, q_mix
from .program_vm import Fuel, estimate_outcomes, merge_estimates
from .scenarios import (Scenario, ScenarioError, format_rational, load_scenario, parse_rational,
                        parse_seed, scenario_from_dict)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PARSE = 2
EXIT_NONHALT = 3


class NonHaltingExit(RuntimeError):
    pass


def _jsonable(x: Any) -> Any:
    if isinstance(x, Fraction):
        return format_rational(x)
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if type(x).__module__ == "numpy":  # numpy scalars
        return _jsonable(x.item())
    return x


def report_schema() -> dict:
    text = resources.files("progeq").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    jsonschema.validate(report, report_schema())


# running scenarios ------------------------------------------------------------------

def _chunk_worker(doc: dict, start: int, count: int):
    sc = scenario_from_dict(doc)
    return estimate_outcomes(sc.programs(), sc.game, count, sc.seed, sc.mode, sc.fuel, sc.memo, offset=start)


def run_estimate(sc: Scenario, threads: int = 1, programs=None, trials: int | None = None):
    trials = trials or sc.trials
    if programs is not None or threads <= 1 or trials < 2 * threads:
        progs = programs if programs is not None else sc.programs()
        return estimate_outcomes(progs, sc.game, trials, sc.seed, sc.mode, sc.fuel, sc.memo)
    doc = sc.to_dict()
    doc["game"] = sc.game_ref if not isinstance(sc.game_ref, str) or sc.game_ref in _builtin_names() else _inline(sc)
    size = -(-trials // threads)
    chunks = [(k, min(size, trials - k)) for k in range(0, trials, size)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_chunk_worker, [doc] * len(chunks), [c[0] for c in chunks], [c[1] for c in chunks]))
    return merge_estimates(parts)


def _builtin_names():
    from .builtin_games import BUILTIN_GAMES
    return BUILTIN_GAMES


def _inline(sc: Scenario) -> dict:
    from .scenarios import game_to_dict
    return game_to_dict(sc.game)


def _label_profile(game, prof) -> list[str]:
    return [game.action_labels[j][a] for j, a in enumerate(prof)]


def simulate_report(sc: Scenario, threads: int = 1) -> dict:
    est = run_estimate(sc, threads)
    if est.nonhalt_rate > sc.max_nonhalt:
        raise NonHaltingExit(f"non-halting rate {est.nonhalt_rate:.4f} exceeds {sc.max_nonhalt}")
    game = sc.game
    p = est.halted / est.trials
    half = 3 * math.sqrt(max(p * (1 - p), 0.0) / est.trials)
    depth_law: dict[str, float] = {}
    halted_depths = [d for d in est.max_depths]
    for d in sorted(set(halted_depths)):
        depth_law[str(d)] = halted_depths.count(d) / len(halted_depths)
    outcomes = [{"profile": _label_profile(game, prof), "count": c, "frequency": c / est.halted}
                for prof, c in sorted(est.counts.items())]
    return {
        "command": "simulate",
        "scenario": sc.name,
        "game": game.name,
        "mode": sc.mode,
        "epsilon": None if sc.eps is None else format_rational(sc.eps),
        "seed": sc.seed,
        "trials": sc.trials,
        "fuel": {"depth": sc.fuel.depth, "calls": sc.fuel.calls},
        "memo": sc.memo,
        "halting": {"rate": p, "ci3": [max(0.0, p - half), min(1.0, p + half)],
                    "nonhalting": est.trials - est.halted},
        "payoffs": {"mean": list(est.mean_payoff), "stderr": list(est.stderr)},
        "outcomes": outcomes,
        "trace": {
            "mean_max_depth": sum(est.max_depths) / len(est.max_depths),
            "depth_law": depth_law,
            "mean_total_calls": sum(est.total_calls) / len(est.total_calls),
            "mean_distinct_star": sum(est.distinct_star) / len(est.distinct_star),
            "mean_steps": sum(est.steps) / len(est.steps),
        },
    }


def _predictor(name: str | None, sc: Scenario, player: int, deviation: int):
    if name is None:
        return None
    eps = sc.eps if sc.eps is not None else Fraction(0)
    if name == "pirates-uncorrelated-L":
        return lambda params: float(example3_values(params["q"], eps)[0])
    if name == "intro":
        punish = {0: player, (3 - player): 1}  # player 1 plays P_i, the other defects
        return lambda params: float(independent_detection_value(sc.game, (0, 0, 0), player, deviation,
                                                                punish, params["q"], eps))
    if name == "trust-mixed":
        base = 2 + (2 - 2 * eps) / (2 - eps)
        return lambda params: float(base + trust_mixed_gain(params["q"], eps))
    raise ScenarioError(f"unknown predictor {name!r}")


def _family(sc: Scenario, block: dict, base_programs):
    player = int(block["player"]) - 1
    if not 0 <= player < sc.game.n:
        raise ScenarioError(f"deviation player {player + 1} out of range")
    kind = block.get("family")
    game = sc.game
    members = []
    if kind == "q_mix":
        dev = block["deviation"]
        dev_idx = game.action_index(player, dev) if isinstance(dev, str) else int(dev)
        strategy = MixedStrategy.pure(dev_idx, game.sizes[player])
        eps = float(sc.eps) if sc.eps is not None else 1.0
        for qs in block["q"]:
            q = parse_rational(qs)
            members.append(({"q": q, "deviation": game.action_labels[player][dev_idx]},
                            q_mix(base_programs[player], float(q), strategy, eps)))
        pred = _predictor(block.get("predictor"), sc, player, dev_idx)
    elif kind == "constant":
        actions = range(game.sizes[player]) if block.get("actions", "all") == "all" else [
            game.action_index(player, a) for a in block["actions"]]
        for a in actions:
            members.append(({"action": game.action_labels[player][a]}, constant_bot(player, a)))
        pred = None
    else:
        raise ScenarioError(f"unknown deviation family {kind!r}")
    return player, members, pred


def check_eq_report(sc: Scenario, threads: int = 1) -> dict:
    report = simulate_report(sc, threads)
    report["command"] = "check-eq"
    base_programs = sc.programs()
    analysis = sc.analysis
    deviations = []
    verdicts: dict[int, dict] = {j: {"player": j + 1, "verdict": "equilibrium-consistent", "witness": None}
                                 for j in range(sc.game.n)}
    base_mean = report["payoffs"]["mean"]
    base_se = report["payoffs"]["stderr"]
    for block in analysis.get("deviations", []):
        try:
            player, members, pred = _family(sc, block, base_programs)
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad deviation block {block!r}: {exc}") from None
        paired = bool(block.get("paired", False))
        rows = empirical_best_response(base_programs, sc.game, player, members, sc.trials, sc.seed, sc.mode,
                                       sc.fuel, pred, None if paired else (base_mean[player], base_se[player]),
                                       paired=paired, max_nonhalt=sc.max_nonhalt)
        for r in rows:
            significant = r.gain > 0 and r.gain > 3 * r.gain_se
            entry = {"player": player + 1, "family": block["family"], "params": _jsonable(r.params),
                     "value": r.value, "stderr": r.value_se, "gain": r.gain, "gain_se": r.gain_se,
                     "predicted": r.predicted, "method": r.method, "profitable": significant}
            deviations.append(entry)
            if significant:
                v = verdicts[player]
                v["verdict"] = "not-equilibrium"
                v.setdefault("witnesses", []).append(entry)
                if v["witness"] is None or r.gain > v["witness"]["gain"]:
                    v["witness"] = entry
    report["deviations"] = deviations
    report["verdicts"] = [verdicts[j] for j in range(sc.game.n)]
    report["analysis"] = _analyses(sc)
    report["verdict"] = ("not-equilibrium" if any(v["verdict"] == "not-equilibrium" for v in verdicts.values())
                         else "equilibrium-consistent")
    return report


def _analyses(sc: Scenario) -> dict:
    out: dict = {}
    analysis = sc.analysis
    game = sc.game
    target = analysis.get("target")
    if target is not None:
        s = [game.action_index(j, a) if isinstance(a, str) else int(a) for j, a in enumerate(target)]
        if analysis.get("cor7"):
            res = cor7_check(game, s)
            out["cor7"] = {"violated": res.violated, "value": format_rational(res.value),
                           "player": None if res.player is None else res.player + 1,
                           "deviation": None if res.deviation is None
                           else game.action_labels[res.player][res.deviation]}
        if "prop5" in analysis:
            lam = parse_rational(analysis["prop5"].get("lambda", "1/1000"))
            res = prop5_check(game, s, lam, int(analysis["prop5"].get("resolution", 4)))
            out["prop5"] = {"lambda": format_rational(lam), "holds": res.holds,
                            "players": [{"player": r.player + 1, "holds": r.holds,
                                         "margin": format_rational(Fraction(r.margin))} for r in res.players]}
    name = analysis.get("thresholds")
    if name:
        table = epsilon_thresholds()
        th = table[name]
        eps = sc.eps
        out["threshold"] = {"name": name, "gain": th.gain, "epsilon": format_rational(th.threshold),
                            "scenario_below_threshold": None if eps is None else bool(eps < th.threshold)}
    return out


# output ------------------------------------------------------------------------------

def to_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cmd = report["command"]
    if cmd == "paper-suite":
        w.writerow(["id", "name", "passed", "expected", "observed", "seconds"])
        for c in report["criteria"]:
            w.writerow([c["id"], c["name"], c["passed"], c["expected"], c["observed"], f"{c['seconds']:.2f}"])
        return buf.getvalue()
    w.writerow(["section", "key", "value"])
    for k in ("scenario", "game", "mode", "epsilon", "seed", "trials"):
        w.writerow(["run", k, report[k]])
    w.writerow(["halting", "rate", report["halting"]["rate"]])
    for j, (m, s) in enumerate(zip(report["payoffs"]["mean"], report["payoffs"]["stderr"])):
        w.writerow(["payoff", f"P{j + 1}", m])
        w.writerow(["payoff_se", f"P{j + 1}", s])
    for o in report["outcomes"]:
        w.writerow(["outcome", "-".join(o["profile"]), o["frequency"]])
    for d, f in report["trace"]["depth_law"].items():
        w.writerow(["depth", d, f])
    for d in report.get("deviations", []):
        key = f"P{d['player']}:{d['family']}:" + ",".join(f"{k}={v}" for k, v in sorted(d["params"].items()))
        w.writerow(["gain", key, d["gain"]])
        w.writerow(["gain_se", key, d["gain_se"]])
    for v in report.get("verdicts", []):
        w.writerow(["verdict", f"P{v['player']}", v["verdict"]])
    return buf.getvalue()


def emit(report: dict, fmt: str, out: str | None) -> None:
    report = _jsonable(report)
    validate_report(report)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n" if fmt == "json" else to_csv(report)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# argument handling -------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", help="64-bit seed, decimal or 0x-hex (default: $PROGEQ_SEED, then the scenario's)")
    common.add_argument("--trials", type=int)
    common.add_argument("--epsilon", help="override the scenario epsilon (number or p/q)")
    common.add_argument("--fuel-depth", type=int)
    common.add_argument("--fuel-calls", type=int)
    common.add_argument("--memo", choices=("on", "off"))
    common.add_argument("--out")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--threads", type=int, default=1, help="worker processes for trials")

    p = argparse.ArgumentParser(prog="progeq", description="Program-game simulations and equilibrium checks.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="estimate outcome frequencies and payoffs")
    s.add_argument("scenario", help="builtin scenario name or scenario JSON path")
    c = sub.add_parser("check-eq", parents=[common], help="run declared deviation families and conditions")
    c.add_argument("scenario")
    ps = sub.add_parser("paper-suite", parents=[common], help="run the acceptance battery")
    ps.add_argument("--filter", action="append", default=None, help="only criteria whose name contains this")
    ps.add_argument("--quick", action="store_true", help="reduced trial counts (smoke run)")
    sub.add_parser("list", help="list builtin games and scenarios")
    return p


def _apply_overrides(sc: Scenario, args) -> Scenario:
    seed = args.seed if args.seed is not None else os.environ.get("PROGEQ_SEED")
    if seed is not None:
        sc.seed = parse_seed(seed)
    if args.trials is not None:
        if args.trials < 1:
            raise ScenarioError("--trials must be positive")
        sc.trials = args.trials
    if args.epsilon is not None:
        eps = parse_rational(args.epsilon)
        if not 0 < eps <= 1:
            raise ScenarioError("--epsilon must lie in (0, 1]")
        sc.eps = eps
        for bot in sc.bots:
            if isinstance(bot, dict):
                bot.pop("eps", None)
    if args.fuel_depth is not None or args.fuel_calls is not None:
        sc.fuel = Fuel(depth=args.fuel_depth or sc.fuel.depth, calls=args.fuel_calls or sc.fuel.calls)
    if args.memo is not None:
        sc.memo = args.memo == "on"
    sc.programs()
    return sc


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        from .builtin_games import BUILTIN_GAMES
        from .scenarios import BUILTIN_SCENARIOS
        print("games:", " ".join(sorted(BUILTIN_GAMES)))
        print("scenarios:", " ".join(sorted(BUILTIN_SCENARIOS)))
        return EXIT_OK
    if args.command == "paper-suite":
        from .suite import run_suite
        seed = args.seed if args.seed is not None else os.environ.get("PROGEQ_SEED")
        try:
            seed = parse_seed(seed) if seed is not None else 20240601
        except ScenarioError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PARSE
        report = run_suite(args.filter, seed=seed, quick=args.quick, echo=args.out is not None or args.format != "json")
        emit(report, args.format, args.out)
        return EXIT_OK if report["passed"] else EXIT_FAIL
    try:
        sc = _apply_overrides(load_scenario(args.scenario), args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        report = simulate_report(sc, args.threads) if args.command == "simulate" else check_eq_report(sc, args.threads)
    except NonHaltingExit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONHALT
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ExcessiveNonHalting as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONHALT
    emit(report, args.format, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
