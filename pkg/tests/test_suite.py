from fractions import Fraction as F

from progeq import builtin_games as bg
from progeq.game_core import NormalFormGame
from progeq.suite import CRITERIA, Context, Criterion, run_criterion, run_suite, select


def corrupted(game: NormalFormGame, cell: tuple, player: int, delta) -> NormalFormGame:
    table = dict(game.payoffs)
    row = list(table[cell])
    row[player] += F(delta)
    table[cell] = tuple(row)
    return NormalFormGame(game.action_labels, table, game.player_names, game.name)


def test_payoff_tables_pass_on_the_builtins():
    assert run_criterion(CRITERIA[0], Context(1, True))["passed"]


def test_a_single_wrong_cell_fails_the_payoff_criterion():
    bad = corrupted(bg.pirates_game(), (0, 0, 0), 1, "1/1000")
    row = run_criterion(CRITERIA[0], Context(1, True, {"pirates": bad}))
    assert not row["passed"]
    failing = [c["label"] for c in row["checks"] if not c["passed"]]
    assert failing == ["pirates cells"]


def test_cor7_criterion_notices_a_changed_game():
    assert run_criterion(CRITERIA[8], Context(1, True))["passed"]
    game = bg.trust_simple_game()
    # make Share-Grab worse for player 2 so the witness value moves
    bad = corrupted(game, (1, 0), 1, 1)
    assert not run_criterion(CRITERIA[8], Context(1, True, {"trust-simple": bad}))["passed"]


def test_crashes_are_reported_as_failures():
    def boom(ctx):
        raise RuntimeError("broken")
    row = run_criterion(Criterion(99, "boom", "never", boom), Context(1, True))
    assert not row["passed"] and "RuntimeError: broken" in row["observed"]
    empty = run_criterion(Criterion(98, "empty", "something", lambda ctx: []), Context(1, True))
    assert not empty["passed"]


def test_filters_select_by_id_or_name():
    assert [c.id for c in select(["7"])] == [7]
    assert [c.id for c in select(["cor7"])] == [9]
    assert [c.id for c in select(["thresh", "12"])] == [3, 12]
    assert len(select(None)) == 12


def test_run_suite_report_shape(capsys):
    report = run_suite(["payoff-tables"], seed=3, quick=True, echo=True)
    err = capsys.readouterr().err
    assert report["passed"] and report["seed"] == 3 and report["filter"] == ["payoff-tables"]
    assert err.startswith("[PASS]  1 payoff-tables")
    assert not run_suite(["no-such-criterion"], echo=False)["passed"]


def test_reports_serialize(tmp_path):
    from progeq.cli import emit
    report = run_suite(["7"], seed=5, quick=True, echo=False)
    assert all(type(c["passed"]) is bool for row in report["criteria"] for c in row["checks"])
    out = tmp_path / "suite.json"
    emit(report, "json", str(out))
    assert out.read_text().startswith("{")
