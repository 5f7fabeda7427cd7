import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from progeq import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def write_scenario(tmp_path, doc, name="sc.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


NAIVE = {"name": "naive", "game": "pd3", "mode": "correlated", "epsilon": "1/4",
         "bots": [{"kind": "naive_two_sim"}] * 3, "trials": 50, "seed": 2, "fuel": {"depth": 60}}


def test_list_names_builtins(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    assert "pirates" in out and "trust-mixed-eq" in out


def test_simulate_report_matches_schema(capsys):
    code, out, _ = run(capsys, "simulate", "pirates-correlated-eq", "--trials", "200")
    assert code == 0
    report = json.loads(out)
    jsonschema.validate(report, cli.report_schema())
    assert report["halting"]["rate"] == 1.0
    assert report["outcomes"] == [{"profile": ["C", "C", "C"], "count": 200, "frequency": 1.0}]
    assert report["payoffs"]["mean"] == [10.0, 10.0, 10.0]


def test_simulate_is_byte_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        assert run(capsys, "simulate", "intro-uncorrelated", "--trials", "300", "--seed", "0x2a",
                   "--out", str(path))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert json.loads(a.read_text())["seed"] == 42


def test_seed_comes_from_the_environment(capsys, monkeypatch):
    monkeypatch.setenv("PROGEQ_SEED", "17")
    _, out, _ = run(capsys, "simulate", "pirates-uncorrelated", "--trials", "100")
    assert json.loads(out)["seed"] == 17
    _, out, _ = run(capsys, "simulate", "pirates-uncorrelated", "--trials", "100", "--seed", "5")
    assert json.loads(out)["seed"] == 5


def test_threads_do_not_change_results(capsys):
    _, one, _ = run(capsys, "simulate", "intro-uncorrelated", "--trials", "120")
    _, two, _ = run(capsys, "simulate", "intro-uncorrelated", "--trials", "120", "--threads", "2")
    assert one == two


def test_csv_output(capsys):
    code, out, _ = run(capsys, "simulate", "stage-nash-constant", "--trials", "10", "--format", "csv")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["section", "key", "value"]
    assert ["halting", "rate", "1.0"] in rows
    assert any(r[0] == "outcome" and r[1] == "D-D" and r[2] == "1.0" for r in rows)


def test_check_eq_flags_a_profitable_deviation(capsys):
    # above the pirates threshold of 1/5, deviating is profitable
    code, out, _ = run(capsys, "check-eq", "pirates-correlated-eq", "--epsilon", "1/2", "--trials", "2000")
    assert code == 0
    report = json.loads(out)
    assert report["verdict"] == "not-equilibrium"
    assert report["analysis"]["threshold"]["scenario_below_threshold"] is False
    assert report["verdicts"][0]["witness"]["params"]["q"] == "1"


def test_check_eq_at_the_threshold_finds_no_significant_gain(capsys):
    # at eps = 1/5 exactly the deviation gain is zero
    code, out, _ = run(capsys, "check-eq", "pirates-correlated-eq", "--trials", "1000")
    report = json.loads(out)
    assert code == 0 and report["verdict"] == "equilibrium-consistent"
    assert all(abs(d["gain"]) < 4 * d["gain_se"] for d in report["deviations"])
    assert report["analysis"]["threshold"]["scenario_below_threshold"] is False


def test_check_eq_below_the_threshold(capsys):
    code, out, _ = run(capsys, "check-eq", "pirates-correlated-eq", "--epsilon", "1/10", "--trials", "2000")
    report = json.loads(out)
    assert report["verdict"] == "equilibrium-consistent"
    assert all(d["gain"] < 0 for d in report["deviations"])


@pytest.mark.parametrize("argv", [
    ["simulate", "no-such-scenario"],
    ["simulate", "pirates-correlated-eq", "--epsilon", "2"],
    ["simulate", "pirates-correlated-eq", "--trials", "0"],
    ["simulate", "pirates-correlated-eq", "--seed", "banana"],
    ["paper-suite", "--seed", "-1"],
])
def test_parse_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == "" and err.startswith("error:")


def test_malformed_scenario_files_exit_2(capsys, tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    assert run(capsys, "simulate", str(bad_json))[0] == 2
    wrong_count = dict(NAIVE, bots=[{"kind": "constant", "action": "C"}] * 2)
    assert run(capsys, "simulate", write_scenario(tmp_path, wrong_count))[0] == 2
    unknown = dict(NAIVE, bots=[{"kind": "oracle"}] * 3)
    assert run(capsys, "simulate", write_scenario(tmp_path, unknown))[0] == 2


def test_excessive_non_halting_exits_3(capsys, tmp_path):
    code, out, err = run(capsys, "simulate", write_scenario(tmp_path, NAIVE))
    assert code == 3 and "non-halting" in err and out == ""


def test_tolerated_non_halting_is_reported(capsys, tmp_path):
    doc = dict(NAIVE, max_nonhalt=1.0)
    code, out, _ = run(capsys, "simulate", write_scenario(tmp_path, doc))
    assert code == 0
    report = json.loads(out)
    assert report["halting"]["nonhalting"] > 0
    lo, hi = report["halting"]["ci3"]
    assert lo <= report["halting"]["rate"] <= hi


def test_inline_game_file(capsys, tmp_path):
    game = {"name": "coord", "actions": [["A", "B"], ["A", "B"]],
            "payoffs": [[[1, 1], [0, 0]], [[0, 0], [2, 2]]]}
    (tmp_path / "coord.json").write_text(json.dumps(game))
    doc = {"game": "coord.json", "bots": [{"kind": "constant", "action": "B"}] * 2, "trials": 5}
    code, out, err = run(capsys, "simulate", write_scenario(tmp_path, doc))
    assert code == 0, err
    assert json.loads(out)["payoffs"]["mean"] == [2.0, 2.0]


def test_paper_suite_quick_filter(capsys):
    code, out, _ = run(capsys, "paper-suite", "--quick", "--filter", "payoff-tables")
    assert code == 0
    report = json.loads(out)
    jsonschema.validate(report, cli.report_schema())
    assert [c["id"] for c in report["criteria"]] == [1] and report["passed"]


def test_entry_point_runs_as_a_module():
    proc = subprocess.run([sys.executable, "-m", "progeq.cli", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "scenarios:" in proc.stdout
