import csv
import io
import json
import subprocess
import sys

import pytest

from adaptchain.cli import main
from adaptchain.harness import CSV_HEADER, read_metrics
from conftest import FIXTURES

FIXTURE = str(FIXTURES / "recurring_violation.json")


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_gen_then_sdm(tmp_path, capsys):
    out = tmp_path / "sc.json"
    assert main(["gen", "--tasks", "6", "--seed", "2", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["workflow"]["tasks"]) == 6 and len(doc["services"]) == 15
    assert main(["sdm", "--workflow", str(out)]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0] == [""] + [f"t{i}" for i in range(1, 7)]
    assert all(table[i][i] == "1|1|1" for i in range(1, 7))


def test_gen_to_stdout(capsys):
    assert main(["gen", "--tasks", "3"]) == 0
    assert json.loads(capsys.readouterr().out)["workflow"]["id"] == "generated-3-0"


def test_train_and_run(tmp_path, capsys):
    q = tmp_path / "q.json"
    log = tmp_path / "log.csv"
    assert main(["train", "--scenario", FIXTURE, "--episodes", "2000", "--seed", "1", "-o", str(q),
                 "--log", str(log)]) == 0
    best = min(json.loads(q.read_text()), key=lambda r: r["q"])
    assert best["chain"] == "t2:Redundancy|t3:Rework"
    assert len(rows(log.read_text())) == 2001
    metrics = tmp_path / "m.csv"
    assert main(["run", "--scenario", FIXTURE, "--strategy", "single,chain,oracle", "--qtable", str(q),
                 "--executions", "5", "-o", str(metrics)]) == 0
    assert rows(metrics.read_text())[0] == CSV_HEADER
    got = read_metrics(metrics)
    assert got["chain"]["mean_total"] == got["chain_oracle"]["mean_total"] < got["single"]["mean_total"]
    printed = rows(capsys.readouterr().out)
    assert [r[0] for r in printed[1:]] == ["single", "chain", "chain_oracle"]


def test_run_trains_when_asked(tmp_path, capsys):
    assert main(["run", "--scenario", FIXTURE, "--strategy", "chain", "--episodes", "200", "--executions", "2",
                 "--weights", "1,1,1,7"]) == 0
    assert rows(capsys.readouterr().out)[1][0] == "chain"


def test_oracle_ranks(capsys):
    assert main(["oracle", "--scenario", FIXTURE, "--vt", "t2", "--attack", "DoS", "--top", "3"]) == 0
    table = rows(capsys.readouterr().out)
    assert table[0][:2] == ["rank", "chain"] and len(table) == 4
    assert table[1][1] == "t2:Redundancy|t3:Rework"
    totals = [float(r[-1]) for r in table[1:]]
    assert totals == sorted(totals)


@pytest.mark.parametrize("argv", [
    ["run", "--scenario", FIXTURE, "--strategy", "chain", "--executions", "1"],
    ["run", "--scenario", "/nonexistent.json", "--strategy", "none"],
    ["run", "--scenario", FIXTURE, "--strategy", "greedy"],
    ["train", "--scenario", FIXTURE, "--rl", "/nonexistent.json", "-o", "q.json"],
    ["gen", "--tasks", "1"],
])
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_validation_errors_exit_3(tmp_path):
    bad = tmp_path / "w.json"
    bad.write_text(json.dumps({"id": "w", "tasks": [{"id": "a", "c": 1, "i": 1, "a": 1},
                                                    {"id": "b", "c": 1, "i": 1, "a": 1}],
                               "control_edges": [["a", "b"], ["b", "a"]]}))
    assert main(["sdm", "--workflow", str(bad)]) == 3
    bad.write_text("{broken")
    assert main(["sdm", "--workflow", str(bad)]) == 3
    assert main(["oracle", "--scenario", FIXTURE, "--vt", "t9", "--attack", "DoS"]) == 3


def test_usage_error_and_module_entry():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    proc = subprocess.run([sys.executable, "-m", "adaptchain", "oracle", "--scenario", FIXTURE, "--vt", "t2",
                           "--attack", "DoS", "--top", "1"], capture_output=True, text=True)
    assert proc.returncode == 0 and "t2:Redundancy|t3:Rework" in proc.stdout
