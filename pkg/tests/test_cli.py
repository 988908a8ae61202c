import csv
import json

import pytest

from agebrw.cli import REPORT_COLUMNS, SWEEP_COLUMNS, main
from agebrw.simulate import TRAJECTORY_COLUMNS


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_critical_stdout_and_files(tmp_path, capsys):
    code, out = run(["critical", "--scenario", "homtree", "--d", "4", "--k", "1", "--order", "60"], capsys)
    assert code == 0
    data = json.loads(out.out)
    assert data["lambda_w"]["value"] == pytest.approx(0.25, abs=1e-12)
    prefix = str(tmp_path / "sub" / "rep")
    code, _ = run(["critical", "--scenario", "homloops", "--d", "4", "--k", "1", "--k-star", "1",
                   "--alpha", "1", "--alpha-o", "1", "--order", "60", "--lambda", "0.3",
                   "--out", prefix], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(prefix + ".csv")))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert float(rows[0]["lambda_s"]) == pytest.approx(2 / (1 + 2 * 3 ** 0.5), rel=1e-9)
    assert json.load(open(prefix + ".json"))["phase_at_lambda"]["lambda"] == 0.3


def test_exit_code_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["critical", "--config", str(bad)], capsys)[0] == 2
    assert run(["critical", "--scenario", "nosuch"], capsys)[0] == 2
    assert run(["sweep", "--scenario", "treeloop", "--grid", "k_oo=0:1:0"], capsys)[0] == 2
    assert run(["expect", "--lambda", "1"], capsys)[0] == 2
    assert run(["simulate", "--scenario", "homtree", "--lambda", "0.2", "--trials", "0",
                "--seed", "1"], capsys)[0] == 2


def test_exit_code_numeric(tmp_path, capsys):
    cfg = tmp_path / "tree.json"
    cfg.write_text(json.dumps({"space": {"tree": {"d": 3}},
                               "base": {"edge": {"type": "constant", "k": 1.0}}}))
    code, out = run(["critical", "--config", str(cfg), "--order", "1"], capsys)
    assert code == 3 and "numeric" in out.err


def test_exit_code_io(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, out = run(["expect", "--lambda", "2", "--alpha", "1", "--T", "1",
                     "--out", str(blocker / "x.csv")], capsys)
    assert code == 4 and "I/O" in out.err
    assert run(["compare", "--out-dir", str(blocker / "d")], capsys)[0] == 4


def test_sweep_schema(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code, _ = run(["sweep", "--scenario", "agelooptree", "--d", "4", "--k", "1", "--alpha", "1",
                   "--alpha-o", "0.5", "--grid", "k_oo=0:2k2:11", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(out)))
    assert tuple(rows[0]) == SWEEP_COLUMNS and len(rows) == 11
    assert {r["relation_1"] for r in rows} <= {"pass", "na"}


def test_check_maximality(tmp_path, capsys):
    out = tmp_path / "m.json"
    code, _ = run(["check-maximality", "--scenario", "agelooptree", "--d", "4", "--k", "1",
                   "--k-oo", "3", "--alpha", "1", "--alpha-o", "0.2", "--order", "60",
                   "--out", str(out)], capsys)
    assert code == 0
    data = json.load(open(out))
    assert data["all_hold"] is True
    assert data["relations"][0]["name"] == "lw_star_le_lw"


def test_expect_and_compare(tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert run(["expect", "--lambda", "2.5", "--alpha", "1.5", "--T", "1", "--out", str(out)], capsys)[0] == 0
    rows = list(csv.DictReader(open(out)))
    assert list(rows[0]) == ["t", "V_closed", "S_closed", "V_rk4", "regime_case"]
    assert {r["regime_case"] for r in rows} == {"2"}
    d = tmp_path / "cmp"
    assert run(["compare", "--out-dir", str(d), "--T", "2", "--gnuplot"], capsys)[0] == 0
    index = json.load(open(d / "index.json"))
    assert [e["regime_case"] for e in index] == [1, 2, 3, 4]
    assert all((d / e["file"]).exists() for e in index)
    assert (d / "compare_lambda4_alpha4.gp").exists()


def test_simulate_outputs(tmp_path, capsys):
    prefix = str(tmp_path / "sim")
    code, _ = run(["simulate", "--scenario", "homtree", "--d", "3", "--lambda", "0.3", "--seed", "4",
                   "--trials", "20", "--horizon", "2", "--pop-cap", "300", "--target", "o",
                   "--out", prefix], capsys)
    assert code == 0
    header = open(prefix + "_trajectories.csv").readline().strip()
    assert header == ",".join(TRAJECTORY_COLUMNS)
    summary = json.load(open(prefix + "_summary.json"))
    assert summary["meta"]["seed"] == 4 and summary["meta"]["seed_auto_generated"] is False
    assert [e["event"] for e in summary["estimates"]] == ["global_pop_cap", "global_pop_cap_tenth", "local_L10"]


def test_simulate_records_auto_seed(capsys):
    code, out = run(["simulate", "--scenario", "homtree", "--d", "3", "--lambda", "0.1",
                     "--trials", "3", "--horizon", "1", "--mode", "generational"], capsys)
    assert code == 0
    meta = json.loads(out.out)["meta"]
    assert meta["seed_auto_generated"] is True and isinstance(meta["seed"], int)


def test_threads_env(tmp_path, capsys, monkeypatch):
    args = ["simulate", "--scenario", "agelooptree", "--d", "3", "--k-oo", "0.5", "--lambda", "0.5",
            "--seed", "2", "--trials", "30", "--horizon", "2", "--pop-cap", "200"]
    run(args + ["--out", str(tmp_path / "a")], capsys)
    monkeypatch.setenv("BRW_THREADS", "4")
    run(args + ["--out", str(tmp_path / "b")], capsys)
    for suffix in ("_trajectories.csv", "_summary.json"):
        assert (tmp_path / ("a" + suffix)).read_bytes() == (tmp_path / ("b" + suffix)).read_bytes()
