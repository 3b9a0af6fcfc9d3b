import csv
import json

import pytest

from conftest import PARAMS
from transactive.cli import main
from transactive.contract import Operation, setup_operation
from transactive.harness import verify_log
from transactive.journal import JournalWriter
from transactive.scenarios import EnergyProfile, write_energy_traces


@pytest.fixture(scope="module")
def carpool_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("carpool")
    assert main(["run", "carpool", "--seed", "7", "--out", str(out), "--solvers", "2"]) == 0
    return out


def test_carpool_run_outputs(carpool_run, capsys):
    summary = json.loads((carpool_run / "summary.json").read_text())
    assert summary["status"] == 0 and summary["cycles"] == 1
    for name in ("offers", "matches", "totals"):
        with open(carpool_run / f"{name}_per_interval.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 11
    assert sum(int(r["traded"]) for r in rows) == summary["matched"]


def test_verify_and_replay_good_log(carpool_run, capsys):
    assert main(["verify", str(carpool_run / "ops.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "P1" in out and "LogConsistency" in out
    assert main(["replay", str(carpool_run / "ops.jsonl")]) == 0
    assert capsys.readouterr().out.strip() == (carpool_run / "state.hash").read_text().strip()
    assert main(["replay", str(carpool_run / "ops.jsonl"), "--expect", "0" * 64]) == 1


def test_truncated_log_exit_1(carpool_run, tmp_path):
    data = (carpool_run / "ops.jsonl").read_bytes()
    bad = tmp_path / "ops.jsonl"
    bad.write_bytes(data[: len(data) // 2])
    assert main(["verify", str(bad)]) == 1
    assert main(["replay", str(bad)]) == 1


def test_missing_log_exit_3(tmp_path):
    assert main(["verify", str(tmp_path / "nope.jsonl")]) == 3


def test_missing_config_exit_2_without_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "carpool", "--config", str(tmp_path / "missing.json"), "--out", str(out)]) == 2
    assert not out.exists()


def test_bad_flags_exit_2(tmp_path):
    assert main(["run", "carpool", "--strategy", "magic"]) == 2
    assert main(["run", "carpool", "--solvers", "-1", "--out", str(tmp_path / "x")]) == 2
    assert main(["run", "carpool", "--kill-solver", "zero@three", "--out", str(tmp_path / "y")]) == 2
    assert main(["run", "carpool", "--kill-solver", "5@3", "--out", str(tmp_path / "z")]) == 2
    assert main([]) == 2
    assert not any((tmp_path / d).exists() for d in "xyz")


def test_default_out_dir_from_env(tmp_path, monkeypatch):
    monkeypatch.setenv("TRANSACTIVE_OUT", str(tmp_path))
    cfg = tmp_path / "small.json"
    cfg.write_text(json.dumps({"carpool": {"prosumers": 10, "pickups": 4, "destinations": 2}}))
    assert main(["run", "carpool", "--seed", "3", "--config", str(cfg)]) == 0
    assert (tmp_path / "carpool-seed3" / "summary.json").exists()


def test_energy_from_trace_file(tmp_path):
    flat = [0] * 96
    producer = list(flat)
    producer[40:44] = [500] * 4
    consumer = list(flat)
    consumer[40:44] = [-300] * 4
    traces = tmp_path / "traces.csv"
    write_energy_traces([EnergyProfile(1, producer), EnergyProfile(2, consumer)], traces)
    out = tmp_path / "energy"
    assert main(["run", "energy", "--traces", str(traces), "--out", str(out)]) == 0
    with open(out / "totals_per_interval.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 96
    traded = {int(r["interval"]): int(r["traded"]) for r in rows}
    assert traded[1000] == 300 and sum(traded.values()) == 1200


def test_custom_run_with_kill(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "params": PARAMS.to_json(),
        "cycles": 2,
        "offers": [{"actor": 1, "providing": True, "types": {"1": [5, 2]}, "cycle": c} for c in (1, 2)]
                  + [{"actor": 2, "providing": False, "types": {"1": [5, 9]}, "cycle": c} for c in (1, 2)],
    }))
    out = tmp_path / "custom"
    assert main(["run", "custom", "--config", str(cfg), "--solvers", "1", "--kill-solver", "0@25",
                 "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert [c["objective"] for c in report["cycles"]] == [5, 0]


def test_verify_flags_post_after_close(tmp_path):
    """A log claiming a post was accepted after Closed must fail P2."""
    path = tmp_path / "ops.jsonl"
    w = JournalWriter.open(path)

    def put(op, accepted=True, error=None):
        w.write({"cycle": 1, "time": op.time, "kind": "op", **op.to_json(), "accepted": accepted, "error": error})

    put(setup_operation(0, 0, PARAMS))
    put(Operation("create_offer", 1, 1, {"providing": True, "misc": 0}))
    put(Operation("update_offer", 1, 2, {"id": 0, "rtype": 1, "quantity": 5, "value": 3}))
    put(Operation("close", 0, 10))
    put(Operation("post_offer", 1, 11, {"id": 0}))
    w.write({"cycle": 1, "time": 11, "kind": "checkpoint", "hash": "0" * 64})
    w.close()
    result = verify_log(path)
    assert not result.report.passed("P2") and result.mismatches
    assert main(["verify", str(path)]) == 1


def test_fuzz_command(tmp_path, capsys):
    assert main(["fuzz", "--iterations", "0"]) == 0
    assert main(["fuzz", "--iterations", "20", "--seed", "4", "--out", str(tmp_path)]) == 0
    assert "sequences" in capsys.readouterr().out
