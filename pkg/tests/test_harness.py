import json

import pytest

from transactive.contract import ContractParams
from transactive.harness import (
    ConfigError,
    Directory,
    DuplicateName,
    NotFound,
    SimConfig,
    UnknownAgent,
    build_simulation,
    replay,
    run_simulation,
    verify_log,
)
from transactive.journal import CorruptLog
from transactive.scenarios import OfferSpec
from transactive.solver import SolverConfig

PARAMS = ContractParams(num_types=4, precision=10**6, max_quantity=1000, length_receive=10, length_solve=10)


def small_market(cycles=1, solvers=1, **kw):
    offers = []
    for c in range(1, cycles + 1):
        offers += [
            OfferSpec(1, True, {1: (500, 5), 2: (300, 4)}, cycle=c),
            OfferSpec(2, False, {1: (400, 10)}, cycle=c),
            OfferSpec(3, False, {2: (200, 9), 1: (200, 8)}, cycle=c),
        ]
    return SimConfig(offers=offers, params=PARAMS, cycles=cycles,
                     solvers=[SolverConfig(seed=i) for i in range(solvers)], **kw)


# -- directory ---------------------------------------------------------------------


def test_directory():
    d = Directory()
    d.register("a", 1)
    assert d.lookup("a") == 1 and d.names() == ["a"]
    with pytest.raises(DuplicateName):
        d.register("a", 2)
    with pytest.raises(NotFound):
        d.lookup("b")


# -- end to end -------------------------------------------------------------------------


def test_one_pair_one_solver_trades():
    cfg = SimConfig(offers=[OfferSpec(1, True, {1: (500, 5)}), OfferSpec(2, False, {1: (500, 10)})],
                    params=PARAMS)
    report, sim = run_simulation(cfg)
    (cyc,) = report.cycles
    assert cyc.objective == 500 and cyc.winner == "solver-0"
    assert [(a.quantity, a.unit_price) for a in cyc.finalized] == [(500, 7)]
    # both prosumers saw their trade
    assert all(len(sim.agents[n].trades) == 1 for n in ("prosumer-1", "prosumer-2"))
    assert all(report.properties.values())


def test_no_solvers_gives_empty_cycles():
    report, _ = run_simulation(small_market(cycles=3, solvers=0))
    assert len(report.cycles) == 3
    assert all(c.objective == 0 and not c.finalized and c.solution_id is None for c in report.cycles)
    assert all(report.properties.values())


def test_multi_cycle_feasible_and_conserving():
    report, sim = run_simulation(small_market(cycles=3, solvers=2))
    assert all(c.objective > 0 and c.feasible for c in report.cycles)
    assert report.conservation_ok()
    for c in report.cycles:
        assert sum(c.matched.values()) <= sum(c.supply.values())
        assert sum(c.matched.values()) <= sum(c.demand.values())
    assert all(report.properties.values())


def test_run_is_deterministic(tmp_path):
    a, _ = run_simulation(small_market(cycles=2, solvers=2, out_dir=tmp_path / "a"))
    b, _ = run_simulation(small_market(cycles=2, solvers=2, out_dir=tmp_path / "b"))
    assert a.final_hash == b.final_hash
    assert (tmp_path / "a" / "ops.jsonl").read_bytes() == (tmp_path / "b" / "ops.jsonl").read_bytes()
    assert (tmp_path / "a" / "events.jsonl").read_bytes() == (tmp_path / "b" / "events.jsonl").read_bytes()


def test_call_counts():
    cfg = small_market(cycles=2, solvers=2)
    report, sim = run_simulation(cfg)
    for cyc in report.cycles:
        ids = [k for k in sim.call_counts if k[0] == cyc.cycle and k[1] == "offer"]
        assert len(ids) == 3
        for k in ids:
            spec_types = sim.call_counts[k] - 2
            assert spec_types in (1, 2)  # create + one update per type + post
        for r in report.solver_reports:
            if r.cycle == cyc.cycle and r.solution_id is not None:
                assert sim.accepted_calls(cyc.cycle, "solution", r.solution_id) == 1 + r.planned


# -- faults -------------------------------------------------------------------------------


def test_fault_validation():
    with pytest.raises(ConfigError):
        small_market(faults=[("solver-9", 3)]).validate()
    with pytest.raises(ConfigError):
        small_market(faults=[("solver-0", 10**6)]).validate()


def test_kill_unknown_or_dead_agent():
    sim = build_simulation(small_market(solvers=1))
    with pytest.raises(UnknownAgent):
        sim.kill_now("solver-7")
    sim.kill_now("solver-0")
    with pytest.raises(UnknownAgent):
        sim.kill_now("solver-0")
    with pytest.raises(UnknownAgent):
        sim.inject_fault("solver-0", 5)


def test_killing_only_solver_matches_no_solver_baseline():
    killed, _ = run_simulation(small_market(cycles=2, solvers=1, faults=[("solver-0", 5)]))
    baseline, _ = run_simulation(small_market(cycles=2, solvers=0))
    assert [c.objective for c in killed.cycles] == [c.objective for c in baseline.cycles] == [0, 0]
    assert killed.kills == [("solver-0", 5)]
    assert all(killed.properties.values())


def test_surviving_solver_keeps_market_running():
    report, _ = run_simulation(small_market(cycles=3, solvers=2, faults=[("solver-0", 3)]))
    assert all(c.objective > 0 for c in report.cycles)
    assert {c.winner for c in report.cycles} == {"solver-1"}


def test_kill_mid_submission_leaves_partial_solution_harmless():
    # kill the solver one tick after it starts submitting: its partial solution
    # may become candidate but anything finalized is still feasible
    base, sim = run_simulation(small_market(cycles=1, solvers=1))
    submit_ticks = [o.op.time for s, o in sim.outcomes if s == "solver-0"]
    for tick in range(min(submit_ticks) - 1, max(submit_ticks) + 2):
        report, _ = run_simulation(small_market(cycles=1, solvers=1, faults=[("solver-0", tick)]))
        assert all(c.feasible for c in report.cycles)
        assert report.cycles[0].objective <= base.cycles[0].objective
        assert all(report.properties.values())


# -- logs and replay ------------------------------------------------------------------------


def test_replay_reproduces_state_hash(tmp_path):
    report, _ = run_simulation(small_market(cycles=2, solvers=2, out_dir=tmp_path))
    assert replay(tmp_path / "ops.jsonl").state_hash() == report.final_hash
    assert (tmp_path / "state.hash").read_text().strip() == report.final_hash
    assert verify_log(tmp_path / "ops.jsonl").ok


def test_deleted_line_detected(tmp_path):
    run_simulation(small_market(out_dir=tmp_path))
    path = tmp_path / "ops.jsonl"
    lines = path.read_text().splitlines(keepends=True)
    path.write_text("".join(lines[:3] + lines[4:]))
    with pytest.raises(CorruptLog, match="seq gap"):
        replay(path)


def test_tampered_digit_detected(tmp_path):
    run_simulation(small_market(out_dir=tmp_path))
    path = tmp_path / "ops.jsonl"
    lines = path.read_text().splitlines(keepends=True)
    i = next(i for i, l in enumerate(lines) if '"quantity":"500"' in l)
    lines[i] = lines[i].replace('"quantity":"500"', '"quantity":"600"', 1)
    path.write_text("".join(lines))
    with pytest.raises(CorruptLog, match="chain"):
        replay(path)


def test_truncated_log_detected(tmp_path):
    run_simulation(small_market(out_dir=tmp_path))
    path = tmp_path / "ops.jsonl"
    lines = path.read_text().splitlines(keepends=True)
    last_op = max(i for i, l in enumerate(lines) if '"kind":"op"' in l)
    path.write_text("".join(lines[:last_op + 1]))  # drop the closing checkpoints
    with pytest.raises(CorruptLog, match="checkpoint"):
        replay(path)
    path.write_text("".join(lines)[:-5])  # cut mid-line
    with pytest.raises(CorruptLog):
        replay(path)


def test_outputs_written(tmp_path):
    report, _ = run_simulation(small_market(cycles=2, out_dir=tmp_path))
    data = json.loads((tmp_path / "report.json").read_text())
    assert data["totals"]["matched"] == report.total_matched()
    lines = (tmp_path / "solver_reports.jsonl").read_text().splitlines()
    assert len(lines) == 2


def test_invalid_config_writes_nothing(tmp_path):
    cfg = small_market(out_dir=tmp_path / "out")
    cfg.cycles = 0
    with pytest.raises(ConfigError):
        run_simulation(cfg)
    assert not (tmp_path / "out").exists()
