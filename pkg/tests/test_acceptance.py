"""Acceptance criteria. Each test records one PASS/FAIL line in the terminal summary."""

import random
import time

import pytest

from _acceptance import criterion
from conftest import DIRECTOR, random_snapshot
from mutants import MUTANTS
from transactive.contract import Contract, ContractParams, Rejection
from transactive.fuzz import FuzzConfig, run_fuzz
from transactive.harness import ReplayMismatch, replay, run_simulation, verify_log
from transactive.journal import CorruptLog
from transactive.model import ObjectiveKind, ObjectiveSpec, check_allocation, objective
from transactive.oracle import exact_problems
from transactive.runs import carpool_config, energy_config, energy_tables
from transactive.scenarios import CarpoolParams, generate_carpool, interval_label, synthetic_energy_day
from transactive.solver import SolverConfig, Strategy, solve

pytestmark = pytest.mark.slow

ENERGY_SEED = 1
CARPOOL_SEED = 7


@pytest.fixture(scope="module")
def carpool(tmp_path_factory):
    out = tmp_path_factory.mktemp("carpool")
    cfg = carpool_config(CarpoolParams(seed=CARPOOL_SEED), solvers=2, out_dir=out)
    report, sim = run_simulation(cfg)
    return cfg, report, sim, out


@pytest.fixture(scope="module")
def energy(tmp_path_factory):
    out = tmp_path_factory.mktemp("energy")
    cfg = energy_config(seed=ENERGY_SEED, solvers=2, out_dir=out)
    started = time.perf_counter()
    report, sim = run_simulation(cfg)
    elapsed = time.perf_counter() - started
    energy_tables(cfg, report, out)
    return cfg, report, sim, out, elapsed


# -- solver optimality ---------------------------------------------------------------


@criterion("oracle equivalence")
def test_oracle_equivalence():
    started = time.perf_counter()
    lines = []
    for spec in (ObjectiveSpec(), ObjectiveSpec(ObjectiveKind.TOTAL_BENEFIT)):
        hits, gaps = 0, []
        for i in range(200):
            snap = random_snapshot(random.Random(f"oracle:{i}"), 4, 4, 3, 5)
            value = {}
            for strategy in Strategy:
                cfg = SolverConfig(strategy=strategy, objective=spec, seed=i)
                alloc = solve(snap, cfg)
                assert check_allocation(snap.offers, alloc, precision=cfg.precision).feasible
                value[strategy] = objective(alloc, snap.offers, spec)
            best = value[Strategy.EXACT_ENUMERATION]
            assert value[Strategy.BRANCH_AND_BOUND] == best, f"instance {i}"
            if value[Strategy.GREEDY_LOCAL_SEARCH] == best:
                hits += 1
            else:
                gaps.append(f"{best - value[Strategy.GREEDY_LOCAL_SEARCH]}/{best}")
        assert hits >= 180, f"{spec.kind.value}: heuristic optimal on {hits}/200"
        lines.append(f"{spec.kind.value}: heuristic optimal {hits}/200, gaps {' '.join(gaps)}")
    elapsed = time.perf_counter() - started
    assert elapsed < 60
    return "; ".join(lines) + f"; B&B == enumeration 400/400; {elapsed:.1f}s"


# -- verifier soundness -----------------------------------------------------------------


@criterion("verifier soundness fuzz")
def test_verifier_soundness_fuzz():
    config = FuzzConfig(seed=2024, iterations=10_000, only_assignments=True, check_progress=False)
    stats, cx = run_fuzz(config)
    assert cx is None, cx and cx.message
    mutated = sum(n for m, n in stats.mutations.items() if m != "none")
    assert all(stats.mutations[m] > 0 for m in ("over_capacity", "below_provider", "above_consumer",
                                                 "below_bound", "above_bound", "pair", "system_limit"))
    return (f"{stats.sequences} sequences, {stats.accepted_assignments} accepted / "
            f"{sum(stats.rejected.values())} rejected calls, {mutated} mutated assignments, "
            f"{stats.finalized_assignments} finalized assignments, 0 infeasible")


@criterion("fixed-point soundness")
def test_fixed_point_soundness():
    rng = random.Random(99)
    params = ContractParams(num_types=3, precision=10**6, max_quantity=9, length_receive=1, length_solve=1)
    accepted = violations = 0
    while accepted < 1000:
        c = Contract()
        c.setup(DIRECTOR, 0, params)
        for owner in range(6):
            oid = c.create_offer(owner + 1, 0, owner < 3)[0].payload["id"]
            for t in rng.sample([1, 2, 3], rng.randint(1, 3)):
                c.update_offer(owner + 1, 0, oid, t, rng.choice([1, 3, 6, 7, 9]), 5)
            c.post_offer(owner + 1, 0, oid)
        c.close(DIRECTOR, 1)
        sid = c.create_solution(50, 1)[0].payload["id"]
        for _ in range(12):
            try:
                c.add_assignment(50, 1, sid, rng.randrange(3), rng.randrange(3, 6), rng.choice([1, 2, 3]),
                                 rng.randint(1, 4), 5)
            except Rejection:
                continue
            accepted += 1
            sol = c.state.solutions[sid]
            violations += bool(exact_problems(c.state.offers, sol.assignments))
    assert violations == 0
    return f"{accepted} accepted assignments at precision 10^6, {violations} exact-rational violations"


# -- trace properties ----------------------------------------------------------------------


@criterion("trace properties P1-P5")
def test_trace_properties(carpool, energy):
    stats, cx = run_fuzz(FuzzConfig(seed=7, iterations=1000))
    assert cx is None, cx and cx.message
    for name, (_, report, *_rest) in (("carpool", carpool), ("energy", energy)):
        assert all(report.properties.values()), (name, report.properties)
        out = carpool[3] if name == "carpool" else energy[3]
        assert verify_log(out / "ops.jsonl").ok, name
    caught = []
    for prop, mutant in MUTANTS.items():
        _, mcx = run_fuzz(FuzzConfig(seed=0, iterations=1000), mutant)
        assert mcx is not None, f"{mutant.__name__} not caught"
        assert prop in mcx.message or (prop == "FinalizedFeasibility" and "infeasible" in mcx.message), mcx.message
        caught.append(f"{mutant.__name__}->{prop}@{mcx.iteration}")
    return (f"1000 fuzz sequences ({stats.operations} ops) and both case studies clean; "
            f"{len(caught)} mutants caught: {', '.join(caught)}")


# -- cost law --------------------------------------------------------------------------------


@criterion("call-count law")
def test_call_count_law(carpool, energy):
    offers = solutions = 0
    for cfg, report, sim, *_ in (carpool, energy):
        posted = 0
        for agent in sim.agents.values():
            for cycle, oid, spec in getattr(agent, "history", ()):
                assert sim.accepted_calls(cycle, "offer", oid) == len(spec.types) + 2
                posted += 1
        assert posted == len(cfg.offers)
        offers += posted
        for rep in report.solver_reports:
            if rep.solution_id is not None:
                assert rep.accepted == rep.planned + 1 and rep.rejected == 0
                assert sim.accepted_calls(rep.cycle, "solution", rep.solution_id) == 1 + rep.planned
                solutions += 1
    assert solutions >= 1
    return f"{offers} offers at n+2 calls, {solutions} solutions at 1+|A| calls (carpool + energy)"


@criterion("empty-market fallback")
def test_empty_market_fallback():
    report, _ = run_simulation(carpool_config(CarpoolParams(seed=CARPOOL_SEED), solvers=0))
    (cycle,) = report.cycles
    assert cycle.solution_id is None and cycle.finalized == [] and cycle.objective == 0
    assert sum(cycle.supply.values()) > 0 and sum(cycle.demand.values()) > 0
    c = Contract()
    c.setup(DIRECTOR, 0, ContractParams(1, 1, 1, 1, 1))
    c.close(DIRECTOR, 1)
    events = c.finalize(DIRECTOR, 2)
    assert [e.kind for e in events] == ["CycleFinalized"] and events[0].payload["objective"] == 0
    assert all(report.properties.values())
    return "no solver: 0 assignments, objective 0, all properties pass"


# -- case studies ---------------------------------------------------------------------------------


@criterion("carpool at full scale")
def test_carpool_scale(carpool):
    cfg, report, sim, _ = carpool
    params = CarpoolParams(seed=CARPOOL_SEED)
    scenario = generate_carpool(params)
    assert (len(scenario.prosumers), len(scenario.pickups), len(scenario.destinations)) == (75, 20, 5)
    assert len(params.intervals()) == 11
    (cycle,) = report.cycles
    assert director_finished(sim) == 1 and cycle.objective > 0 and cycle.feasible
    worst = max(r.solve_seconds for r in report.solver_reports)
    assert worst < 1.0
    return (f"{len(cfg.offers)} offers, {report.total_matched()} seats matched, objective {cycle.objective}, "
            f"solve {worst * 1000:.0f} ms, run {report.wall_seconds:.2f}s")


def director_finished(sim):
    return sim.agents["director"].finished


@criterion("energy at full scale")
def test_energy_scale(energy):
    cfg, report, sim, out, elapsed = energy
    profiles = synthetic_energy_day(seed=ENERGY_SEED)
    assert len(profiles) == 102 and sum(any(p > 0 for p in h.net_power) for h in profiles) == 5
    assert elapsed < 300
    rows = (out / "totals_per_interval.csv").read_text().splitlines()[1:]
    assert len(rows) == 96
    for row in rows:
        _, produced, demanded, traded = map(int, row.split(","))
        assert traded <= min(produced, demanded)
    traded_total = sum(int(r.split(",")[3]) for r in rows)
    assert traded_total == report.total_matched() > 0
    return f"96 intervals, {traded_total} units traded, {len(cfg.offers)} offers, {elapsed:.1f}s"


# -- resilience -----------------------------------------------------------------------------------


def finalize_ticks(sim):
    return [o.op.time for _, o in sim.outcomes if o.accepted and o.op.name == "finalize"]


def matchable(cycle):
    return any(cycle.supply.get(t, 0) > 0 and cycle.demand.get(t, 0) > 0 for t in cycle.supply)


@criterion("failure resilience")
def test_failure_resilience(energy):
    cfg, baseline, base_sim, *_ = energy
    ticks = finalize_ticks(base_sim)
    # cycle 9 trades 08:00-08:45; kill one solver a quarter into it, i.e. at 08:15
    assert interval_label(32) == 800
    kill_one = ticks[7] + (ticks[8] - ticks[7]) // 4
    one, _ = run_simulation(energy_config(seed=ENERGY_SEED, solvers=2, faults=[("solver-0", kill_one)]))
    after = [c for c in one.cycles if c.cycle >= 10]
    live = [c for c in after if matchable(c)]
    assert live
    for c in live:
        assert c.feasible and c.objective > 0 and c.winner == "solver-1", c.cycle
    assert all(one.properties.values())

    kill_two = ticks[11] + 1  # the survivor dies early in cycle 13
    both, _ = run_simulation(energy_config(seed=ENERGY_SEED, solvers=2,
                                           faults=[("solver-0", kill_one), ("solver-1", kill_two)]))
    dead = [c for c in both.cycles if c.cycle >= 13]
    assert dead and all(c.objective == 0 and not c.finalized for c in dead)
    assert any(matchable(c) for c in dead)
    assert all(both.properties.values())
    return (f"solver-0 killed at tick {kill_one} (08:15): {len(live)} later matchable cycles won by solver-1; "
            f"both killed by tick {kill_two}: {len(dead)} later cycles empty")


# -- replay ---------------------------------------------------------------------------------------


def tamper_detected(path, rng, tries):
    data = path.read_bytes()
    for _ in range(tries):
        i = rng.randrange(len(data))
        bad = bytearray(data)
        bad[i] = (bad[i] + rng.randint(1, 255)) % 256
        path.write_bytes(bytes(bad))
        try:
            replay(path)
        except (CorruptLog, ReplayMismatch):
            continue
        finally:
            path.write_bytes(data)
        return False
    return True


@criterion("replay determinism")
def test_replay_determinism(carpool, energy, tmp_path):
    rng = random.Random(5)
    details = []
    for name, (cfg, report, _, out, *_r) in (("carpool", carpool), ("energy", energy)):
        again = (carpool_config(CarpoolParams(seed=CARPOOL_SEED), solvers=2, out_dir=tmp_path / name)
                 if name == "carpool" else energy_config(seed=ENERGY_SEED, solvers=2, out_dir=tmp_path / name))
        rerun, _ = run_simulation(again)
        assert rerun.final_hash == report.final_hash
        assert replay(out / "ops.jsonl").state_hash() == report.final_hash
        assert (tmp_path / name / "ops.jsonl").read_bytes() == (out / "ops.jsonl").read_bytes()
        assert tamper_detected(out / "ops.jsonl", rng, 25)
        details.append(f"{name} {report.final_hash[:12]}")
    return ", ".join(details) + "; 50/50 single-byte tampers detected"
