"""Deterministic multi-agent simulation around one contract.

Everything runs on a logical clock driven by a priority queue of
``(tick, priority, seq)`` entries. Contract calls travel over per-agent FIFO
channels into a single ledger queue; the ledger applies at most one operation
per tick, so delivered operations carry strictly increasing times. Replies and
contract events travel back over the same kind of channel.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
import time
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable

from .contract import (
    Contract,
    ContractParams,
    Event,
    Operation,
    Phase,
    Reject,
    setup_operation,
)
from .journal import CorruptLog, JournalWriter, read_journal
from .model import Assignment, ConstraintSet, ObjectiveSpec, check_allocation, objective
from .properties import Monitor, Outcome, PropertyReport, check_logged_outcomes, execute
from .scenarios import OfferSpec
from .solver import SolverConfig, snapshot_from_events, solve

log = logging.getLogger(__name__)

CONTRACT = "contract"
DIRECTOR = "director"


class HarnessError(Exception):
    pass


class ConfigError(HarnessError):
    pass


class UnknownAgent(HarnessError):
    pass


class DuplicateName(HarnessError):
    pass


class NotFound(HarnessError):
    pass


class ChannelClosed(HarnessError):
    pass


# -- directory ----------------------------------------------------------------


class Directory:
    """Name -> endpoint registry; also the actor that drives the cycle clock."""

    def __init__(self):
        self._entries: dict[str, Any] = {}

    def register(self, name: str, endpoint: Any) -> None:
        if name in self._entries:
            raise DuplicateName(name)
        self._entries[name] = endpoint

    def lookup(self, name: str) -> Any:
        try:
            return self._entries[name]
        except KeyError:
            raise NotFound(name) from None

    def names(self) -> list[str]:
        return sorted(self._entries)


# -- agents ---------------------------------------------------------------------


class Agent:
    """Base agent. Subclasses react to start, replies, events and timers."""

    subscribes: frozenset[str] | None = frozenset()  # None means every event

    def __init__(self, name: str, actor: int):
        self.name = name
        self.actor = actor
        self.sim: Simulation | None = None

    @property
    def alive(self) -> bool:
        return self.sim is not None and self.name not in self.sim.dead

    def call(self, op: str, **args) -> None:
        self.sim.send_call(self, op, args)

    def timer(self, delay: int, tag: Any) -> None:
        self.sim.schedule(self.sim.now + delay, self.name, ("timer", tag))

    def on_start(self) -> None:
        pass

    def on_reply(self, outcome: Outcome) -> None:
        pass

    def on_events(self, events: list[Event]) -> None:
        pass

    def on_timer(self, tag: Any) -> None:
        pass


class Director(Agent):
    """Calls setup once, then close and finalize at the phase boundaries."""

    subscribes = frozenset({"Setup", "Closed", "CycleFinalized"})

    def __init__(self, actor: int, params: ContractParams, cycles: int,
                 objective: ObjectiveSpec, constraints: ConstraintSet):
        super().__init__(DIRECTOR, actor)
        self.params = params
        self.cycles = cycles
        self.objective = objective
        self.constraints = constraints
        self.finished = 0

    def on_start(self) -> None:
        op = setup_operation(self.actor, 0, self.params, self.objective, self.constraints)
        self.sim.send_call(self, op.name, op.args)

    def on_events(self, events: list[Event]) -> None:
        for ev in events:
            if ev.kind in ("Setup", "CycleFinalized"):
                if ev.kind == "CycleFinalized":
                    self.finished += 1
                if self.finished < self.cycles:
                    self.sim.schedule(ev.time + self.params.length_receive, self.name, ("timer", "close"))
            elif ev.kind == "Closed":
                self.sim.schedule(ev.time + self.params.length_solve, self.name, ("timer", "finalize"))

    def on_timer(self, tag: Any) -> None:
        self.call(tag)

    def on_reply(self, outcome: Outcome) -> None:
        if not outcome.accepted and outcome.error is Reject.TOO_EARLY:
            self.timer(1, outcome.op.name)


class ProsumerAgent(Agent):
    """Posts its offers at the start of each cycle; records finalized trades."""

    subscribes = frozenset({"Setup", "CycleFinalized", "AssignmentFinalized"})

    def __init__(self, name: str, actor: int, offers: Iterable[OfferSpec]):
        super().__init__(name, actor)
        self.offers_by_cycle: dict[int, list[OfferSpec]] = {}
        for spec in offers:
            self.offers_by_cycle.setdefault(spec.cycle, []).append(spec)
        self.pending: deque[OfferSpec] = deque()
        self.live: dict[int, OfferSpec] = {}  # offer id -> spec, current cycle
        self.cycle = 0
        self.trades: list[tuple[int, Assignment]] = []
        self.history: list[tuple[int, int, OfferSpec]] = []  # (cycle, offer id, spec)

    def _start_cycle(self, cycle: int) -> None:
        self.cycle = cycle
        self.live = {}
        for spec in self.offers_by_cycle.get(cycle, ()):
            self.pending.append(spec)
            self.call("create_offer", providing=spec.providing, misc=spec.misc)

    def on_events(self, events: list[Event]) -> None:
        for ev in events:
            if ev.kind == "Setup":
                self._start_cycle(1)
            elif ev.kind == "CycleFinalized":
                self._start_cycle(ev.cycle + 1)
            elif ev.kind == "AssignmentFinalized":
                p = ev.payload
                if p["providing_offer"] in self.live or p["consuming_offer"] in self.live:
                    a = Assignment(p["providing_offer"], p["consuming_offer"], p["rtype"],
                                   p["quantity"], p["unit_price"])
                    self.trades.append((ev.cycle, a))

    def on_reply(self, outcome: Outcome) -> None:
        if outcome.op.name != "create_offer":
            return
        spec = self.pending.popleft()
        if not outcome.accepted:
            return
        offer_id = outcome.events[0].payload["id"]
        self.live[offer_id] = spec
        self.history.append((self.cycle, offer_id, spec))
        for rtype, (qty, value) in sorted(spec.types.items()):
            self.call("update_offer", id=offer_id, rtype=rtype, quantity=qty, value=value)
        self.call("post_offer", id=offer_id)


@dataclass
class SubmissionReport:
    cycle: int
    solver: str
    planned: int
    accepted: int
    rejected: int
    objective: int
    solve_seconds: float
    solution_id: int | None = None

    def to_json(self) -> dict:
        return dict(self.__dict__)


class SolverAgent(Agent):
    """Listens to every event, solves on ``Closed`` and submits 1 + |A| calls."""

    subscribes = None

    def __init__(self, name: str, actor: int, config: SolverConfig, report_path: Path | None = None):
        super().__init__(name, actor)
        self.config = config
        self.buffer: list[Event] = []
        self.plan: list[Assignment] = []
        self.reports: list[SubmissionReport] = []
        self.report_path = report_path

    def on_events(self, events: list[Event]) -> None:
        for ev in events:
            self.buffer.append(ev)
            if ev.kind == "Setup":
                # verify with exactly the contract's fixed-point scale
                self.config = replace(self.config, precision=ev.payload["precision"])
            elif ev.kind == "Closed":
                self.timer(self.config.solve_ticks, ("solve", ev.cycle))
            elif ev.kind == "CycleFinalized":
                self.buffer = []

    def on_timer(self, tag: Any) -> None:
        _, cycle = tag
        started = time.perf_counter()
        snapshot = snapshot_from_events(self.buffer)
        self.plan = solve(snapshot, self.config)
        elapsed = time.perf_counter() - started
        value = objective(self.plan, snapshot.offers, self.config.objective)
        self.reports.append(SubmissionReport(cycle, self.name, len(self.plan), 0, 0, value, elapsed))
        if self.plan:
            self.call("create_solution", misc=cycle)
        else:
            self._flush()

    def _flush(self) -> None:
        if self.report_path is not None:
            with open(self.report_path, "a") as fh:
                fh.write(json.dumps(self.reports[-1].to_json()) + "\n")

    def on_reply(self, outcome: Outcome) -> None:
        rep = self.reports[-1]
        if outcome.accepted:
            rep.accepted += 1
        else:
            rep.rejected += 1
        if outcome.op.name == "create_solution" and outcome.accepted:
            rep.solution_id = outcome.events[0].payload["id"]
            for a in self.plan:
                self.call("add_assignment", solution_id=rep.solution_id,
                          providing_offer=a.providing_offer, consuming_offer=a.consuming_offer,
                          rtype=a.rtype, quantity=a.quantity, value=a.unit_price)
        if rep.accepted + rep.rejected == rep.planned + 1 or (
                outcome.op.name == "create_solution" and not outcome.accepted):
            self._flush()


def run_solver_agent(sim: "Simulation", name: str, actor: int, config: SolverConfig) -> SolverAgent:
    """Attach a solver agent to a running simulation (via the directory)."""
    sim.directory.lookup(CONTRACT)
    agent = SolverAgent(name, actor, config)
    sim.add_agent(agent)
    return agent


# -- simulation core ---------------------------------------------------------------


@dataclass
class CycleStats:
    cycle: int
    objective: int = 0
    winner: str | None = None
    solution_id: int | None = None
    matched: dict[int, int] = field(default_factory=dict)
    supply: dict[int, int] = field(default_factory=dict)
    demand: dict[int, int] = field(default_factory=dict)
    offers_posted: int = 0
    rejections: dict[str, int] = field(default_factory=dict)
    finalized: list[Assignment] = field(default_factory=list)
    feasible: bool = True

    def to_json(self) -> dict:
        return {
            "cycle": self.cycle,
            "objective": self.objective,
            "winner": self.winner,
            "solution_id": self.solution_id,
            "offers_posted": self.offers_posted,
            "feasible": self.feasible,
            "matched": {str(t): q for t, q in sorted(self.matched.items())},
            "supply": {str(t): q for t, q in sorted(self.supply.items())},
            "demand": {str(t): q for t, q in sorted(self.demand.items())},
            "rejections": dict(sorted(self.rejections.items())),
            "assignments": len(self.finalized),
        }


class Simulation:
    # priorities within a tick: kills first, then the ledger, then deliveries
    _KILL, _LEDGER, _DELIVER = 0, 1, 2

    def __init__(self, seed: int = 0, jitter: int = 0, contract: Contract | None = None,
                 monitor: bool = True, ops_log: JournalWriter | None = None,
                 events_log: JournalWriter | None = None):
        self.rng = random.Random(seed)
        self.jitter = jitter
        self.now = 0
        self.queue: list[tuple[int, int, int, str, Any]] = []
        self._seq = 0
        self.agents: dict[str, Agent] = {}
        self.by_actor: dict[int, Agent] = {}
        self.dead: set[str] = set()
        self.directory = Directory()
        self.contract = contract or Contract()
        self.monitor = Monitor(self.contract, check_progress=monitor) if monitor else None
        self.directory.register(CONTRACT, self.contract)
        self.inbox: deque[tuple[str, Operation]] = deque()
        self._ledger_busy = False
        self._last_ledger_tick = -1
        self._channel_tail: dict[tuple[str, str], int] = {}
        self.ops_log = ops_log
        self.events_log = events_log
        self.outcomes: list[tuple[str, Outcome]] = []
        self.cycles: dict[int, CycleStats] = {}
        self.call_counts: dict[tuple[int, str, int], int] = {}
        self.kill_log: list[tuple[str, int]] = []

    # -- wiring --------------------------------------------------------------

    def add_agent(self, agent: Agent) -> None:
        self.directory.register(agent.name, agent)
        agent.sim = self
        self.agents[agent.name] = agent
        self.by_actor[agent.actor] = agent
        self.schedule(self.now, agent.name, ("start", None))

    def inject_fault(self, name: str, at: int) -> None:
        """Close ``name``'s channel at tick ``at``; nothing it sends is delivered after."""
        if name not in self.agents or name in self.dead:
            raise UnknownAgent(name)
        self._push(at, self._KILL, name, ("kill", None))

    def kill_now(self, name: str) -> None:
        if name not in self.agents or name in self.dead:
            raise UnknownAgent(name)
        self.dead.add(name)
        self.kill_log.append((name, self.now))
        self.inbox = deque((s, op) for s, op in self.inbox if s != name)

    # -- scheduling ------------------------------------------------------------

    def _push(self, tick: int, prio: int, target: str, msg: Any) -> None:
        heapq.heappush(self.queue, (tick, prio, self._seq, target, msg))
        self._seq += 1

    def schedule(self, tick: int, target: str, msg: Any) -> None:
        self._push(max(tick, self.now), self._DELIVER, target, msg)

    def _channel_time(self, src: str, dst: str) -> int:
        t = self.now + 1 + (self.rng.randint(0, self.jitter) if self.jitter else 0)
        t = max(t, self._channel_tail.get((src, dst), 0))
        self._channel_tail[(src, dst)] = t
        return t

    def send_call(self, agent: Agent, op: str, args: dict) -> None:
        if agent.name in self.dead:
            raise ChannelClosed(agent.name)
        self.schedule(self._channel_time(agent.name, CONTRACT), CONTRACT,
                      ("call", (agent.name, op, dict(args))))

    def run(self, until: int | None = None, stop: Callable[[], bool] | None = None) -> None:
        while self.queue:
            tick, prio, _, target, msg = self.queue[0]
            if until is not None and tick > until:
                break
            heapq.heappop(self.queue)
            self.now = tick
            kind, body = msg
            if kind == "kill":
                if target not in self.dead:
                    self.kill_now(target)
            elif kind == "ledger":
                self._ledger_step()
            elif target == CONTRACT:
                sender, op, args = body
                if sender in self.dead:
                    continue
                self.inbox.append((sender, Operation(op, self.agents[sender].actor, 0, args)))
                self._wake_ledger()
            else:
                self._deliver(target, kind, body)
            if stop is not None and stop():
                break

    def _wake_ledger(self) -> None:
        if not self._ledger_busy and self.inbox:
            self._ledger_busy = True
            self._push(max(self.now, self._last_ledger_tick + 1), self._LEDGER, CONTRACT, ("ledger", None))

    def _deliver(self, target: str, kind: str, body: Any) -> None:
        agent = self.agents.get(target)
        if agent is None or target in self.dead:
            return
        if kind == "start":
            agent.on_start()
        elif kind == "reply":
            agent.on_reply(body)
        elif kind == "events":
            agent.on_events(body)
        elif kind == "timer":
            agent.on_timer(body)

    # -- the ledger ------------------------------------------------------------

    def _ledger_step(self) -> None:
        self._ledger_busy = False
        if not self.inbox:
            return
        sender, queued = self.inbox.popleft()
        op = Operation(queued.name, queued.caller, self.now, queued.args)
        self._last_ledger_tick = self.now
        st = self.contract.state
        pre_offers = st.offers
        cycle = st.cycle
        outcome = self.monitor.submit(op) if self.monitor else execute(self.contract, op)
        self.outcomes.append((sender, outcome))
        self._account(outcome, cycle, pre_offers)
        if self.ops_log is not None:
            rec = {"cycle": cycle, "time": op.time, "kind": "op", **op.to_json(),
                   "accepted": outcome.accepted, "error": None if outcome.accepted else outcome.error.value}
            self.ops_log.write(rec)
            if outcome.accepted and op.name == "finalize":
                self.checkpoint()
        if self.events_log is not None:
            for ev in outcome.events:
                rec = ev.to_json()
                rec.pop("seq")
                written = self.events_log.write(rec)
                assert written["seq"] == ev.seq
        if sender in self.agents and sender not in self.dead:
            self.schedule(self._channel_time(CONTRACT, sender), sender, ("reply", outcome))
        if outcome.events:
            for name, agent in self.agents.items():
                if name in self.dead:
                    continue
                if agent.subscribes is None:
                    batch = outcome.events
                else:
                    batch = [e for e in outcome.events if e.kind in agent.subscribes]
                if batch:
                    self.schedule(self._channel_time(CONTRACT, name), name, ("events", batch))
        self._wake_ledger()

    def checkpoint(self) -> None:
        if self.ops_log is not None:
            self.ops_log.write({"cycle": self.contract.state.cycle, "time": self.now,
                                "kind": "checkpoint", "hash": self.contract.state_hash()})

    def _account(self, out: Outcome, cycle: int, pre_offers) -> None:
        stats = self.cycles.setdefault(cycle, CycleStats(cycle))
        op = out.op
        if not out.accepted:
            key = out.error.value
            stats.rejections[key] = stats.rejections.get(key, 0) + 1
            return
        if op.name in ("create_offer", "update_offer", "post_offer"):
            oid = out.events[0].payload["id"]
            k = (cycle, "offer", oid)
            self.call_counts[k] = self.call_counts.get(k, 0) + 1
        elif op.name in ("create_solution", "add_assignment"):
            sid = out.events[0].payload["id"] if op.name == "create_solution" else op.args["solution_id"]
            k = (cycle, "solution", sid)
            self.call_counts[k] = self.call_counts.get(k, 0) + 1
        elif op.name == "finalize":
            posted = [o for o in pre_offers.values() if o.lifecycle.value == "posted"]
            stats.offers_posted = len(posted)
            for o in posted:
                side = stats.supply if o.providing else stats.demand
                for t, q in o.quantities.items():
                    if q > 0:
                        side[t] = side.get(t, 0) + q
            done = out.events[-1].payload
            stats.objective = done["objective"]
            stats.solution_id = done["solution_id"]
            stats.finalized = [
                Assignment(e.payload["providing_offer"], e.payload["consuming_offer"],
                           e.payload["rtype"], e.payload["quantity"], e.payload["unit_price"])
                for e in out.events if e.kind == "AssignmentFinalized"
            ]
            for a in stats.finalized:
                stats.matched[a.rtype] = stats.matched.get(a.rtype, 0) + a.quantity
            if stats.solution_id is not None:
                creator = next((s for s, o in self.outcomes
                                if o.accepted and o.op.name == "create_solution"
                                and o.events[0].cycle == cycle
                                and o.events[0].payload["id"] == stats.solution_id), None)
                stats.winner = creator
            stats.feasible = check_allocation(
                pre_offers, stats.finalized, self.contract.state.constraints,
                self.contract.state.params.precision).feasible

    # -- queries -----------------------------------------------------------------

    def accepted_calls(self, cycle: int, what: str, ident: int) -> int:
        return self.call_counts.get((cycle, what, ident), 0)

    @property
    def properties(self) -> PropertyReport | None:
        return None if self.monitor is None else self.monitor.report


# -- configured runs -------------------------------------------------------------


@dataclass
class SimConfig:
    offers: list[OfferSpec]
    params: ContractParams
    cycles: int = 1
    solvers: list[SolverConfig] = field(default_factory=lambda: [SolverConfig()])
    faults: list[tuple[str, int]] = field(default_factory=list)
    seed: int = 0
    jitter: int = 0
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    out_dir: Path | None = None
    monitor: bool = True
    name: str = "custom"

    def horizon(self) -> int:
        return self.cycles * (self.params.length_receive + self.params.length_solve) + 1

    def validate(self) -> None:
        problems = self.params.problems()
        if problems:
            raise ConfigError("; ".join(problems))
        if self.cycles < 1:
            raise ConfigError("need at least one cycle")
        names = {f"solver-{i}" for i in range(len(self.solvers))}
        for name, tick in self.faults:
            if name not in names:
                raise ConfigError(f"fault plan names unknown agent {name!r}")
            if not 0 <= tick <= self.horizon():
                raise ConfigError(f"kill time {tick} outside run horizon {self.horizon()}")
        for spec in self.offers:
            if not 1 <= spec.cycle <= self.cycles:
                raise ConfigError(f"offer for cycle {spec.cycle} outside 1..{self.cycles}")


@dataclass
class SimulationReport:
    name: str
    seed: int
    cycles: list[CycleStats]
    solver_reports: list[SubmissionReport]
    properties: dict[str, bool]
    final_hash: str
    ticks: int
    operations: int
    kills: list[tuple[str, int]]
    wall_seconds: float

    def total_matched(self) -> int:
        return sum(sum(c.matched.values()) for c in self.cycles)

    def conservation_ok(self) -> bool:
        return all(
            q <= min(c.supply.get(t, 0), c.demand.get(t, 0))
            for c in self.cycles for t, q in c.matched.items()
        )

    def to_json(self) -> dict:
        solve_times = [r.solve_seconds for r in self.solver_reports]
        return {
            "name": self.name,
            "seed": self.seed,
            "final_hash": self.final_hash,
            "ticks": self.ticks,
            "operations": self.operations,
            "kills": [list(k) for k in self.kills],
            "properties": self.properties,
            "totals": {
                "cycles": len(self.cycles),
                "objective": sum(c.objective for c in self.cycles),
                "matched": self.total_matched(),
                "conservation": self.conservation_ok(),
                "solve_seconds_max": max(solve_times, default=0.0),
                "solve_seconds_mean": sum(solve_times) / len(solve_times) if solve_times else 0.0,
            },
            "cycles": [c.to_json() for c in self.cycles],
            "submissions": [r.to_json() for r in self.solver_reports],
        }


def build_simulation(config: SimConfig, ops_log: JournalWriter | None = None,
                     events_log: JournalWriter | None = None,
                     solver_report_path: Path | None = None) -> Simulation:
    config.validate()
    sim = Simulation(seed=config.seed, jitter=config.jitter, monitor=config.monitor,
                     ops_log=ops_log, events_log=events_log)
    director = Director(0, config.params, config.cycles, config.objective, config.constraints)
    sim.add_agent(director)
    by_actor: dict[int, list[OfferSpec]] = {}
    for spec in config.offers:
        by_actor.setdefault(spec.actor, []).append(spec)
    for actor in sorted(by_actor):
        sim.add_agent(ProsumerAgent(f"prosumer-{actor}", 1000 + actor, by_actor[actor]))
    for i, scfg in enumerate(config.solvers):
        # solvers are pre-configured with the market's objective and constraints
        scfg = replace(scfg, objective=config.objective, constraints=config.constraints)
        sim.add_agent(SolverAgent(f"solver-{i}", 100 + i, scfg, solver_report_path))
    for name, tick in config.faults:
        sim.inject_fault(name, tick)
    return sim


def run_simulation(config: SimConfig) -> tuple[SimulationReport, Simulation]:
    started = time.perf_counter()
    config.validate()  # before touching the output directory
    out = config.out_dir
    ops_log = events_log = None
    report_path = None
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            ops_log = JournalWriter.open(out / "ops.jsonl")
            events_log = JournalWriter.open(out / "events.jsonl")
            report_path = out / "solver_reports.jsonl"
            report_path.write_text("")
        except OSError as exc:
            raise HarnessError(f"cannot write to {out}: {exc}") from exc
    sim = build_simulation(config, ops_log, events_log, report_path)
    director: Director = sim.agents[DIRECTOR]
    sim.run(stop=lambda: director.finished >= config.cycles)
    # let the other agents receive the last cycle's events too
    sim.run(until=sim.now + config.jitter + 1)
    sim.checkpoint()
    final_hash = sim.contract.state_hash()
    solver_reports = [r for a in sim.agents.values() if isinstance(a, SolverAgent) for r in a.reports]
    solver_reports.sort(key=lambda r: (r.cycle, r.solver))
    props = {}
    if sim.monitor is not None:
        props = {p: sim.monitor.report.passed(p) for p in sim.monitor.report.violations}
    report = SimulationReport(
        name=config.name,
        seed=config.seed,
        cycles=[sim.cycles[c] for c in sorted(sim.cycles) if c >= 1 and c <= config.cycles],
        solver_reports=solver_reports,
        properties=props,
        final_hash=final_hash,
        ticks=sim.now,
        operations=len(sim.outcomes),
        kills=list(sim.kill_log),
        wall_seconds=time.perf_counter() - started,
    )
    if out is not None:
        ops_log.close()
        events_log.close()
        (out / "report.json").write_text(json.dumps(report.to_json(), indent=1))
        (out / "state.hash").write_text(final_hash + "\n")
    return report, sim


# -- replay -----------------------------------------------------------------------


class ReplayMismatch(CorruptLog):
    pass


def replay(path: Path, monitor: Monitor | None = None) -> Contract:
    """Re-apply a logged operation stream to a fresh contract.

    Every record's outcome and every checkpoint hash must match, and the log
    must end with a checkpoint; the contract state is returned. Pass a
    :class:`Monitor` to evaluate trace properties while replaying.
    """
    contract = monitor.contract if monitor is not None else Contract()
    for line, rec in _replay_records(path):
        problem = _replay_step(contract, monitor, rec)
        if problem:
            raise ReplayMismatch(line, problem)
    return contract


def _replay_records(path: Path):
    last = None
    line = 0
    for line, rec in enumerate(read_journal(Path(path)), start=1):
        if rec.get("kind") not in ("op", "checkpoint"):
            raise CorruptLog(line, f"unexpected record kind {rec.get('kind')!r}")
        last = rec
        yield line, rec
    if last is None:
        raise CorruptLog(0, "empty log")
    if last.get("kind") != "checkpoint":
        raise CorruptLog(line, "log does not end with a checkpoint (truncated?)")


def _replay_step(contract: Contract, monitor: Monitor | None, rec: dict) -> str | None:
    if rec["kind"] == "checkpoint":
        if contract.state_hash() != rec.get("hash"):
            return "state hash mismatch at checkpoint"
        return None
    try:
        op = Operation.from_json(rec, int(rec["time"]))
    except (KeyError, TypeError, ValueError) as exc:
        return f"malformed op record: {exc}"
    out = monitor.submit(op) if monitor is not None else execute(contract, op)
    if out.accepted != rec.get("accepted") or (not out.accepted and out.error.value != rec.get("error")):
        logged = "accepted" if rec.get("accepted") else rec.get("error")
        actual = "accepted" if out.accepted else out.error.value
        return f"{op.name}: log says {logged}, contract says {actual}"
    return None


@dataclass
class VerifyResult:
    report: PropertyReport
    mismatches: list[str]

    @property
    def ok(self) -> bool:
        return self.report.passed() and not self.mismatches

    def lines(self) -> list[str]:
        out = self.report.lines()
        out.append(f"{'LogConsistency':22s} {'PASS' if not self.mismatches else 'FAIL'}"
                   + (f"  ({len(self.mismatches)}: {self.mismatches[0]})" if self.mismatches else ""))
        return out


def verify_log(path: Path) -> VerifyResult:
    """Evaluate every trace property on an ops log.

    Properties are judged twice: on the outcomes the log records, and on a
    re-execution against a fresh contract under a :class:`Monitor`. Where the
    two disagree the log was not produced by a correct contract, which is
    reported as a log-consistency failure. Raises :class:`CorruptLog` if the
    hash chain is broken or the log is truncated.
    """
    monitor = Monitor()
    mismatches: list[str] = []
    ops: list[dict] = []
    for line, rec in _replay_records(path):
        if rec["kind"] == "op":
            ops.append(rec)
        problem = _replay_step(monitor.contract, monitor, rec)
        if problem:
            mismatches.append(f"line {line}: {problem}")
    logged = check_logged_outcomes(ops)
    merged = monitor.report
    for prop, found in logged.violations.items():
        merged.violations[prop].extend(f"(logged) {v}" for v in found)
    return VerifyResult(merged, mismatches)


def read_state_hash(path: Path) -> str:
    return Path(path).read_text().strip()
