"""Randomised operation sequences against the contract.

Sequences are generated against a shadow contract so that ids and timings are
plausible, then replayed against the contract under test (possibly a broken
variant) inside a :class:`~transactive.properties.Monitor`. Each step checks:

- atomicity: a rejected call leaves the canonical state hash unchanged
- every trace property the monitor tracks
- every accepted solution and every finalized allocation is feasible under the
  exact rational oracle

The first failing sequence is shrunk by dropping operations while the failure
persists and can be written to disk as a reproducer.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .contract import Contract, ContractParams, Operation, setup_operation
from .model import UINT64_MAX, ConstraintSet, Lifecycle, ObjectiveKind, ObjectiveSpec
from .oracle import exact_problems
from .properties import Monitor, execute

DIRECTOR = 0
PROSUMERS = (1, 2, 3, 4, 5)
SOLVERS = (50, 51, 52)

# add_assignment mutations; each aims at one check of the verifier
MUTATIONS = (
    "none", "over_capacity", "below_provider", "above_consumer", "below_bound", "above_bound",
    "pair", "system_limit", "unposted", "wrong_side", "type_missing", "zero_quantity",
    "not_creator", "unknown_solution",
)


@dataclass
class FuzzConfig:
    seed: int = 0
    iterations: int = 1000
    max_cycles: int = 3
    noise: float = 0.2  # chance of an invalid call between regular ones
    check_progress: bool = True
    only_assignments: bool = False  # short single-cycle sequences focused on add_assignment


@dataclass
class FuzzStats:
    sequences: int = 0
    operations: int = 0
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    mutations: Counter = field(default_factory=Counter)
    finalized_cycles: int = 0
    finalized_assignments: int = 0
    accepted_assignments: int = 0

    def lines(self) -> list[str]:
        out = [
            f"sequences              {self.sequences}",
            f"operations             {self.operations}",
            f"accepted               {self.accepted}",
            f"rejected               {sum(self.rejected.values())}",
            f"accepted assignments   {self.accepted_assignments}",
            f"finalized cycles       {self.finalized_cycles}",
            f"finalized assignments  {self.finalized_assignments}",
        ]
        out += [f"  reject {k:30s} {v}" for k, v in sorted(self.rejected.items())]
        return out


@dataclass
class Counterexample:
    seed: int
    iteration: int
    message: str
    ops: list[Operation]

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "iteration": self.iteration,
            "message": self.message,
            "ops": [{"time": op.time, **op.to_json()} for op in self.ops],
        }

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=1) + "\n")
        return path


def load_reproducer(path: Path) -> Counterexample:
    data = json.loads(Path(path).read_text())
    ops = [Operation.from_json(r, int(r["time"])) for r in data["ops"]]
    return Counterexample(int(data["seed"]), int(data["iteration"]), data["message"], ops)


# -- generation -------------------------------------------------------------


class _Builder:
    def __init__(self, rng: random.Random, config: FuzzConfig):
        self.rng = rng
        self.config = config
        self.shadow = Contract()
        self.ops: list[Operation] = []
        self.now = 0
        self.mutations: Counter = Counter()

    def emit(self, name: str, caller: int, **args) -> bool:
        op = Operation(name, caller, self.now, args)
        self.ops.append(op)
        return execute(self.shadow, op).accepted

    def tick(self, hi: int = 2) -> None:
        self.now += self.rng.randint(0, hi)

    def maybe_noise(self) -> None:
        if self.rng.random() < self.config.noise:
            self.noise()

    def noise(self) -> None:
        rng, st = self.rng, self.shadow.state
        ids = list(st.offers) + [len(st.offers), 10**6]
        who = rng.choice(PROSUMERS + SOLVERS + (DIRECTOR,))
        choice = rng.randrange(9)
        if choice == 0:
            self.emit("post_offer", who, id=rng.choice(ids))
        elif choice == 1:
            self.emit("cancel_offer", who, id=rng.choice(ids))
        elif choice == 2:
            self.emit("create_solution", who, misc=rng.randrange(4))
        elif choice == 3:
            self.emit("finalize", rng.choice([DIRECTOR, who]))
        elif choice == 4:
            self.emit("close", rng.choice([DIRECTOR, who]))
        elif choice == 5:
            self.emit("update_offer", who, id=rng.choice(ids), rtype=rng.randrange(4),
                      quantity=rng.randint(-1, 3), value=rng.randint(0, 9))
        elif choice == 6:
            saved, self.now = self.now, max(self.now - rng.randint(1, 3), 0)
            self.emit("close", DIRECTOR)
            self.now = saved
        elif choice == 7:
            self.emit("frobnicate", who)
        else:
            self.emit("create_offer", who, providing=rng.random() < 0.5)

    # -- one full sequence ----------------------------------------------

    def build(self) -> list[Operation]:
        rng = self.rng
        if rng.random() < 0.2:
            bad = ContractParams(num_types=rng.randint(0, 2), precision=rng.choice([0, 1, 10]),
                                 max_quantity=rng.choice([0, 2**62]), length_receive=1, length_solve=1)
            self.ops.append(setup_operation(DIRECTOR, self.now, bad))
            execute(self.shadow, self.ops[-1])
        self.types = rng.sample([1, 2, 3, 7, 2**63 + 5, UINT64_MAX], rng.randint(1, 4))
        params = ContractParams(
            num_types=rng.randint(1, len(self.types)),
            precision=rng.choice([1, 3, 7, 100, 10**6]),
            max_quantity=rng.randint(1, 8),
            length_receive=rng.randint(1, 6),
            length_solve=rng.randint(1, 6),
        )
        op = setup_operation(DIRECTOR, self.now, params, self._objective(), self._constraints(),
                             any_caller=rng.random() < 0.2)
        self.ops.append(op)
        execute(self.shadow, op)
        cycles = 1 if self.config.only_assignments else rng.randint(1, self.config.max_cycles)
        for _ in range(cycles):
            self.receive_phase()
            self.solve_phase()
        if rng.random() < 0.3:
            self.receive_phase()  # end mid-cycle, too
        return self.ops

    def _objective(self) -> ObjectiveSpec:
        rng = self.rng
        kind = rng.choice(list(ObjectiveKind))
        if kind is ObjectiveKind.WEIGHTED_QUANTITY:
            weights = {t: rng.randint(0, 5) for t in self.types if rng.random() < 0.85}
            return ObjectiveSpec(kind, weights)
        return ObjectiveSpec(kind)

    def _constraints(self) -> ConstraintSet:
        rng = self.rng
        price_min, price_max, pairwise, limits = {}, {}, {}, {}
        for t in self.types:
            if rng.random() < 0.3:
                price_min[t] = rng.randint(0, 6)
            if rng.random() < 0.3:
                price_max[t] = price_min.get(t, 0) + rng.randint(0, 8)
            if rng.random() < 0.3:
                pairwise[t] = frozenset((p, c) for p in PROSUMERS for c in PROSUMERS if rng.random() < 0.5)
            if rng.random() < 0.3:
                limits[t] = rng.randint(0, 10)
        return ConstraintSet(price_min, price_max, pairwise, limits)

    def receive_phase(self) -> None:
        rng, st = self.rng, self.shadow.state
        if st.params is None:
            return
        for _ in range(rng.randint(0, 8)):
            owner = rng.choice(PROSUMERS)
            oid = len(st.offers)
            providing = rng.random() < 0.5
            self.tick()
            self.maybe_noise()
            if not self.emit("create_offer", owner, providing=providing, misc=rng.randrange(3)):
                continue
            width = st.params.num_types + (1 if rng.random() < 0.1 else 0)
            for t in rng.sample(self.types, rng.randint(1, min(width, len(self.types)))):
                q = rng.randint(1, st.params.max_quantity) if rng.random() < 0.9 else rng.choice(
                    [0, st.params.max_quantity + 1])
                # providers tend to ask less than consumers bid, so many pairs can trade
                value = rng.randint(0, 7) if providing else rng.randint(4, 12)
                self.emit("update_offer", owner, id=oid, rtype=t, quantity=q, value=value)
            self.maybe_noise()
            caller = owner if rng.random() < 0.9 else rng.choice(PROSUMERS)
            self.emit("post_offer", caller, id=oid)
        for oid, o in list(st.offers.items()):
            if o.lifecycle is Lifecycle.POSTED and rng.random() < 0.15:
                self.emit("cancel_offer", o.owner if rng.random() < 0.8 else rng.choice(PROSUMERS), id=oid)
        self.maybe_noise()
        if rng.random() < 0.3:
            self.emit("close", DIRECTOR)  # possibly too early
        self.now = max(self.now, st.phase_started_at + st.params.length_receive)
        self.tick()
        self.emit("close", DIRECTOR)

    def solve_phase(self) -> None:
        rng, st = self.rng, self.shadow.state
        if st.params is None or st.phase.value != "Solve":
            return
        for _ in range(rng.randint(0, 2)):
            self.tick(1)
            self.noise()  # everything from Receive must now be refused
        for _ in range(rng.randint(0, 3)):
            solver = rng.choice(SOLVERS)
            sid = len(st.solutions)
            self.tick(1)
            if not self.emit("create_solution", solver, misc=rng.randrange(3)):
                continue
            for _ in range(rng.randint(0, 8)):
                self.tick(1)
                self.add_assignment(solver, sid)
        self.maybe_noise()
        if rng.random() < 0.3:
            self.emit("finalize", DIRECTOR)
        self.now = max(self.now, st.phase_started_at + st.params.length_solve)
        self.tick()
        self.emit("finalize", DIRECTOR)

    def add_assignment(self, solver: int, sid: int) -> None:
        rng, st = self.rng, self.shadow.state
        posted = [o for o in st.offers.values() if o.lifecycle is Lifecycle.POSTED]
        provs = [o for o in posted if o.providing]
        conss = [o for o in posted if not o.providing]
        pairs = [(p, c, t) for p in provs for c in conss for t in p.offered_types() if c.quantities.get(t, 0) > 0]
        mutation = "none" if rng.random() < 0.45 else rng.choice(MUTATIONS[1:])
        if pairs:
            p, c, t = rng.choice(pairs)
            pid, cid = p.offer_id, c.offer_id
            q = rng.randint(1, min(p.quantities[t], c.quantities[t]))
            lo, hi = st.constraints.price_interval(t, p.prices[t], c.prices[t])
            price = rng.randint(lo, hi) if lo <= hi else rng.randint(0, 12)
        else:
            pid = cid = rng.randrange(max(len(st.offers), 1))
            t, q, price = rng.choice(self.types), 1, rng.randint(0, 12)
            p = c = None
        caller = solver
        cs = st.constraints
        if mutation == "over_capacity":
            offered = p.quantities[t] if p else 1
            q = rng.choice([offered + 1, offered * 2, st.params.max_quantity + 1, rng.randint(1, offered)])
        elif mutation == "below_provider" and p:
            price = p.prices[t] - 1
        elif mutation == "above_consumer" and c:
            price = c.prices[t] + 1
        elif mutation == "below_bound" and t in cs.price_min:
            price = cs.price_min[t] - 1
        elif mutation == "above_bound" and t in cs.price_max:
            price = cs.price_max[t] + 1
        elif mutation == "pair" and p and t in cs.pairwise:
            banned = [(pp, cc, tt) for pp, cc, tt in pairs if tt == t and (pp.owner, cc.owner) not in cs.pairwise[t]]
            if banned:
                p, c, t = rng.choice(banned)
                pid, cid = p.offer_id, c.offer_id
        elif mutation == "system_limit" and t in cs.system_limit:
            q = cs.system_limit[t] + 1
        elif mutation == "unposted":
            others = [o.offer_id for o in st.offers.values() if o.lifecycle is not Lifecycle.POSTED]
            if others:
                pid = rng.choice(others)
        elif mutation == "wrong_side":
            pid, cid = cid, pid
        elif mutation == "type_missing":
            t = rng.choice([x for x in (0, 4, 5) if x not in self.types])
        elif mutation == "zero_quantity":
            q = rng.choice([0, -1])
        elif mutation == "not_creator":
            caller = rng.choice([s for s in SOLVERS if s != solver])
        elif mutation == "unknown_solution":
            sid = len(st.solutions) + rng.randint(0, 3)
        self.mutations[mutation] += 1
        self.emit("add_assignment", caller, solution_id=sid, providing_offer=pid, consuming_offer=cid,
                  rtype=t, quantity=q, value=max(price, 0))


def generate_sequence(seed: int, iteration: int, config: FuzzConfig | None = None) -> tuple[list[Operation], Counter]:
    config = config or FuzzConfig(seed=seed)
    builder = _Builder(random.Random(f"{seed}:{iteration}"), config)
    return builder.build(), builder.mutations


# -- checking ---------------------------------------------------------------


@dataclass
class SequenceResult:
    failure: str | None
    monitor: Monitor
    accepted: int = 0
    rejected: Counter = field(default_factory=Counter)
    accepted_assignments: int = 0


def check_sequence(ops: Sequence[Operation], contract_factory: Callable[[], Contract] = Contract,
                   check_progress: bool = True) -> SequenceResult:
    monitor = Monitor(contract_factory(), check_progress=check_progress)
    contract = monitor.contract
    result = SequenceResult(None, monitor)
    for step, op in enumerate(ops):
        before = contract.state_hash()
        pre_offers = contract.state.offers
        pre_constraints = contract.state.constraints
        try:
            out = monitor.submit(op)
        except Exception as exc:  # a broken contract can crash; that is a finding too
            result.failure = f"step {step}: {op.name} raised {type(exc).__name__}: {exc}"
            return result
        if out.accepted:
            result.accepted += 1
        else:
            result.rejected[out.error.value] += 1
            if contract.state_hash() != before:
                result.failure = f"step {step}: rejected {op.name} ({out.error.value}) changed the state"
                return result
        if out.accepted and op.name == "add_assignment":
            result.accepted_assignments += 1
            sol = contract.state.solutions.get(op.args["solution_id"])
            if sol is not None:
                problems = exact_problems(contract.state.offers, sol.assignments, contract.state.constraints)
                if problems:
                    result.failure = f"step {step}: accepted solution infeasible: {problems[0]}"
                    return result
        if out.accepted and op.name == "finalize":
            alloc = monitor.finalized[-1][1] if monitor.finalized else []
            problems = exact_problems(pre_offers, alloc, pre_constraints)
            if problems:
                result.failure = f"step {step}: finalized allocation infeasible: {problems[0]}"
                return result
        failed = monitor.report.failed()
        if failed:
            prop = failed[0]
            result.failure = f"step {step}: property {prop} violated: {monitor.report.violations[prop][0]}"
            return result
    return result


def shrink(ops: list[Operation], fails: Callable[[list[Operation]], bool]) -> list[Operation]:
    """Drop chunks, then single operations, while ``fails`` still holds."""
    current = list(ops)
    chunk = max(len(current) // 2, 1)
    while chunk >= 1:
        i = 0
        while i < len(current):
            trial = current[:i] + current[i + chunk:]
            if trial and fails(trial):
                current = trial
            else:
                i += chunk
        chunk //= 2
    return current


def run_fuzz(config: FuzzConfig, contract_factory: Callable[[], Contract] = Contract,
             minimize: bool = True) -> tuple[FuzzStats, Counterexample | None]:
    stats = FuzzStats()
    for it in range(config.iterations):
        ops, mutations = generate_sequence(config.seed, it, config)
        stats.mutations.update(mutations)
        res = check_sequence(ops, contract_factory, config.check_progress)
        stats.sequences += 1
        stats.operations += len(ops)
        stats.accepted += res.accepted
        stats.rejected.update(res.rejected)
        stats.accepted_assignments += res.accepted_assignments
        stats.finalized_cycles += len(res.monitor.finalized)
        stats.finalized_assignments += sum(len(a) for _, a in res.monitor.finalized)
        if res.failure is not None:
            if minimize:
                ops = shrink(ops, lambda trial: check_sequence(
                    trial, contract_factory, config.check_progress).failure is not None)
                message = check_sequence(ops, contract_factory, config.check_progress).failure
            else:
                message = res.failure
            return stats, Counterexample(config.seed, it, message, ops)
    return stats, None
