"""Runtime trace properties of the contract.

:class:`Monitor` wraps a contract, applies operations and checks after every
step:

- P1  progress: the phase-exit operation is accepted once time advances
- P2  no post/cancel between ``Closed`` and the next ``CycleFinalized``
- P3  ``OfferPosted(id)`` only for a created, unposted offer, by its creator
- P4  ``OfferCanceled(id)`` only for a posted offer, by its poster
- P5  no ``create_solution`` between ``CycleFinalized`` (or start) and ``Closed``
- candidate optimality and from-scratch objective agreement
- finalized allocations are feasible against the offers posted that cycle
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .contract import (
    Contract,
    ContractParams,
    Event,
    Operation,
    Phase,
    Reject,
    Rejection,
)
from .model import Assignment, Lifecycle, check_allocation, objective

PROPERTIES = ("P1", "P2", "P3", "P4", "P5", "CandidateOptimality", "FinalizedFeasibility")

_PROBE_PARAMS = ContractParams(num_types=1, precision=1, max_quantity=1, length_receive=1, length_solve=1)


@dataclass
class Outcome:
    op: Operation
    accepted: bool
    error: Reject | None
    events: list[Event]


@dataclass
class PropertyReport:
    violations: dict[str, list[str]] = field(default_factory=lambda: {p: [] for p in PROPERTIES})
    steps: int = 0

    def fail(self, prop: str, step: int, msg: str) -> None:
        self.violations[prop].append(f"step {step}: {msg}")

    def passed(self, prop: str | None = None) -> bool:
        if prop is None:
            return not any(self.violations.values())
        return not self.violations[prop]

    def failed(self) -> list[str]:
        return [p for p in PROPERTIES if self.violations[p]]

    def lines(self) -> list[str]:
        out = []
        for p in PROPERTIES:
            v = self.violations[p]
            out.append(f"{p:22s} {'PASS' if not v else 'FAIL'}" + (f"  ({len(v)}: {v[0]})" if v else ""))
        return out


def execute(contract: Contract, op: Operation) -> Outcome:
    try:
        return Outcome(op, True, None, contract.apply(op))
    except Rejection as exc:
        return Outcome(op, False, exc.code, [])


def progress_possible(contract: Contract) -> bool:
    """Does the phase-exit transition succeed on a fork once enough time passes?"""
    st = contract.state
    probe = contract.fork()
    try:
        if st.phase is Phase.INIT:
            probe.setup(0, st.now, _PROBE_PARAMS)
        elif st.phase is Phase.RECEIVE:
            probe.close(st.director, max(st.now, st.phase_started_at + st.params.length_receive))
        else:
            probe.finalize(st.director, max(st.now, st.phase_started_at + st.params.length_solve))
    except Rejection:
        return False
    except Exception:  # a broken contract may fail in other ways; that is still no progress
        return False
    return True


class Monitor:
    def __init__(self, contract: Contract | None = None, check_progress: bool = True):
        self.contract = contract or Contract()
        self.report = PropertyReport()
        self.check_progress = check_progress
        self._solving = False  # between Closed and CycleFinalized
        self._creator: dict[int, int] = {}
        self._posted: dict[int, int] = {}
        self._canceled: set[int] = set()
        self.finalized: list[tuple[int, list[Assignment]]] = []

    def submit(self, op: Operation) -> Outcome:
        contract = self.contract
        pre_offers = contract.state.offers
        pre_constraints = contract.state.constraints
        pre_params = contract.state.params
        out = execute(contract, op)
        self._observe(out, pre_offers, pre_constraints, pre_params)
        return out

    def _observe(self, out: Outcome, pre_offers, pre_constraints, pre_params) -> None:
        rep = self.report
        step = rep.steps
        rep.steps += 1
        op = out.op

        if op.name in ("post_offer", "cancel_offer") and self._solving:
            if out.accepted or out.error is not Reject.WRONG_PHASE:
                rep.fail("P2", step, f"{op.name} after Closed -> {'accepted' if out.accepted else out.error.value}")
        if op.name == "create_solution" and not self._solving and out.accepted:
            rep.fail("P5", step, "create_solution accepted outside the solving phase")

        finalized: list[Assignment] = []
        for ev in out.events:
            p = ev.payload
            if ev.kind == "OfferCreated":
                self._creator[p["id"]] = op.caller
            elif ev.kind == "OfferPosted":
                oid = p["id"]
                if oid not in self._creator or oid in self._posted or self._creator[oid] != op.caller:
                    rep.fail("P3", step, f"OfferPosted({oid}) by {op.caller}")
                self._posted[oid] = op.caller
            elif ev.kind == "OfferCanceled":
                oid = p["id"]
                if oid not in self._posted or oid in self._canceled or self._posted[oid] != op.caller:
                    rep.fail("P4", step, f"OfferCanceled({oid}) by {op.caller}")
                self._canceled.add(oid)
            elif ev.kind == "Closed":
                self._solving = True
            elif ev.kind == "AssignmentFinalized":
                finalized.append(Assignment(p["providing_offer"], p["consuming_offer"], p["rtype"],
                                            p["quantity"], p["unit_price"]))
            elif ev.kind == "CycleFinalized":
                self._solving = False
                self._creator.clear()
                self._posted.clear()
                self._canceled.clear()
                self._check_finalized(step, ev, finalized, pre_offers, pre_constraints, pre_params)

        if out.accepted and op.name == "add_assignment":
            self._check_candidate(step, op.args["solution_id"])
        if self.check_progress and not progress_possible(self.contract):
            rep.fail("P1", step, f"no progress possible from phase {self.contract.state.phase.value}")

    def _check_candidate(self, step: int, touched: int) -> None:
        st = self.contract.state
        best = max((s.objective_value for s in st.solutions.values()), default=0)
        if self.contract.candidate_objective() != max(best, 0):
            self.report.fail("CandidateOptimality", step,
                             f"candidate objective {self.contract.candidate_objective()} != max {best}")
        sol = st.solutions.get(touched)
        if sol is not None:
            recomputed = objective(sol.assignments, st.offers, st.objective_spec)
            if recomputed != sol.objective_value:
                self.report.fail("CandidateOptimality", step,
                                 f"solution {touched} stores {sol.objective_value}, recomputed {recomputed}")

    def _check_finalized(self, step, ev, alloc, offers, constraints, params) -> None:
        self.finalized.append((ev.cycle, alloc))
        precision = params.precision if params else 1
        verdict = check_allocation(offers, alloc, constraints, precision)
        stale = [a for a in alloc
                 if offers.get(a.providing_offer) is None or offers.get(a.consuming_offer) is None
                 or offers[a.providing_offer].lifecycle is not Lifecycle.POSTED
                 or offers[a.consuming_offer].lifecycle is not Lifecycle.POSTED]
        if not verdict.feasible or stale:
            tags = sorted(t.value for t in verdict.tags())
            self.report.fail("FinalizedFeasibility", step,
                             f"cycle {ev.cycle}: violations {tags}, unposted refs {len(stale)}")
        elif ev.payload["objective"] != objective(alloc, offers, self.contract.state.objective_spec):
            self.report.fail("FinalizedFeasibility", step, f"cycle {ev.cycle}: reported objective mismatch")


def check_logged_outcomes(records) -> PropertyReport:
    """Judge P2-P5 on the outcomes a log *claims*, without re-executing anything.

    ``records`` are op records (``op``, ``caller``, ``accepted``, arguments).
    Offer ids are reconstructed the way the contract assigns them: sequentially
    per cycle, starting again at 0 after every finalization.
    """
    rep = PropertyReport()
    solving = False
    creator: dict[int, int] = {}
    poster: dict[int, int] = {}
    canceled: set[int] = set()
    for step, rec in enumerate(records):
        rep.steps += 1
        if not rec.get("accepted"):
            continue
        name, caller = rec.get("op"), rec.get("caller")
        oid = rec.get("id")
        if name == "create_offer":
            creator[len(creator)] = caller
        elif name == "post_offer":
            if solving:
                rep.fail("P2", step, f"post_offer({oid}) accepted after Closed")
            if oid not in creator or oid in poster or creator[oid] != caller:
                rep.fail("P3", step, f"post_offer({oid}) accepted for caller {caller}")
            poster[oid] = caller
        elif name == "cancel_offer":
            if solving:
                rep.fail("P2", step, f"cancel_offer({oid}) accepted after Closed")
            if oid not in poster or oid in canceled or poster[oid] != caller:
                rep.fail("P4", step, f"cancel_offer({oid}) accepted for caller {caller}")
            canceled.add(oid)
        elif name == "create_solution" and not solving:
            rep.fail("P5", step, "create_solution accepted outside the solving phase")
        elif name == "close":
            solving = True
        elif name == "finalize":
            solving = False
            creator, poster, canceled = {}, {}, set()
    return rep
