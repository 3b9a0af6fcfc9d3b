"""Deterministic emulation of the allocation-verifying contract.

The contract is a three-state transition system (Init, Receive, Solve). Every
operation takes the caller and the logical time, validates all guards first and
only then mutates state, so a rejection leaves the state untouched. Operations
return the events they emitted; rejections raise :class:`Rejection`.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .model import (
    Assignment,
    ConstraintSet,
    Lifecycle,
    MissingWeight,
    ObjectiveSpec,
    Offer,
    Side,
)

INT63 = 2**63


class Phase(enum.Enum):
    INIT = "Init"
    RECEIVE = "Receive"
    SOLVE = "Solve"


class Reject(enum.Enum):
    WRONG_PHASE = "WrongPhase"
    BAD_PARAMS = "BadParams"
    TOO_EARLY = "TooEarly"
    CLOCK_REGRESSION = "ClockRegression"
    UNKNOWN_OFFER = "UnknownOffer"
    NOT_OWNER = "NotOwner"
    ALREADY_POSTED = "AlreadyPosted"
    NOT_POSTED = "NotPosted"
    QUANTITY_TOO_LARGE = "QuantityTooLarge"
    TOO_MANY_TYPES = "TooManyTypes"
    EMPTY_OFFER = "EmptyOffer"
    UNKNOWN_SOLUTION = "UnknownSolution"
    NOT_CREATOR = "NotCreator"
    OFFER_NOT_POSTED = "OfferNotPosted"
    WRONG_SIDE = "WrongSide"
    TYPE_NOT_OFFERED = "TypeNotOffered"
    BAD_QUANTITY = "BadQuantity"
    CAPACITY_EXCEEDED = "CapacityExceeded"
    PRICE_BELOW_PROVIDER = "PriceBelowProviderReservation"
    PRICE_ABOVE_CONSUMER = "PriceAboveConsumerReservation"
    PRICE_OUT_OF_BOUNDS = "PriceOutOfBounds"
    PAIR_NOT_ALLOWED = "PairNotAllowed"
    SYSTEM_LIMIT_EXCEEDED = "SystemLimitExceeded"
    MISSING_WEIGHT = "MissingWeight"
    UNKNOWN_OPERATION = "UnknownOperation"
    NOT_DIRECTOR = "NotDirector"


class Rejection(Exception):
    def __init__(self, code: Reject, detail: str = ""):
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
        self.code = code


@dataclass(frozen=True)
class ContractParams:
    num_types: int
    precision: int
    max_quantity: int
    length_receive: int
    length_solve: int

    def problems(self) -> list[str]:
        out = []
        if self.num_types < 1:
            out.append("num_types must be >= 1")
        if self.precision < 1:
            out.append("precision must be >= 1")
        if self.max_quantity < 1:
            out.append("max_quantity must be >= 1")
        if self.precision * self.max_quantity >= INT63:
            out.append("precision * max_quantity must be < 2**63")
        if self.length_receive < 1 or self.length_solve < 1:
            out.append("phase lengths must be >= 1")
        return out

    def to_json(self) -> dict:
        return {
            "num_types": self.num_types,
            "precision": self.precision,
            "max_quantity": self.max_quantity,
            "length_receive": self.length_receive,
            "length_solve": self.length_solve,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ContractParams":
        return cls(**{k: int(data[k]) for k in cls.__dataclass_fields__})


@dataclass
class Solution:
    solution_id: int
    creator: int
    misc: int = 0
    assignments: list[Assignment] = field(default_factory=list)
    objective_value: int = 0
    provider_usage: dict[int, int] = field(default_factory=dict)
    consumer_usage: dict[int, int] = field(default_factory=dict)
    per_type_total: dict[int, int] = field(default_factory=dict)


@dataclass(frozen=True)
class Event:
    seq: int
    cycle: int
    time: int
    kind: str
    payload: dict[str, Any]

    def to_json(self) -> dict:
        out: dict[str, Any] = {"seq": self.seq, "cycle": self.cycle, "time": self.time, "kind": self.kind}
        out.update(encode_fields(self.payload))
        return out


@dataclass
class ContractState:
    params: ContractParams | None = None
    phase: Phase = Phase.INIT
    phase_started_at: int = 0
    cycle: int = 0
    offers: dict[int, Offer] = field(default_factory=dict)
    solutions: dict[int, Solution] = field(default_factory=dict)
    candidate: int | None = None
    now: int = 0
    event_seq: int = 0
    event_digest: str = hashlib.sha256(b"").hexdigest()
    objective_spec: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    director: int | None = None  # the only caller allowed to close/finalize
    any_caller: bool = False  # lift that restriction; the time guards still apply


# Payload fields carrying opaque 64-bit values are written as decimal strings so
# JSON consumers limited to 2**53 do not lose precision.
WIDE_FIELDS = frozenset({"rtype", "quantity", "value", "misc", "unit_price"})


def encode_fields(fields: dict[str, Any]) -> dict[str, Any]:
    return {k: str(v) if k in WIDE_FIELDS and isinstance(v, int) and not isinstance(v, bool) else v
            for k, v in fields.items()}


def decode_fields(fields: dict[str, Any]) -> dict[str, Any]:
    return {k: int(v) if k in WIDE_FIELDS and isinstance(v, str) else v for k, v in fields.items()}


def assignment_fields(a: Assignment) -> dict[str, int]:
    return {
        "providing_offer": a.providing_offer,
        "consuming_offer": a.consuming_offer,
        "rtype": a.rtype,
        "quantity": a.quantity,
        "unit_price": a.unit_price,
    }


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Contract:
    """The verifier contract. ``events`` is the append-only event log."""

    def __init__(self, sink: list[Event] | None = None):
        self.state = ContractState()
        self.events: list[Event] = [] if sink is None else sink
        self._chain_events = True

    # -- plumbing ---------------------------------------------------------

    def fork(self) -> "Contract":
        """Cheap copy for probing: shares tables, discards emitted events.

        Sound because transitions only ever rebind the offer/solution tables of
        a fresh state or mutate entries that the probe operations never touch.
        A fork does not maintain the event digest.
        """
        other = type(self)(sink=[])
        other.state = replace(self.state)
        other._chain_events = False
        return other

    def _emit(self, now: int, kind: str, **payload) -> Event:
        st = self.state
        ev = Event(st.event_seq, st.cycle, now, kind, payload)
        st.event_seq += 1
        if self._chain_events:
            st.event_digest = hashlib.sha256(
                (st.event_digest + canonical_json(ev.to_json())).encode()
            ).hexdigest()
        self.events.append(ev)
        return ev

    def _begin(self, now: int, *phases: Phase) -> None:
        if now < self.state.now:
            raise Rejection(Reject.CLOCK_REGRESSION, f"{now} < {self.state.now}")
        if self.state.phase not in phases:
            raise Rejection(Reject.WRONG_PHASE, self.state.phase.value)

    def _offer(self, offer_id: int) -> Offer:
        offer = self.state.offers.get(offer_id)
        if offer is None:
            raise Rejection(Reject.UNKNOWN_OFFER, str(offer_id))
        return offer

    def _owned_offer(self, caller: int, offer_id: int) -> Offer:
        offer = self._offer(offer_id)
        if offer.owner != caller:
            raise Rejection(Reject.NOT_OWNER, str(offer_id))
        return offer

    # -- Init --------------------------------------------------------------

    def setup(self, caller: int, now: int, params: ContractParams,
              objective_spec: ObjectiveSpec | None = None,
              constraints: ConstraintSet | None = None, any_caller: bool = False) -> list[Event]:
        self._begin(now, Phase.INIT)
        problems = params.problems()
        if problems:
            raise Rejection(Reject.BAD_PARAMS, "; ".join(problems))
        st = self.state
        st.params = params
        st.objective_spec = objective_spec or ObjectiveSpec()
        st.constraints = constraints or ConstraintSet()
        st.director = caller
        st.any_caller = bool(any_caller)
        st.phase = Phase.RECEIVE
        st.phase_started_at = now
        st.cycle = 1
        st.now = now
        return [self._emit(now, "Setup", **params.to_json())]

    # -- Receive -----------------------------------------------------------

    def create_offer(self, caller: int, now: int, providing: bool, misc: int = 0) -> list[Event]:
        self._begin(now, Phase.RECEIVE)
        st = self.state
        offer_id = len(st.offers)
        st.offers[offer_id] = Offer(
            offer_id=offer_id,
            owner=caller,
            side=Side.PROVIDING if providing else Side.CONSUMING,
            misc=misc,
        )
        st.now = now
        return [self._emit(now, "OfferCreated", id=offer_id, owner=caller,
                           providing=bool(providing), misc=misc)]

    def update_offer(self, caller: int, now: int, id: int, rtype: int,
                     quantity: int, value: int) -> list[Event]:
        self._begin(now, Phase.RECEIVE)
        offer = self._owned_offer(caller, id)
        if offer.lifecycle is not Lifecycle.CREATED:
            raise Rejection(Reject.ALREADY_POSTED, str(id))
        if quantity < 0 or value < 0:
            raise Rejection(Reject.BAD_QUANTITY, "negative quantity or value")
        params = self.state.params
        if quantity > params.max_quantity:
            raise Rejection(Reject.QUANTITY_TOO_LARGE, f"{quantity} > {params.max_quantity}")
        if rtype not in offer.quantities and len(offer.quantities) >= params.num_types:
            raise Rejection(Reject.TOO_MANY_TYPES, f"limit {params.num_types}")
        offer.quantities[rtype] = quantity
        offer.prices[rtype] = value
        self.state.now = now
        return [self._emit(now, "OfferUpdated", id=id, rtype=rtype, quantity=quantity, value=value)]

    def post_offer(self, caller: int, now: int, id: int) -> list[Event]:
        self._begin(now, Phase.RECEIVE)
        offer = self._owned_offer(caller, id)
        if offer.lifecycle is not Lifecycle.CREATED:
            raise Rejection(Reject.ALREADY_POSTED, str(id))
        if not any(q > 0 for q in offer.quantities.values()):
            raise Rejection(Reject.EMPTY_OFFER, str(id))
        offer.lifecycle = Lifecycle.POSTED
        self.state.now = now
        return [self._emit(now, "OfferPosted", id=id)]

    def cancel_offer(self, caller: int, now: int, id: int) -> list[Event]:
        self._begin(now, Phase.RECEIVE)
        offer = self._owned_offer(caller, id)
        if offer.lifecycle is not Lifecycle.POSTED:
            raise Rejection(Reject.NOT_POSTED, str(id))
        offer.lifecycle = Lifecycle.CANCELED
        self.state.now = now
        return [self._emit(now, "OfferCanceled", id=id)]

    def _check_director(self, caller: int) -> None:
        st = self.state
        if not st.any_caller and caller != st.director:
            raise Rejection(Reject.NOT_DIRECTOR, str(caller))

    def close(self, caller: int, now: int) -> list[Event]:
        self._begin(now, Phase.RECEIVE)
        self._check_director(caller)
        st = self.state
        if now < st.phase_started_at + st.params.length_receive:
            raise Rejection(Reject.TOO_EARLY, f"offering phase ends at {st.phase_started_at + st.params.length_receive}")
        st.phase = Phase.SOLVE
        st.phase_started_at = now
        st.now = now
        return [self._emit(now, "Closed")]

    # -- Solve -------------------------------------------------------------

    def create_solution(self, caller: int, now: int, misc: int = 0) -> list[Event]:
        self._begin(now, Phase.SOLVE)
        st = self.state
        solution_id = len(st.solutions)
        st.solutions[solution_id] = Solution(solution_id, caller, misc)
        st.now = now
        return [self._emit(now, "SolutionCreated", id=solution_id, creator=caller, misc=misc)]

    def add_assignment(self, caller: int, now: int, solution_id: int, providing_offer: int,
                       consuming_offer: int, rtype: int, quantity: int, value: int) -> list[Event]:
        self._begin(now, Phase.SOLVE)
        st = self.state
        sol = st.solutions.get(solution_id)
        if sol is None:
            raise Rejection(Reject.UNKNOWN_SOLUTION, str(solution_id))
        if sol.creator != caller:
            raise Rejection(Reject.NOT_CREATOR, str(solution_id))
        prov = self._offer(providing_offer)
        cons = self._offer(consuming_offer)
        if prov.lifecycle is not Lifecycle.POSTED or cons.lifecycle is not Lifecycle.POSTED:
            raise Rejection(Reject.OFFER_NOT_POSTED)
        if not prov.providing or cons.providing:
            raise Rejection(Reject.WRONG_SIDE)
        if quantity < 1:
            raise Rejection(Reject.BAD_QUANTITY, "quantity must be >= 1")
        p_offered = prov.quantities.get(rtype, 0)
        c_offered = cons.quantities.get(rtype, 0)
        if p_offered <= 0 or c_offered <= 0:
            raise Rejection(Reject.TYPE_NOT_OFFERED, str(rtype))

        precision = st.params.precision
        # quantity <= max_quantity keeps quantity * precision below 2**63
        if quantity > st.params.max_quantity:
            raise Rejection(Reject.CAPACITY_EXCEEDED, "quantity above max_quantity")
        p_use = sol.provider_usage.get(providing_offer, 0) + -(-quantity * precision // p_offered)
        c_use = sol.consumer_usage.get(consuming_offer, 0) + -(-quantity * precision // c_offered)
        if p_use > precision or c_use > precision:
            raise Rejection(Reject.CAPACITY_EXCEEDED)

        if value < prov.prices[rtype]:
            raise Rejection(Reject.PRICE_BELOW_PROVIDER)
        if value > cons.prices[rtype]:
            raise Rejection(Reject.PRICE_ABOVE_CONSUMER)
        cs = st.constraints
        lo, hi = cs.price_min.get(rtype), cs.price_max.get(rtype)
        if (lo is not None and value < lo) or (hi is not None and value > hi):
            raise Rejection(Reject.PRICE_OUT_OF_BOUNDS)
        if not cs.pair_allowed(rtype, prov.owner, cons.owner):
            raise Rejection(Reject.PAIR_NOT_ALLOWED)
        type_total = sol.per_type_total.get(rtype, 0) + quantity
        limit = cs.system_limit.get(rtype)
        if limit is not None and type_total > limit:
            raise Rejection(Reject.SYSTEM_LIMIT_EXCEEDED)
        try:
            gain = quantity * st.objective_spec.unit_value(rtype, prov.prices[rtype], cons.prices[rtype])
        except MissingWeight:
            raise Rejection(Reject.MISSING_WEIGHT, str(rtype)) from None

        a = Assignment(providing_offer, consuming_offer, rtype, quantity, value)
        sol.assignments.append(a)
        sol.provider_usage[providing_offer] = p_use
        sol.consumer_usage[consuming_offer] = c_use
        sol.per_type_total[rtype] = type_total
        sol.objective_value += gain
        if sol.objective_value > self.candidate_objective():
            st.candidate = solution_id
        st.now = now
        return [self._emit(now, "AssignmentAdded", solution_id=solution_id, **assignment_fields(a))]

    def finalize(self, caller: int, now: int) -> list[Event]:
        self._begin(now, Phase.SOLVE)
        self._check_director(caller)
        st = self.state
        if now < st.phase_started_at + st.params.length_solve:
            raise Rejection(Reject.TOO_EARLY, f"solving phase ends at {st.phase_started_at + st.params.length_solve}")
        emitted = []
        winner = st.solutions.get(st.candidate) if st.candidate is not None else None
        if winner is not None:
            for a in winner.assignments:
                emitted.append(self._emit(now, "AssignmentFinalized", **assignment_fields(a)))
        emitted.append(self._emit(
            now, "CycleFinalized",
            solution_id=None if winner is None else winner.solution_id,
            objective=0 if winner is None else winner.objective_value,
        ))
        st.offers = {}
        st.solutions = {}
        st.candidate = None
        st.cycle += 1
        st.phase = Phase.RECEIVE
        st.phase_started_at = now
        st.now = now
        return emitted

    # -- queries -----------------------------------------------------------

    def candidate_objective(self) -> int:
        st = self.state
        if st.candidate is None:
            return 0
        return st.solutions[st.candidate].objective_value

    def candidate_assignments(self) -> list[Assignment]:
        st = self.state
        if st.candidate is None:
            return []
        return list(st.solutions[st.candidate].assignments)

    def canonical_state(self) -> dict:
        st = self.state
        return {
            "params": None if st.params is None else st.params.to_json(),
            "phase": st.phase.value,
            "phase_started_at": st.phase_started_at,
            "cycle": st.cycle,
            "now": st.now,
            "offers": [
                {
                    "id": o.offer_id,
                    "owner": o.owner,
                    "side": o.side.value,
                    "lifecycle": o.lifecycle.value,
                    "misc": o.misc,
                    "types": [[t, o.quantities[t], o.prices[t]] for t in sorted(o.quantities)],
                }
                for o in sorted(st.offers.values(), key=lambda o: o.offer_id)
            ],
            "solutions": [
                {
                    "id": s.solution_id,
                    "creator": s.creator,
                    "misc": s.misc,
                    "objective": s.objective_value,
                    "assignments": [assignment_fields(a) for a in s.assignments],
                    "provider_usage": sorted(s.provider_usage.items()),
                    "consumer_usage": sorted(s.consumer_usage.items()),
                    "per_type_total": sorted(s.per_type_total.items()),
                }
                for s in sorted(st.solutions.values(), key=lambda s: s.solution_id)
            ],
            "candidate": st.candidate,
            "event_seq": st.event_seq,
            "event_digest": st.event_digest,
            "objective_spec": st.objective_spec.to_json(),
            "constraints": st.constraints.to_json(),
            "director": st.director,
            "any_caller": st.any_caller,
        }

    def state_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.canonical_state()).encode()).hexdigest()

    # -- generic dispatch used by logs, replay and fuzzing ---------------

    def apply(self, op: "Operation") -> list[Event]:
        if op.name not in OPERATIONS:
            raise Rejection(Reject.UNKNOWN_OPERATION, op.name)
        # bound lookup so subclasses (e.g. deliberately broken variants) take effect
        handler: Callable[..., list[Event]] = getattr(self, op.name)
        args = dict(op.args)
        if op.name == "setup":
            args = {
                "params": ContractParams.from_json(args["params"]),
                "objective_spec": ObjectiveSpec.from_json(args.get("objective_spec", {})),
                "constraints": ConstraintSet.from_json(args.get("constraints", {})),
                "any_caller": bool(args.get("any_caller", False)),
            }
        return handler(op.caller, op.time, **args)


OPERATIONS: dict[str, Callable[..., list[Event]]] = {
    "setup": Contract.setup,
    "create_offer": Contract.create_offer,
    "update_offer": Contract.update_offer,
    "post_offer": Contract.post_offer,
    "cancel_offer": Contract.cancel_offer,
    "close": Contract.close,
    "create_solution": Contract.create_solution,
    "add_assignment": Contract.add_assignment,
    "finalize": Contract.finalize,
}


@dataclass(frozen=True)
class Operation:
    """One contract call as it travels through the harness and the logs."""

    name: str
    caller: int
    time: int
    args: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"op": self.name, "caller": self.caller, **encode_fields(self.args)}

    @classmethod
    def from_json(cls, record: dict, time: int) -> "Operation":
        skip = {"seq", "cycle", "time", "kind", "op", "caller", "accepted", "error", "chain"}
        args = decode_fields({k: v for k, v in record.items() if k not in skip})
        return cls(record["op"], int(record["caller"]), time, args)


def setup_operation(caller: int, time: int, params: ContractParams,
                    objective_spec: ObjectiveSpec | None = None,
                    constraints: ConstraintSet | None = None, any_caller: bool = False) -> Operation:
    args = {
        "params": params.to_json(),
        "objective_spec": (objective_spec or ObjectiveSpec()).to_json(),
        "constraints": (constraints or ConstraintSet()).to_json(),
    }
    if any_caller:
        args["any_caller"] = True
    return Operation("setup", caller, time, args)
