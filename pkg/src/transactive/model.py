"""Domain types and the pure feasibility / objective mathematics.

Offer quantities and reservation prices are non-negative integers. Capacity
accounting uses fixed point: an assignment of ``q`` units against an offer
listing ``o_Q(t)`` units of type ``t`` consumes ``ceil(q * precision / o_Q(t))``
of the offer's budget, and the budget is ``precision``. Rounding up means a
fixed-point verdict of "feasible" always implies the exact rational one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

UINT64_MAX = 2**64 - 1


class Side(enum.Enum):
    PROVIDING = "providing"
    CONSUMING = "consuming"


class Lifecycle(enum.Enum):
    CREATED = "created"
    POSTED = "posted"
    CANCELED = "canceled"


class ObjectiveKind(enum.Enum):
    TOTAL_QUANTITY = "total_quantity"
    WEIGHTED_QUANTITY = "weighted_quantity"
    TOTAL_BENEFIT = "total_benefit"


class ViolationTag(enum.Enum):
    PROVIDER_CAPACITY = "ProviderCapacity"
    CONSUMER_CAPACITY = "ConsumerCapacity"
    PROVIDER_RESERVATION = "ProviderReservation"
    CONSUMER_RESERVATION = "ConsumerReservation"
    PRICE_BOUND = "PriceBound"
    PAIRWISE = "Pairwise"
    SYSTEM_LIMIT = "SystemLimit"
    UNKNOWN_OFFER = "UnknownOffer"
    WRONG_SIDE = "WrongSide"


class ModelError(Exception):
    """Base class for errors raised by the pure model functions."""


class ZeroQuantityType(ModelError):
    pass


class UsageOverflow(ModelError):
    pass


class UnknownOffer(ModelError):
    pass


class MissingWeight(ModelError):
    pass


@dataclass
class Offer:
    offer_id: int
    owner: int
    side: Side
    quantities: dict[int, int] = field(default_factory=dict)
    prices: dict[int, int] = field(default_factory=dict)
    lifecycle: Lifecycle = Lifecycle.CREATED
    misc: int = 0

    @property
    def providing(self) -> bool:
        return self.side is Side.PROVIDING

    def offered_types(self) -> list[int]:
        """Types with a strictly positive quantity, in ascending order."""
        return sorted(t for t, q in self.quantities.items() if q > 0)


@dataclass(frozen=True, order=True)
class Assignment:
    providing_offer: int
    consuming_offer: int
    rtype: int
    quantity: int
    unit_price: int


@dataclass(frozen=True)
class ConstraintSet:
    """Optional extension constraints; an absent key means unconstrained.

    ``pairwise[t]`` holds the allowed (provider owner, consumer owner) pairs for
    type ``t``. With ``real_valued`` set, quantities and prices are fixed-point
    decimals carrying ``decimal_scale`` units per whole unit; the arithmetic is
    unchanged, only the interpretation of the integers differs.
    """

    price_min: Mapping[int, int] = field(default_factory=dict)
    price_max: Mapping[int, int] = field(default_factory=dict)
    pairwise: Mapping[int, frozenset[tuple[int, int]]] = field(default_factory=dict)
    system_limit: Mapping[int, int] = field(default_factory=dict)
    real_valued: bool = False
    decimal_scale: int = 1

    def __post_init__(self):
        for t, lo in self.price_min.items():
            hi = self.price_max.get(t)
            if hi is not None and lo > hi:
                raise ValueError(f"price_min > price_max for type {t}")
        if self.decimal_scale < 1:
            raise ValueError("decimal_scale must be >= 1")
        if not self.real_valued and self.decimal_scale != 1:
            raise ValueError("decimal_scale only applies in real-valued mode")

    def price_interval(self, rtype: int, low: int, high: int) -> tuple[int, int]:
        """Intersect ``[low, high]`` with the configured bounds for ``rtype``."""
        lo = max(low, self.price_min.get(rtype, low))
        hi = min(high, self.price_max.get(rtype, high))
        return lo, hi

    def pair_allowed(self, rtype: int, provider: int, consumer: int) -> bool:
        allowed = self.pairwise.get(rtype)
        return allowed is None or (provider, consumer) in allowed

    def to_fixed(self, value: float | str) -> int:
        """Convert a decimal quantity/price to its scaled integer (round half up)."""
        from decimal import ROUND_HALF_UP, Decimal

        scaled = Decimal(str(value)) * self.decimal_scale
        return int(scaled.to_integral_value(rounding=ROUND_HALF_UP))

    def from_fixed(self, value: int) -> float:
        return value / self.decimal_scale

    def to_json(self) -> dict:
        return {
            "price_min": {str(t): v for t, v in sorted(self.price_min.items())},
            "price_max": {str(t): v for t, v in sorted(self.price_max.items())},
            "pairwise": {
                str(t): sorted([p, c] for p, c in pairs)
                for t, pairs in sorted(self.pairwise.items())
            },
            "system_limit": {str(t): v for t, v in sorted(self.system_limit.items())},
            "real_valued": self.real_valued,
            "decimal_scale": self.decimal_scale,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "ConstraintSet":
        return cls(
            price_min={int(t): int(v) for t, v in data.get("price_min", {}).items()},
            price_max={int(t): int(v) for t, v in data.get("price_max", {}).items()},
            pairwise={
                int(t): frozenset((int(p), int(c)) for p, c in pairs)
                for t, pairs in data.get("pairwise", {}).items()
            },
            system_limit={int(t): int(v) for t, v in data.get("system_limit", {}).items()},
            real_valued=bool(data.get("real_valued", False)),
            decimal_scale=int(data.get("decimal_scale", 1)),
        )


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: ObjectiveKind = ObjectiveKind.TOTAL_QUANTITY
    weights: Mapping[int, int] | None = None

    def __post_init__(self):
        weighted = self.kind is ObjectiveKind.WEIGHTED_QUANTITY
        if weighted != (self.weights is not None):
            raise ValueError("weights are required exactly for WEIGHTED_QUANTITY")
        if self.weights and any(w < 0 for w in self.weights.values()):
            raise ValueError("weights must be non-negative")

    def unit_value(self, rtype: int, provider_price: int, consumer_price: int) -> int:
        """Objective contribution of one traded unit of ``rtype``."""
        if self.kind is ObjectiveKind.TOTAL_QUANTITY:
            return 1
        if self.kind is ObjectiveKind.WEIGHTED_QUANTITY:
            try:
                return self.weights[rtype]
            except KeyError:
                raise MissingWeight(f"no weight for resource type {rtype}") from None
        return consumer_price - provider_price

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind.value}
        if self.weights is not None:
            out["weights"] = {str(t): w for t, w in sorted(self.weights.items())}
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "ObjectiveSpec":
        weights = data.get("weights")
        return cls(
            kind=ObjectiveKind(data.get("kind", ObjectiveKind.TOTAL_QUANTITY.value)),
            weights=None if weights is None else {int(t): int(w) for t, w in weights.items()},
        )


@dataclass(frozen=True)
class Violation:
    tag: ViolationTag
    index: int


@dataclass(frozen=True)
class FeasibilityVerdict:
    violations: tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    def tags(self) -> set[ViolationTag]:
        return {v.tag for v in self.violations}

    def __bool__(self) -> bool:
        return self.feasible


def usage_increment(quantity: int, offered: int, precision: int) -> int:
    """Fixed-point share of an offer's budget consumed by one assignment."""
    if offered <= 0:
        raise ZeroQuantityType("resource type has zero offered quantity")
    product = quantity * precision
    if product > UINT64_MAX:
        raise UsageOverflow(f"{quantity} * {precision} exceeds 64 bits")
    return -(-product // offered)


def usage(offer: Offer, assignments: Iterable[Assignment], precision: int) -> int:
    """Total fixed-point usage of ``offer`` by the given assignments.

    Every assignment must reference ``offer`` on its side.
    """
    total = 0
    for a in assignments:
        ref = a.providing_offer if offer.providing else a.consuming_offer
        if ref != offer.offer_id:
            raise ValueError(f"assignment {a} does not reference offer {offer.offer_id}")
        total += usage_increment(a.quantity, offer.quantities.get(a.rtype, 0), precision)
    return total


def check_allocation(
    offers: Mapping[int, Offer],
    assignments: Sequence[Assignment],
    constraints: ConstraintSet = ConstraintSet(),
    precision: int = 10**6,
) -> FeasibilityVerdict:
    """Total verdict function: malformed input yields violations, never errors.

    ``offers`` maps offer id to offer; providing and consuming offers share one id
    space here (the contract guarantees this).
    """
    violations: list[Violation] = []
    used: dict[int, int] = {}
    per_type: dict[int, int] = {}

    for i, a in enumerate(assignments):
        prov = offers.get(a.providing_offer)
        cons = offers.get(a.consuming_offer)
        if prov is None or cons is None:
            violations.append(Violation(ViolationTag.UNKNOWN_OFFER, i))
            continue
        if not prov.providing or cons.providing:
            violations.append(Violation(ViolationTag.WRONG_SIDE, i))
            continue
        if a.quantity < 1:
            # zero-quantity assignments are meaningless; treat as a capacity fault
            violations.append(Violation(ViolationTag.PROVIDER_CAPACITY, i))
            continue

        for offer, tag in (
            (prov, ViolationTag.PROVIDER_CAPACITY),
            (cons, ViolationTag.CONSUMER_CAPACITY),
        ):
            offered = offer.quantities.get(a.rtype, 0)
            if offered <= 0:
                violations.append(Violation(tag, i))
                continue
            # Python ints do not overflow; this stays total for any input.
            used[offer.offer_id] = used.get(offer.offer_id, 0) + -(-a.quantity * precision // offered)
            if used[offer.offer_id] > precision:
                violations.append(Violation(tag, i))

        p_price = prov.prices.get(a.rtype)
        c_price = cons.prices.get(a.rtype)
        if p_price is None or p_price > a.unit_price:
            violations.append(Violation(ViolationTag.PROVIDER_RESERVATION, i))
        if c_price is None or c_price < a.unit_price:
            violations.append(Violation(ViolationTag.CONSUMER_RESERVATION, i))

        lo = constraints.price_min.get(a.rtype)
        hi = constraints.price_max.get(a.rtype)
        if (lo is not None and a.unit_price < lo) or (hi is not None and a.unit_price > hi):
            violations.append(Violation(ViolationTag.PRICE_BOUND, i))

        if not constraints.pair_allowed(a.rtype, prov.owner, cons.owner):
            violations.append(Violation(ViolationTag.PAIRWISE, i))

        per_type[a.rtype] = per_type.get(a.rtype, 0) + a.quantity
        limit = constraints.system_limit.get(a.rtype)
        if limit is not None and per_type[a.rtype] > limit:
            violations.append(Violation(ViolationTag.SYSTEM_LIMIT, i))

    return FeasibilityVerdict(tuple(violations))


def objective(
    assignments: Iterable[Assignment],
    offers: Mapping[int, Offer],
    spec: ObjectiveSpec = ObjectiveSpec(),
) -> int:
    total = 0
    for a in assignments:
        prov = offers.get(a.providing_offer)
        cons = offers.get(a.consuming_offer)
        if prov is None or cons is None:
            raise UnknownOffer(f"assignment references unknown offer: {a}")
        total += a.quantity * spec.unit_value(
            a.rtype, prov.prices.get(a.rtype, 0), cons.prices.get(a.rtype, 0)
        )
    return total
