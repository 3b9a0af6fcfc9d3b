"""Exact feasibility check over rationals.

Deliberately shares no code with the fixed-point verdict in :mod:`model`: an
offer's capacity constraint is evaluated as ``sum_t used(t) / o_Q(t) <= 1``
with :class:`fractions.Fraction`, no rounding anywhere. Used by the fuzzer and
the tests as the ground truth the contract's conservative check is held to.
"""

from __future__ import annotations

from collections import defaultdict
from fractions import Fraction
from typing import Iterable, Mapping

from .model import Assignment, ConstraintSet, Lifecycle, Offer, Side


def exact_problems(offers: Mapping[int, Offer], assignments: Iterable[Assignment],
                   constraints: ConstraintSet | None = None,
                   require_posted: bool = True) -> list[str]:
    """Human-readable list of violated constraints; empty means feasible."""
    constraints = constraints or ConstraintSet()
    out: list[str] = []
    per_offer_type: dict[tuple[int, int], int] = defaultdict(int)
    per_type: dict[int, int] = defaultdict(int)
    for a in assignments:
        prov, cons = offers.get(a.providing_offer), offers.get(a.consuming_offer)
        if prov is None or cons is None:
            out.append(f"{a}: unknown offer")
            continue
        if prov.side is not Side.PROVIDING or cons.side is not Side.CONSUMING:
            out.append(f"{a}: offers on the wrong side")
            continue
        if require_posted and (prov.lifecycle is not Lifecycle.POSTED or cons.lifecycle is not Lifecycle.POSTED):
            out.append(f"{a}: offer not posted")
        if a.quantity <= 0:
            out.append(f"{a}: non-positive quantity")
        for o in (prov, cons):
            if o.quantities.get(a.rtype, 0) <= 0:
                out.append(f"{a}: offer {o.offer_id} does not list type {a.rtype}")
            per_offer_type[(o.offer_id, a.rtype)] += a.quantity
        if a.unit_price < prov.prices.get(a.rtype, 0):
            out.append(f"{a}: below provider reservation")
        if a.unit_price > cons.prices.get(a.rtype, -1):
            out.append(f"{a}: above consumer reservation")
        lo, hi = constraints.price_min.get(a.rtype), constraints.price_max.get(a.rtype)
        if lo is not None and a.unit_price < lo or hi is not None and a.unit_price > hi:
            out.append(f"{a}: outside price bounds")
        allowed = constraints.pairwise.get(a.rtype)
        if allowed is not None and (prov.owner, cons.owner) not in allowed:
            out.append(f"{a}: pair not allowed")
        per_type[a.rtype] += a.quantity

    shares: dict[int, Fraction] = defaultdict(Fraction)
    for (oid, t), q in per_offer_type.items():
        offered = offers[oid].quantities.get(t, 0)
        if offered > 0:
            shares[oid] += Fraction(q, offered)
    for oid, share in sorted(shares.items()):
        if share > 1:
            out.append(f"offer {oid}: capacity share {share} > 1")
    for t, total in sorted(per_type.items()):
        limit = constraints.system_limit.get(t)
        if limit is not None and total > limit:
            out.append(f"type {t}: total {total} > system limit {limit}")
    return out


def exactly_feasible(offers: Mapping[int, Offer], assignments: Iterable[Assignment],
                     constraints: ConstraintSet | None = None, require_posted: bool = True) -> bool:
    return not exact_problems(offers, assignments, constraints, require_posted)
