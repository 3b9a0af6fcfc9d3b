"""Off-ledger allocation solvers.

All strategies work on the same candidate list: one entry per (providing offer,
consuming offer, type) triple that can trade at all (both sides list the type,
an admissible price exists, the pair is allowed and a unit is worth something).
Merging assignments on one triple never hurts under ceiling usage, so every
strategy picks a single quantity per triple. Capacity is checked with exactly
the contract's fixed-point rule, which makes solver feasibility and verifier
feasibility the same thing.
"""

from __future__ import annotations

import enum
import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .contract import Event, decode_fields
from .model import (
    Assignment,
    ConstraintSet,
    Lifecycle,
    MissingWeight,
    ObjectiveSpec,
    Offer,
    Side,
)


class Strategy(enum.Enum):
    EXACT_ENUMERATION = "exact"
    BRANCH_AND_BOUND = "bnb"
    GREEDY_LOCAL_SEARCH = "greedy"


class PriceRule(enum.Enum):
    MIDPOINT = "midpoint"
    PROVIDER_RESERVATION = "provider"
    CONSUMER_RESERVATION = "consumer"


class SolverError(Exception):
    pass


class InstanceTooLarge(SolverError):
    pass


class MalformedStream(SolverError):
    pass


@dataclass
class SolverConfig:
    strategy: Strategy = Strategy.GREEDY_LOCAL_SEARCH
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    price_rule: PriceRule = PriceRule.MIDPOINT
    exact_size_cap: int = 8
    time_budget: int = 1000  # milliseconds, local search only; a guard, not the usual stop
    max_attempts: int = 400  # deterministic cap on local-search moves tried
    seed: int = 0
    precision: int = 10**6
    solve_ticks: int = 1  # logical time the agent spends solving

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "objective": self.objective.to_json(),
            "constraints": self.constraints.to_json(),
            "price_rule": self.price_rule.value,
            "exact_size_cap": self.exact_size_cap,
            "time_budget": self.time_budget,
            "max_attempts": self.max_attempts,
            "seed": self.seed,
            "precision": self.precision,
            "solve_ticks": self.solve_ticks,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "SolverConfig":
        base = cls()
        return cls(
            strategy=Strategy(data.get("strategy", base.strategy.value)),
            objective=ObjectiveSpec.from_json(data.get("objective", {})),
            constraints=ConstraintSet.from_json(data.get("constraints", {})),
            price_rule=PriceRule(data.get("price_rule", base.price_rule.value)),
            exact_size_cap=int(data.get("exact_size_cap", base.exact_size_cap)),
            time_budget=int(data.get("time_budget", base.time_budget)),
            max_attempts=int(data.get("max_attempts", base.max_attempts)),
            seed=int(data.get("seed", base.seed)),
            precision=int(data.get("precision", base.precision)),
            solve_ticks=int(data.get("solve_ticks", base.solve_ticks)),
        )

    @classmethod
    def load(cls, path: Path) -> "SolverConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class MarketSnapshot:
    providing: dict[int, Offer] = field(default_factory=dict)
    consuming: dict[int, Offer] = field(default_factory=dict)
    cycle: int = 0

    @property
    def offers(self) -> dict[int, Offer]:
        return {**self.providing, **self.consuming}

    def __len__(self) -> int:
        return len(self.providing) + len(self.consuming)


def snapshot_from_events(events: Iterable[Event | dict]) -> MarketSnapshot:
    """Rebuild the posted, non-canceled offers of the most recently closed cycle."""
    offers: dict[int, Offer] = {}
    snapshot = None
    last_seq = None
    for ev in events:
        if isinstance(ev, Event):
            seq, cycle, kind, payload = ev.seq, ev.cycle, ev.kind, ev.payload
        else:
            seq, cycle, kind = ev["seq"], ev["cycle"], ev["kind"]
            payload = decode_fields(ev)
        if last_seq is not None and seq <= last_seq:
            raise MalformedStream(f"event seq {seq} after {last_seq}")
        last_seq = seq
        if kind == "OfferCreated":
            offers[payload["id"]] = Offer(
                payload["id"], payload["owner"],
                Side.PROVIDING if payload["providing"] else Side.CONSUMING,
                misc=payload.get("misc", 0),
            )
        elif kind == "OfferUpdated":
            o = offers[payload["id"]]
            o.quantities[payload["rtype"]] = payload["quantity"]
            o.prices[payload["rtype"]] = payload["value"]
        elif kind == "OfferPosted":
            offers[payload["id"]].lifecycle = Lifecycle.POSTED
        elif kind == "OfferCanceled":
            offers[payload["id"]].lifecycle = Lifecycle.CANCELED
        elif kind == "Closed":
            posted = [o for o in offers.values() if o.lifecycle is Lifecycle.POSTED]
            snapshot = MarketSnapshot(
                providing={o.offer_id: o for o in posted if o.providing},
                consuming={o.offer_id: o for o in posted if not o.providing},
                cycle=cycle,
            )
        elif kind == "CycleFinalized":
            offers = {}
    if snapshot is None:
        raise MalformedStream("no Closed event in stream")
    return snapshot


# -- problem construction ---------------------------------------------------


@dataclass(frozen=True)
class Candidate:
    provider: int
    consumer: int
    rtype: int
    max_q: int
    price: int
    unit_value: int
    p_offered: int
    c_offered: int


def choose_price(rule: PriceRule, lo: int, hi: int, p_price: int, c_price: int) -> int:
    if rule is PriceRule.PROVIDER_RESERVATION:
        return lo
    if rule is PriceRule.CONSUMER_RESERVATION:
        return hi
    return min(max((p_price + c_price) // 2, lo), hi)


def build_candidates(snapshot: MarketSnapshot, config: SolverConfig) -> list[Candidate]:
    cs = config.constraints
    by_type: dict[int, list[Offer]] = {}
    for o in snapshot.consuming.values():
        for t in o.offered_types():
            by_type.setdefault(t, []).append(o)
    out = []
    for p in sorted(snapshot.providing.values(), key=lambda o: o.offer_id):
        for t in p.offered_types():
            for c in sorted(by_type.get(t, ()), key=lambda o: o.offer_id):
                pv, cv = p.prices[t], c.prices[t]
                lo, hi = cs.price_interval(t, pv, cv)
                if lo > hi or not cs.pair_allowed(t, p.owner, c.owner):
                    continue
                try:
                    value = config.objective.unit_value(t, pv, cv)
                except MissingWeight:
                    continue
                if value <= 0:
                    continue
                max_q = min(p.quantities[t], c.quantities[t], cs.system_limit.get(t, math.inf))
                if max_q < 1:
                    continue
                out.append(Candidate(
                    p.offer_id, c.offer_id, t, int(max_q),
                    choose_price(config.price_rule, lo, hi, pv, cv),
                    value, p.quantities[t], c.quantities[t],
                ))
    out.sort(key=lambda k: (k.provider, k.consumer, k.rtype))
    return out


def to_allocation(cands: list[Candidate], qty: Mapping[int, int]) -> list[Assignment]:
    alloc = [
        Assignment(cands[i].provider, cands[i].consumer, cands[i].rtype, q, cands[i].price)
        for i, q in qty.items() if q > 0
    ]
    alloc.sort(key=lambda a: (a.providing_offer, a.consuming_offer, a.rtype))
    return alloc


class _Ledger:
    """Mutable usage accounting shared by the search strategies."""

    def __init__(self, cands: list[Candidate], precision: int, limits: Mapping[int, int]):
        self.cands = cands
        self.precision = precision
        self.limits = limits
        self.p_used: dict[int, int] = {}
        self.c_used: dict[int, int] = {}
        self.t_used: dict[int, int] = {}
        self.qty: dict[int, int] = {}
        self.value = 0

    def room(self, i: int) -> int:
        """Largest quantity that can still be added to candidate ``i``."""
        k = self.cands[i]
        P = self.precision
        cur = self.qty.get(i, 0)
        # ceil usage must be recomputed on the merged quantity, so work from totals
        p_rest = P - self.p_used.get(k.provider, 0) + _use(cur, P, k.p_offered)
        c_rest = P - self.c_used.get(k.consumer, 0) + _use(cur, P, k.c_offered)
        q = min(k.max_q, p_rest * k.p_offered // P, c_rest * k.c_offered // P)
        limit = self.limits.get(k.rtype)
        if limit is not None:
            q = min(q, limit - self.t_used.get(k.rtype, 0) + cur)
        return max(q - cur, 0)

    def set(self, i: int, q: int) -> None:
        k = self.cands[i]
        P = self.precision
        cur = self.qty.get(i, 0)
        if q == cur:
            return
        self.p_used[k.provider] = self.p_used.get(k.provider, 0) - _use(cur, P, k.p_offered) + _use(q, P, k.p_offered)
        self.c_used[k.consumer] = self.c_used.get(k.consumer, 0) - _use(cur, P, k.c_offered) + _use(q, P, k.c_offered)
        self.t_used[k.rtype] = self.t_used.get(k.rtype, 0) - cur + q
        self.value += (q - cur) * k.unit_value
        if q:
            self.qty[i] = q
        else:
            del self.qty[i]


def _use(q: int, precision: int, offered: int) -> int:
    return -(-q * precision // offered) if q else 0


# -- exact strategies ---------------------------------------------------------


def _check_size(snapshot: MarketSnapshot, config: SolverConfig) -> None:
    if len(snapshot) > config.exact_size_cap:
        raise InstanceTooLarge(f"{len(snapshot)} offers > cap {config.exact_size_cap}")


def solve_enumeration(cands: list[Candidate], precision: int, limits: Mapping[int, int]) -> dict[int, int]:
    """Exhaustive search over every quantity of every candidate, memoised on the
    residual capacities that later candidates can still observe."""
    n = len(cands)
    # offers/types referenced at or after position i
    live_p = [set() for _ in range(n + 1)]
    live_c = [set() for _ in range(n + 1)]
    live_t = [set() for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        live_p[i] = live_p[i + 1] | {cands[i].provider}
        live_c[i] = live_c[i + 1] | {cands[i].consumer}
        live_t[i] = live_t[i + 1] | ({cands[i].rtype} if cands[i].rtype in limits else set())
    led = _Ledger(cands, precision, limits)
    memo: dict[tuple, tuple[int, tuple[int, ...]]] = {}

    def key(i):
        return (
            i,
            tuple(led.p_used.get(p, 0) for p in sorted(live_p[i])),
            tuple(led.c_used.get(c, 0) for c in sorted(live_c[i])),
            tuple(led.t_used.get(t, 0) for t in sorted(live_t[i])),
        )

    def go(i) -> tuple[int, tuple[int, ...]]:
        if i == n:
            return 0, ()
        k = key(i)
        hit = memo.get(k)
        if hit is not None:
            return hit
        best = (-1, ())
        for q in range(led.room(i) + 1):
            led.set(i, q)
            sub, choice = go(i + 1)
            led.set(i, 0)
            total = sub + q * cands[i].unit_value
            if total > best[0]:
                best = (total, (q,) + choice)
        memo[k] = best
        return best

    _, choice = go(0)
    return {i: q for i, q in enumerate(choice) if q}


def _fractional_bound(led: _Ledger, order: list[int], start: int) -> float:
    """Upper bound on what candidates order[start:] can still add.

    Relaxes integrality and the ceiling, then solves one fractional knapsack per
    provider (budget = residual usage) and per consumer; either family of
    knapsacks bounds the objective, so the smaller total is kept.
    """
    P = led.precision
    by_p: dict[int, list[tuple[float, float]]] = {}
    by_c: dict[int, list[tuple[float, float]]] = {}
    for idx in order[start:]:
        k = led.cands[idx]
        p_rest = P - led.p_used.get(k.provider, 0)
        c_rest = P - led.c_used.get(k.consumer, 0)
        units = min(k.max_q, p_rest * k.p_offered / P, c_rest * k.c_offered / P)
        limit = led.limits.get(k.rtype)
        if limit is not None:
            units = min(units, limit - led.t_used.get(k.rtype, 0))
        if units <= 0:
            continue
        # (value per unit of budget, budget the item can absorb)
        by_p.setdefault(k.provider, []).append((k.unit_value * k.p_offered / P, units * P / k.p_offered))
        by_c.setdefault(k.consumer, []).append((k.unit_value * k.c_offered / P, units * P / k.c_offered))

    def knapsacks(groups, used):
        total = 0.0
        for owner, items in groups.items():
            budget = P - used.get(owner, 0)
            for density, cap in sorted(items, reverse=True):
                take = min(cap, budget)
                total += density * take
                budget -= take
                if budget <= 0:
                    break
        return total

    return min(knapsacks(by_p, led.p_used), knapsacks(by_c, led.c_used))


def _type_bound(cands: list[Candidate]) -> int:
    """Each type can move at most what either side offers of it in total."""
    supply: dict[int, dict[int, int]] = {}
    demand: dict[int, dict[int, int]] = {}
    best: dict[int, int] = {}
    for k in cands:
        supply.setdefault(k.rtype, {})[k.provider] = k.p_offered
        demand.setdefault(k.rtype, {})[k.consumer] = k.c_offered
        best[k.rtype] = max(best.get(k.rtype, 0), k.unit_value)
    return sum(best[t] * min(sum(supply[t].values()), sum(demand[t].values())) for t in best)


def solve_branch_and_bound(cands: list[Candidate], precision: int, limits: Mapping[int, int],
                           incumbent: Mapping[int, int] | None = None) -> dict[int, int]:
    led = _Ledger(cands, precision, limits)
    order = sorted(range(len(cands)), key=lambda i: (-cands[i].unit_value, i))
    best_value = 0
    best: dict[int, int] = {}
    if incumbent:
        for i, q in incumbent.items():
            led.set(i, q)
        best_value, best = led.value, dict(led.qty)
        for i in list(incumbent):
            led.set(i, 0)

    def go(pos: int) -> None:
        nonlocal best_value, best
        if led.value > best_value:
            best_value, best = led.value, dict(led.qty)
        if pos == len(order):
            return
        if math.floor(led.value + _fractional_bound(led, order, pos) + 1e-7) <= best_value:
            return
        i = order[pos]
        for q in range(led.room(i), -1, -1):
            led.set(i, q)
            go(pos + 1)
        led.set(i, 0)

    go(0)
    return best


# -- heuristic ----------------------------------------------------------------


def _greedy_order(cands: list[Candidate], rng: random.Random) -> list[int]:
    alternatives: dict[tuple[str, int], int] = {}
    for k in cands:
        alternatives[("p", k.provider)] = alternatives.get(("p", k.provider), 0) + 1
        alternatives[("c", k.consumer)] = alternatives.get(("c", k.consumer), 0) + 1
    jitter = [rng.random() for _ in cands]
    return sorted(
        range(len(cands)),
        key=lambda i: (
            -cands[i].unit_value,
            alternatives[("p", cands[i].provider)] + alternatives[("c", cands[i].consumer)],
            jitter[i],
        ),
    )


def _fill(led: _Ledger, order: Iterable[int]) -> None:
    for i in order:
        room = led.room(i)
        if room:
            led.set(i, led.qty.get(i, 0) + room)


def solve_greedy(cands: list[Candidate], precision: int, limits: Mapping[int, int],
                 seed: int = 0) -> dict[int, int]:
    led = _Ledger(cands, precision, limits)
    _fill(led, _greedy_order(cands, random.Random(seed)))
    return dict(led.qty)


def solve_local_search(cands: list[Candidate], precision: int, limits: Mapping[int, int],
                       seed: int = 0, time_budget_ms: int = 1000,
                       max_attempts: int = 400) -> dict[int, int]:
    """Greedy start, then strictly improving exchange moves.

    A move targets a candidate below its maximum, evicts the assignments that
    block it on whichever side is saturated (one side: single evictions; both
    sides: one eviction per side), raises the target as far as it goes and
    refills the affected neighbourhood greedily, evicted candidates last. A
    move is kept only if the objective strictly increases. The attempt cap keeps
    the result independent of machine speed; the time budget is a safety net.
    """
    deadline = time.perf_counter() + time_budget_ms / 1000.0
    order = _greedy_order(cands, random.Random(seed))
    rank = {i: r for r, i in enumerate(order)}
    led = _Ledger(cands, precision, limits)
    _fill(led, order)
    ceiling = min(_type_bound(cands), math.floor(_fractional_bound(_Ledger(cands, precision, limits), order, 0) + 1e-7))
    if led.value >= ceiling:
        return dict(led.qty)

    touching_p: dict[int, list[int]] = {}
    touching_c: dict[int, list[int]] = {}
    touching_t: dict[int, list[int]] = {}
    for i, k in enumerate(cands):
        touching_p.setdefault(k.provider, []).append(i)
        touching_c.setdefault(k.consumer, []).append(i)
        if k.rtype in limits:
            touching_t.setdefault(k.rtype, []).append(i)

    def neighbourhood(ids: Iterable[int]) -> list[int]:
        near: set[int] = set()
        for j in ids:
            k = cands[j]
            near.update(touching_p[k.provider])
            near.update(touching_c[k.consumer])
            near.update(touching_t.get(k.rtype, ()))
        return sorted(near, key=rank.__getitem__)

    def attempt(target: int, evict: tuple[int, ...]) -> bool:
        before = led.value
        saved = {j: led.qty[j] for j in evict}
        saved[target] = led.qty.get(target, 0)
        for j in evict:
            led.set(j, 0)
        room = led.room(target)
        if room == 0:
            for j, q in saved.items():
                led.set(j, q)
            return False
        led.set(target, led.qty.get(target, 0) + room)
        near = neighbourhood((target,) + evict)
        touched = {j: led.qty.get(j, 0) for j in near}
        evicted = set(evict)
        _fill(led, (j for j in near if j not in evicted))
        _fill(led, evict)
        if led.value > before:
            return True
        for j in near:
            led.set(j, 0)
        for j in near:
            led.set(j, touched[j])
        for j, q in saved.items():
            led.set(j, q)
        return False

    P = precision
    attempts = 0
    improved = True
    while improved and attempts < max_attempts and time.perf_counter() < deadline:
        improved = False
        for target in order:
            if attempts >= max_attempts or time.perf_counter() >= deadline:
                break
            k = cands[target]
            if led.qty.get(target, 0) >= k.max_q:
                continue
            p_full = P - led.p_used.get(k.provider, 0) < -(-P // k.p_offered)
            c_full = P - led.c_used.get(k.consumer, 0) < -(-P // k.c_offered)
            blockers_p = [j for j in touching_p[k.provider] if j != target and led.qty.get(j)]
            blockers_c = [j for j in touching_c[k.consumer] if j != target and led.qty.get(j)]
            if p_full and c_full:
                moves = [(a, b) for a in blockers_p for b in blockers_c if a != b]
                moves += [(j,) for j in blockers_p + blockers_c]
            elif p_full:
                moves = [(j,) for j in blockers_p]
            elif c_full:
                moves = [(j,) for j in blockers_c]
            else:
                # only a system limit can block a candidate with room on both offers
                moves = [(j,) for j in touching_t.get(k.rtype, ()) if j != target and led.qty.get(j)]
            for evict in moves:
                attempts += 1
                if attempt(target, evict):
                    improved = True
                    break
                if attempts >= max_attempts:
                    break
    return dict(led.qty)


def _restore(led: _Ledger, saved: Mapping[int, int]) -> None:
    for i in list(led.qty):
        if i not in saved:
            led.set(i, 0)
    for i, q in saved.items():
        led.set(i, q)


def solve(snapshot: MarketSnapshot, config: SolverConfig) -> list[Assignment]:
    if not snapshot.providing or not snapshot.consuming:
        return []
    cands = build_candidates(snapshot, config)
    limits = dict(config.constraints.system_limit)
    if config.strategy is Strategy.EXACT_ENUMERATION:
        _check_size(snapshot, config)
        qty = solve_enumeration(cands, config.precision, limits)
    elif config.strategy is Strategy.BRANCH_AND_BOUND:
        _check_size(snapshot, config)
        start = solve_greedy(cands, config.precision, limits, config.seed)
        qty = solve_branch_and_bound(cands, config.precision, limits, incumbent=start)
    else:
        qty = solve_local_search(cands, config.precision, limits, config.seed, config.time_budget,
                                 config.max_attempts)
    return to_allocation(cands, qty)


def greedy_baseline(snapshot: MarketSnapshot, config: SolverConfig) -> list[Assignment]:
    """Pure greedy without local search, the floor the heuristic must match."""
    if not snapshot.providing or not snapshot.consuming:
        return []
    cands = build_candidates(snapshot, config)
    return to_allocation(cands, solve_greedy(cands, config.precision,
                                             dict(config.constraints.system_limit), config.seed))
