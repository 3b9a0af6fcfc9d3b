from __future__ import annotations

import os

from hypothesis import HealthCheck, settings

from _acceptance import RESULTS
from transactive.contract import Contract, ContractParams
from transactive.model import Offer, Side, Lifecycle
from transactive.solver import MarketSnapshot

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def offer(oid, owner, providing, types, lifecycle=Lifecycle.POSTED):
    """``types`` maps rtype -> (quantity, price)."""
    return Offer(oid, owner, Side.PROVIDING if providing else Side.CONSUMING,
                 {t: q for t, (q, _) in types.items()}, {t: v for t, (_, v) in types.items()}, lifecycle)


PARAMS = ContractParams(num_types=4, precision=10**6, max_quantity=1000, length_receive=10, length_solve=10)
DIRECTOR = 0


def market(offers, params=PARAMS, objective=None, constraints=None):
    """A contract in the Solve phase holding ``offers``: list of (owner, providing, types)."""
    c = Contract()
    c.setup(DIRECTOR, 0, params, objective, constraints)
    ids = []
    for owner, providing, types in offers:
        oid = c.create_offer(owner, 1, providing)[0].payload["id"]
        for t, (q, v) in types.items():
            c.update_offer(owner, 1, oid, t, q, v)
        c.post_offer(owner, 1, oid)
        ids.append(oid)
    c.close(DIRECTOR, params.length_receive)
    return c, ids


def snapshot(offers):
    snap = MarketSnapshot()
    for o in offers:
        (snap.providing if o.providing else snap.consuming)[o.offer_id] = o
    return snap


def random_snapshot(rng, max_p=4, max_c=4, max_t=3, max_q=5):
    n_p, n_c, n_t = rng.randint(1, max_p), rng.randint(1, max_c), rng.randint(1, max_t)
    offers = []
    for i in range(n_p + n_c):
        providing = i < n_p
        types = {}
        for t in rng.sample(range(1, n_t + 1), rng.randint(1, n_t)):
            price = rng.randint(0, 8) if providing else rng.randint(3, 12)
            types[t] = (rng.randint(1, max_q), price)
        offers.append(offer(i, i, providing, types))
    return snapshot(offers)
