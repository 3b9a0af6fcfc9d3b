"""Ready-made simulation configs for the case studies plus CSV summaries."""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .contract import ContractParams
from .harness import ConfigError, SimConfig, SimulationReport
from .model import ConstraintSet, ObjectiveSpec
from .scenarios import (
    INTERVALS_PER_DAY,
    CarpoolParams,
    EnergyPricing,
    EnergyProfile,
    OfferSpec,
    decode_ride_type,
    energy_contract_params,
    energy_offers_from_profile,
    generate_carpool,
    interval_label,
    load_energy_traces,
    read_offer_script,
    synthetic_energy_day,
)
from .solver import SolverConfig


def solver_configs(n: int, base: SolverConfig | None = None) -> list[SolverConfig]:
    base = base or SolverConfig()
    return [replace(base, seed=base.seed + i) for i in range(n)]


def carpool_config(params: CarpoolParams | None = None, solvers: int = 1,
                   solver: SolverConfig | None = None, **overrides) -> SimConfig:
    params = params or CarpoolParams()
    scenario = generate_carpool(params)
    return SimConfig(
        offers=scenario.offers,
        params=params.contract_params(),
        cycles=1,
        solvers=solver_configs(solvers, solver),
        seed=params.seed,
        name="carpool",
        **overrides,
    )


def energy_config(profiles: Sequence[EnergyProfile] | None = None, seed: int = 0,
                  intervals_per_cycle: int = 4, solvers: int = 1,
                  solver: SolverConfig | None = None, pricing: EnergyPricing = EnergyPricing(),
                  **overrides) -> SimConfig:
    """One market cycle per block of ``intervals_per_cycle`` intervals.

    Each cycle trades the block's intervals; batteries are posted in the cycle
    holding their first interval, so windows should align with blocks.
    """
    if INTERVALS_PER_DAY % intervals_per_cycle:
        raise ConfigError(f"intervals_per_cycle must divide {INTERVALS_PER_DAY}")
    profiles = list(profiles) if profiles is not None else synthetic_energy_day(seed=seed)
    cycles = INTERVALS_PER_DAY // intervals_per_cycle
    offers: list[OfferSpec] = []
    for k in range(cycles):
        block = range(k * intervals_per_cycle, (k + 1) * intervals_per_cycle)
        for prof in profiles:
            offers.extend(energy_offers_from_profile(prof, pricing, block, cycle=k + 1))
    params = energy_contract_params(profiles)
    params = replace(params, num_types=max(params.num_types, intervals_per_cycle))
    return SimConfig(
        offers=offers,
        params=params,
        cycles=cycles,
        solvers=solver_configs(solvers, solver),
        seed=seed,
        name="energy",
        **overrides,
    )


def custom_config(path: Path, seed: int = 0, solvers: int = 1, solver: SolverConfig | None = None,
                  **overrides) -> SimConfig:
    """Config from a JSON run file: params, cycles, offers (inline or script path)."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path}: {exc}") from None
    try:
        if "offer_script" in data:
            offers = read_offer_script(Path(path).parent / data["offer_script"])
        else:
            offers = [OfferSpec.from_json(o) for o in data["offers"]]
        cfg = SimConfig(
            offers=offers,
            params=ContractParams.from_json(data["params"]),
            cycles=int(data.get("cycles", 1)),
            solvers=solver_configs(int(data.get("solvers", solvers)), solver),
            faults=[(f[0], int(f[1])) for f in data.get("faults", [])],
            seed=int(data.get("seed", seed)),
            jitter=int(data.get("jitter", 0)),
            objective=ObjectiveSpec.from_json(data.get("objective", {})),
            constraints=ConstraintSet.from_json(data.get("constraints", {})),
            name=data.get("name", "custom"),
            **overrides,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run config {path}: {exc}") from None
    return cfg


# -- plot-ready tables ---------------------------------------------------------------


def _write(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def carpool_tables(config: SimConfig, report: SimulationReport, out: Path,
                   intervals: Sequence[int]) -> dict[str, Path]:
    """offers/matches/totals per 15-minute interval (one row per interval)."""
    seats_offered = {ts: 0 for ts in intervals}
    seats_wanted = {ts: 0 for ts in intervals}
    n_prov = {ts: 0 for ts in intervals}
    n_cons = {ts: 0 for ts in intervals}
    for spec in config.offers:
        per_interval: dict[int, int] = {}
        for rtype, (qty, _) in spec.types.items():
            ts = decode_ride_type(rtype)[0]
            per_interval[ts] = max(per_interval.get(ts, 0), qty)
        for ts, qty in per_interval.items():
            if spec.providing:
                seats_offered[ts] += qty
                n_prov[ts] += 1
            else:
                seats_wanted[ts] += qty
                n_cons[ts] += 1
    matched = {ts: 0 for ts in intervals}
    matched_offers = {ts: set() for ts in intervals}
    for c in report.cycles:
        for a in c.finalized:
            ts = decode_ride_type(a.rtype)[0]
            matched[ts] += a.quantity
            matched_offers[ts].update({("p", a.providing_offer), ("c", a.consuming_offer)})
    paths = {
        "offers": out / "offers_per_interval.csv",
        "matches": out / "matches_per_interval.csv",
        "totals": out / "totals_per_interval.csv",
    }
    _write(paths["offers"], ["interval", "providing_offers", "consuming_offers", "seats_offered", "seats_requested"],
           [[ts, n_prov[ts], n_cons[ts], seats_offered[ts], seats_wanted[ts]] for ts in intervals])
    _write(paths["matches"], ["interval", "matched_seats", "matched_offers"],
           [[ts, matched[ts], len(matched_offers[ts])] for ts in intervals])
    _write(paths["totals"], ["interval", "produced", "demanded", "traded"],
           [[ts, seats_offered[ts], seats_wanted[ts], matched[ts]] for ts in intervals])
    return paths


def energy_tables(config: SimConfig, report: SimulationReport, out: Path) -> dict[str, Path]:
    labels = [interval_label(i) for i in range(INTERVALS_PER_DAY)]
    produced = {t: 0 for t in labels}
    demanded = {t: 0 for t in labels}
    n_prov = {t: 0 for t in labels}
    n_cons = {t: 0 for t in labels}
    for c in report.cycles:
        for t, q in c.supply.items():
            produced[t] += q
        for t, q in c.demand.items():
            demanded[t] += q
    for spec in config.offers:
        for t in spec.types:
            (n_prov if spec.providing else n_cons)[t] += 1
    traded = {t: 0 for t in labels}
    n_matched = {t: 0 for t in labels}
    for c in report.cycles:
        for a in c.finalized:
            traded[a.rtype] += a.quantity
            n_matched[a.rtype] += 1
    paths = {
        "offers": out / "offers_per_interval.csv",
        "matches": out / "matches_per_interval.csv",
        "totals": out / "totals_per_interval.csv",
    }
    _write(paths["offers"], ["interval", "providing_offers", "consuming_offers"],
           [[t, n_prov[t], n_cons[t]] for t in labels])
    _write(paths["matches"], ["interval", "assignments", "traded"],
           [[t, n_matched[t], traded[t]] for t in labels])
    _write(paths["totals"], ["interval", "produced", "demanded", "traded"],
           [[t, produced[t], demanded[t], traded[t]] for t in labels])
    return paths
