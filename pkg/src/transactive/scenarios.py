"""Case-study generators: carpool rides and energy futures.

Both produce :class:`OfferSpec` lists, which the harness turns into
create/update/post call sequences. Generation is pure and seeded.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .contract import ContractParams
from .model import UINT64_MAX

INTERVALS_PER_DAY = 96


class ScenarioError(Exception):
    pass


class IdOutOfRange(ScenarioError):
    pass


class EncodingOverflow(ScenarioError):
    pass


class EncodingCapacity(ScenarioError):
    pass


class TooFewPoints(ScenarioError):
    pass


class NegativeEnergy(ScenarioError):
    pass


class TraceParseError(ScenarioError):
    pass


class WrongIntervalCount(ScenarioError):
    pass


@dataclass(frozen=True)
class OfferSpec:
    """What a prosumer posts: one offer, sides and per-type (quantity, price)."""

    actor: int
    providing: bool
    types: dict[int, tuple[int, int]]
    cycle: int = 1
    misc: int = 0

    def to_json(self) -> dict:
        return {
            "actor": self.actor,
            "providing": self.providing,
            "cycle": self.cycle,
            "misc": str(self.misc),
            "types": {str(t): [q, v] for t, (q, v) in sorted(self.types.items())},
        }

    @classmethod
    def from_json(cls, data: dict) -> "OfferSpec":
        return cls(
            actor=int(data["actor"]),
            providing=bool(data["providing"]),
            types={int(t): (int(q), int(v)) for t, (q, v) in data["types"].items()},
            cycle=int(data.get("cycle", 1)),
            misc=int(data.get("misc", 0)),
        )


def write_offer_script(specs: Iterable[OfferSpec], path: Path) -> None:
    Path(path).write_text(json.dumps({"offers": [s.to_json() for s in specs]}, indent=1))


def read_offer_script(path: Path) -> list[OfferSpec]:
    data = json.loads(Path(path).read_text())
    return [OfferSpec.from_json(d) for d in data["offers"]]


# -- ride types -------------------------------------------------------------


def encode_ride_type(timestamp: int, pickup_id: int, destination_id: int) -> int:
    if not 0 <= pickup_id < 100:
        raise IdOutOfRange(f"pickup id {pickup_id} not in [0, 100)")
    if not 0 <= destination_id < 10:
        raise IdOutOfRange(f"destination id {destination_id} not in [0, 10)")
    if timestamp < 0:
        raise IdOutOfRange("negative timestamp")
    rtype = timestamp * 1000 + pickup_id * 10 + destination_id
    if rtype > UINT64_MAX:
        raise EncodingOverflow(f"timestamp {timestamp} too large for 64-bit encoding")
    return rtype


def decode_ride_type(rtype: int) -> tuple[int, int, int]:
    timestamp, rest = divmod(rtype, 1000)
    return timestamp, rest // 10, rest % 10


# -- k-means ----------------------------------------------------------------


@dataclass
class KMeansResult:
    centroids: np.ndarray
    labels: np.ndarray
    wcss_history: list[float]
    iterations: int


def _wcss(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((points - centroids[labels]) ** 2).sum())


def kmeans(points: Sequence[Sequence[float]], k: int, max_iters: int = 100, seed: int = 0) -> KMeansResult:
    """Lloyd's algorithm from ``k`` distinct seeded random data points.

    An emptied cluster keeps its previous centroid, which keeps the WCSS
    sequence non-increasing.
    """
    pts = np.asarray(points, dtype=float)
    if k < 1 or len(pts) < k:
        raise TooFewPoints(f"need at least k={k} points, got {len(pts)}")
    rng = np.random.default_rng(seed)
    centroids = pts[rng.choice(len(pts), size=k, replace=False)].copy()
    labels = np.full(len(pts), -1)
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        dists = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        history.append(_wcss(pts, centroids, new_labels))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = pts[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    return KMeansResult(centroids, labels, history, it)


# -- carpool ------------------------------------------------------------------


@dataclass
class GaussianComponent:
    weight: float
    mean: tuple[float, float]
    std: float


def _default_residences() -> list[GaussianComponent]:
    # loose suburbs around a campus at the origin; units are km
    return [
        GaussianComponent(0.35, (-6.0, 3.0), 2.0),
        GaussianComponent(0.25, (5.0, 5.0), 2.5),
        GaussianComponent(0.25, (2.0, -7.0), 2.0),
        GaussianComponent(0.15, (-4.0, -5.0), 1.5),
    ]


@dataclass
class CarpoolParams:
    prosumers: int = 75
    provider_probability: float = 0.5
    pickups: int = 20
    destinations: int = 5
    day: str = "2018-04-13"
    timezone: str = "America/Chicago"
    start: str = "07:00"
    end: str = "09:30"
    step_minutes: int = 15
    seats: tuple[int, int] = (1, 3)
    window: tuple[int, int] = (1, 6)  # intervals a prosumer is available for
    provider_value: tuple[int, int] = (5, 10)
    consumer_value: tuple[int, int] = (8, 15)
    out_of_way: str = "half_distance"
    residences: list[GaussianComponent] = field(default_factory=_default_residences)
    destination_radius: float = 1.0
    seed: int = 0

    def intervals(self) -> list[int]:
        """Unix timestamps of the interval starts (local wall-clock times)."""
        tz = ZoneInfo(self.timezone)
        day = dt.date.fromisoformat(self.day)
        start = dt.datetime.combine(day, dt.time.fromisoformat(self.start), tzinfo=tz)
        end = dt.datetime.combine(day, dt.time.fromisoformat(self.end), tzinfo=tz)
        out = []
        t = start
        while t <= end:
            out.append(int(t.timestamp()))
            t += dt.timedelta(minutes=self.step_minutes)
        return out

    def validate(self) -> None:
        if self.pickups >= 100 or self.destinations >= 10:
            raise EncodingCapacity("pickup ids must be < 100 and destination ids < 10")
        if self.out_of_way != "half_distance":
            raise ScenarioError(f"unknown out-of-way rule {self.out_of_way!r}")
        try:
            for ts in self.intervals():
                encode_ride_type(ts, self.pickups - 1, self.destinations - 1)
        except ScenarioError as exc:
            raise EncodingCapacity(str(exc)) from None

    def contract_params(self) -> ContractParams:
        return ContractParams(
            num_types=self.pickups * len(self.intervals()),
            precision=10**6,
            max_quantity=max(self.seats[1], 1),
            length_receive=20_000,
            length_solve=5_000,
        )

    @classmethod
    def from_json(cls, data: dict) -> "CarpoolParams":
        data = dict(data)
        if "residences" in data:
            data["residences"] = [
                GaussianComponent(c["weight"], tuple(c["mean"]), c["std"]) for c in data["residences"]
            ]
        for key in ("seats", "window", "provider_value", "consumer_value"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class CarpoolProsumer:
    actor: int
    providing: bool
    residence: tuple[float, float]
    destination: int
    seats: int
    window: list[int]
    value: int


@dataclass
class CarpoolScenario:
    params: CarpoolParams
    residences: np.ndarray
    pickups: np.ndarray
    destinations: np.ndarray
    prosumers: list[CarpoolProsumer]
    offers: list[OfferSpec]


def _sample_residences(rng: np.random.Generator, comps: list[GaussianComponent], n: int) -> np.ndarray:
    weights = np.array([c.weight for c in comps], dtype=float)
    picks = rng.choice(len(comps), size=n, p=weights / weights.sum())
    means = np.array([comps[i].mean for i in picks])
    stds = np.array([comps[i].std for i in picks])[:, None]
    return means + rng.normal(size=(n, 2)) * stds


def generate_carpool(params: CarpoolParams) -> CarpoolScenario:
    """Sample prosumers and turn each into one offer over its feasible ride types.

    A provider's pickup circle is centred halfway between residence and
    destination, a consumer's at the residence; both have radius half the
    residence-destination distance. Prosumers with no pickup point in range
    post nothing.
    """
    params.validate()
    rng = np.random.default_rng(params.seed)
    residences = _sample_residences(rng, params.residences, params.prosumers)
    pickups = kmeans(residences, params.pickups, max_iters=100, seed=params.seed).centroids
    angles = rng.uniform(0, 2 * math.pi, size=params.destinations)
    destinations = np.stack([np.cos(angles), np.sin(angles)], axis=1) * params.destination_radius
    intervals = params.intervals()

    prosumers = []
    offers = []
    for actor in range(params.prosumers):
        providing = bool(rng.random() < params.provider_probability)
        dest = int(rng.integers(params.destinations))
        seats = int(rng.integers(params.seats[0], params.seats[1] + 1))
        length = int(rng.integers(params.window[0], params.window[1] + 1))
        length = min(length, len(intervals))
        first = int(rng.integers(0, len(intervals) - length + 1))
        window = intervals[first:first + length]
        lo, hi = params.provider_value if providing else params.consumer_value
        value = int(rng.integers(lo, hi + 1))
        home = residences[actor]
        target = destinations[dest]
        radius = float(np.linalg.norm(home - target)) / 2
        centre = (home + target) / 2 if providing else home
        in_range = [j for j in range(len(pickups)) if np.linalg.norm(pickups[j] - centre) <= radius]
        quantity = seats if providing else 1
        prosumers.append(CarpoolProsumer(actor, providing, (float(home[0]), float(home[1])),
                                         dest, quantity, window, value))
        if not in_range:
            continue
        types = {encode_ride_type(ts, j, dest): (quantity, value) for ts in window for j in in_range}
        offers.append(OfferSpec(actor, providing, types))
    return CarpoolScenario(params, residences, pickups, destinations, prosumers, offers)


# -- energy -----------------------------------------------------------------


def interval_label(index: int) -> int:
    """HHMM label of a 15-minute interval index, e.g. 36 -> 900."""
    if not 0 <= index < INTERVALS_PER_DAY:
        raise ValueError(f"interval index {index} out of range")
    return (index // 4) * 100 + (index % 4) * 15


def interval_index(label: int) -> int:
    hours, minutes = divmod(label, 100)
    return hours * 4 + minutes // 15


@dataclass
class BatteryBlock:
    energy: int  # Wh
    first_interval: int
    intervals: int


@dataclass
class EnergyProfile:
    home_id: int
    net_power: list[int]  # W per interval; positive means production
    batteries: list[BatteryBlock] = field(default_factory=list)

    def __post_init__(self):
        if len(self.net_power) != INTERVALS_PER_DAY:
            raise WrongIntervalCount(f"home {self.home_id}: {len(self.net_power)} intervals")

    @property
    def producer(self) -> bool:
        return any(p > 0 for p in self.net_power)


@dataclass(frozen=True)
class EnergyPricing:
    """Uniform reservation prices, currency units per traded unit."""

    provider_price: int = 5
    consumer_price: int = 10


def energy_offers_from_profile(profile: EnergyProfile, pricing: EnergyPricing = EnergyPricing(),
                               intervals: Iterable[int] | None = None, cycle: int = 1) -> list[OfferSpec]:
    """One single-type offer per non-zero interval, one multi-type offer per battery.

    ``intervals`` restricts output to the given interval indices; batteries are
    included when their first interval is among them.
    """
    wanted = set(range(INTERVALS_PER_DAY) if intervals is None else intervals)
    out = []
    for idx in sorted(wanted):
        power = profile.net_power[idx]
        if power == 0:
            continue
        providing = power > 0
        price = pricing.provider_price if providing else pricing.consumer_price
        out.append(OfferSpec(profile.home_id, providing, {interval_label(idx): (abs(power), price)},
                             cycle=cycle, misc=idx))
    for b in profile.batteries:
        if b.energy < 0:
            raise NegativeEnergy(f"home {profile.home_id}: battery energy {b.energy}")
        if b.first_interval not in wanted or b.energy == 0:
            continue
        labels = [interval_label(i) for i in range(b.first_interval, b.first_interval + b.intervals)]
        out.append(OfferSpec(profile.home_id, True, {t: (b.energy, pricing.provider_price) for t in labels},
                             cycle=cycle, misc=1000 + b.first_interval))
    return out


def load_energy_traces(path: Path) -> list[EnergyProfile]:
    """Read ``home_id,interval,net_power_w`` rows, 96 per home."""
    rows: dict[int, dict[int, int]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["home_id", "interval", "net_power_w"]:
            raise TraceParseError(f"unexpected header {reader.fieldnames}")
        for line, row in enumerate(reader, start=2):
            try:
                home, idx, power = int(row["home_id"]), int(row["interval"]), int(row["net_power_w"])
            except (TypeError, ValueError):
                raise TraceParseError(f"line {line}: {row}") from None
            if not 0 <= idx < INTERVALS_PER_DAY:
                raise TraceParseError(f"line {line}: interval {idx} out of range")
            if idx in rows.setdefault(home, {}):
                raise TraceParseError(f"line {line}: duplicate interval {idx} for home {home}")
            rows[home][idx] = power
    profiles = []
    for home in sorted(rows):
        if len(rows[home]) != INTERVALS_PER_DAY:
            raise WrongIntervalCount(f"home {home}: {len(rows[home])} intervals")
        profiles.append(EnergyProfile(home, [rows[home][i] for i in range(INTERVALS_PER_DAY)]))
    return profiles


def write_energy_traces(profiles: Iterable[EnergyProfile], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["home_id", "interval", "net_power_w"])
        for p in profiles:
            for i, power in enumerate(p.net_power):
                w.writerow([p.home_id, i, power])


def synthetic_energy_day(homes: int = 102, producers: int = 5, seed: int = 0,
                         batteries: int = 2) -> list[EnergyProfile]:
    """A day of load traces shaped like a small residential microgrid.

    Consumers draw a base load with morning and evening peaks. Producers carry
    rooftop solar large enough to export around midday; the first ``batteries``
    producers also hold a 500 Wh battery dischargeable during 9:00-10:00.
    """
    if not 0 <= producers <= homes:
        raise ValueError("producers must be between 0 and homes")
    rng = np.random.default_rng(seed)
    hours = np.arange(INTERVALS_PER_DAY) / 4.0
    peaks = 0.6 * np.exp(-((hours - 7.5) ** 2) / 2) + 1.0 * np.exp(-((hours - 19.0) ** 2) / 3)
    solar_shape = np.clip(np.sin(np.pi * (hours - 6.0) / 14.0), 0, None)
    profiles = []
    for home in range(homes):
        base = rng.uniform(150, 400)
        load = base * (1 + peaks) * rng.uniform(0.8, 1.2, size=INTERVALS_PER_DAY)
        net = -load
        blocks = []
        if home < producers:
            net = net + rng.uniform(3000, 6000) * solar_shape
            if home < batteries:
                blocks.append(BatteryBlock(500, interval_index(900), 4))
        power = [int(round(x)) for x in net]
        if home >= producers:
            power = [min(p, 0) for p in power]
        profiles.append(EnergyProfile(home, power, blocks))
    return profiles


def energy_contract_params(profiles: Sequence[EnergyProfile]) -> ContractParams:
    peak = max([abs(p) for prof in profiles for p in prof.net_power] +
               [b.energy for prof in profiles for b in prof.batteries] + [1])
    widest = max([b.intervals for prof in profiles for b in prof.batteries] + [1])
    return ContractParams(
        num_types=max(widest, 4),
        precision=10**6,
        max_quantity=max(peak, 10_000),
        length_receive=5_000,
        length_solve=5_000,
    )
