"""Problem data model: ports, contracts, vessels, prices and the Instance bundle.

Conventions used throughout the library:

- volumes are cubic meters, distances nautical miles, speeds knots,
  money US dollars, time is an integer day index from the horizon start
- a port operation (loading or discharge) occupies one full day
- vessel tanks must stay outside the forbidden volume band while sailing
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

FUEL_MODES = ("lng_only", "fuel_only", "combined")

# Fraction of the largest vessel capacity below which a sell contract
# counts as a small discharge candidate.
SMALL_SELL_CAPACITY_FRACTION = 0.25


class InstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


@dataclass(frozen=True)
class Port:
    id: str
    name: str = ""


@dataclass(frozen=True)
class DistanceMatrix:
    """Symmetric port-to-port distances in nautical miles."""

    entries: dict[tuple[str, str], float]

    def get(self, a: str, b: str) -> float:
        if a == b:
            return 0.0
        try:
            return self.entries[(a, b)]
        except KeyError:
            return self.entries[(b, a)]


@dataclass(frozen=True)
class Contract:
    """An optional buy or sell trade opportunity at a port.

    ``prices`` maps every service day in [release, deadline] to the unit
    price paid (sell) or charged (buy) per cubic meter on that day.
    """

    id: str
    kind: str  # "buy" | "sell"
    port: str
    release: int
    deadline: int
    v_min: float
    v_max: float
    prices: dict[int, float]

    @property
    def window_days(self) -> range:
        return range(self.release, self.deadline + 1)

    @property
    def midpoint_day(self) -> int:
        return self.release + (self.deadline - self.release) // 2

    def unit_price(self, day: int) -> float:
        return self.prices[day]


@dataclass(frozen=True)
class ConsumptionRow:
    """One admissible (fuel mode, load state, speed) sailing regime.

    ``consumption`` is the LNG share burned per sailing hour,
    ``boil_off`` the evaporation loss per sailing hour, and
    ``fuel_cost_rate`` the money per hour spent on the non-LNG fuel
    component (zero for pure LNG propulsion).
    """

    fuel_mode: str
    laden: bool
    speed: float
    consumption: float
    boil_off: float
    fuel_cost_rate: float = 0.0


@dataclass(frozen=True)
class Vessel:
    id: str
    capacity: float
    consumption_table: tuple[ConsumptionRow, ...]
    idle_boil_off: float  # m3 per day while moored or drifting
    rent_start: int
    rent_end: int
    initial_port: str
    final_port: str
    initial_volume: float = 0.0
    fill_fraction: float = 0.985
    forbidden_zone: tuple[float, float] = (0.25, 0.75)

    @property
    def low_band_top(self) -> float:
        return self.forbidden_zone[0] * self.capacity

    @property
    def high_band_bottom(self) -> float:
        return self.forbidden_zone[1] * self.capacity

    @property
    def max_onboard(self) -> float:
        return self.fill_fraction * self.capacity

    def modes(self) -> tuple[str, ...]:
        seen: list[str] = []
        for row in self.consumption_table:
            if row.fuel_mode not in seen:
                seen.append(row.fuel_mode)
        return tuple(seen)

    def rows(self, mode: str, laden: bool) -> list[ConsumptionRow]:
        return [
            r
            for r in self.consumption_table
            if r.fuel_mode == mode and r.laden == laden
        ]

    def speeds(self, mode: str, laden: bool) -> list[float]:
        return sorted(r.speed for r in self.rows(mode, laden))

    def row(self, mode: str, laden: bool, speed: float) -> ConsumptionRow:
        for r in self.rows(mode, laden):
            if abs(r.speed - speed) < 1e-9:
                return r
        raise InstanceError(
            f"vessel {self.id}: no consumption row for "
            f"mode={mode} laden={laden} speed={speed}"
        )

    def max_speed(self, mode: str | None = None, laden: bool | None = None) -> float:
        speeds = [
            r.speed
            for r in self.consumption_table
            if (mode is None or r.fuel_mode == mode)
            and (laden is None or r.laden == laden)
        ]
        if not speeds:
            raise InstanceError(f"vessel {self.id}: empty consumption table")
        return max(speeds)


@dataclass(frozen=True)
class PriceSeries:
    """Free (spot) LNG price per port and day, used for out-of-contract fuel."""

    free_price: dict[str, tuple[float, ...]]  # port -> price per day 0..horizon-1

    def get(self, port: str, day: int) -> float:
        return self.free_price[port][day]


@dataclass(frozen=True)
class Instance:
    horizon_days: int
    ports: tuple[Port, ...]
    distances: DistanceMatrix
    vessels: tuple[Vessel, ...]
    contracts: tuple[Contract, ...]
    prices: PriceSeries
    name: str = "instance"
    _by_id: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self,
            "_by_id",
            {
                "contract": {c.id: c for c in self.contracts},
                "vessel": {v.id: v for v in self.vessels},
                "port": {p.id: p for p in self.ports},
            },
        )

    def contract(self, cid: str) -> Contract:
        return self._by_id["contract"][cid]

    def vessel(self, vid: str) -> Vessel:
        return self._by_id["vessel"][vid]

    @property
    def buys(self) -> list[Contract]:
        return [c for c in self.contracts if c.kind == "buy"]

    @property
    def sells(self) -> list[Contract]:
        return [c for c in self.contracts if c.kind == "sell"]

    @property
    def max_capacity(self) -> float:
        return max(v.capacity for v in self.vessels)

    def is_small_sell(self, contract: Contract) -> bool:
        """Small discharge predicate: v_min below a quarter of the biggest tank."""
        return (
            contract.kind == "sell"
            and contract.v_min < SMALL_SELL_CAPACITY_FRACTION * self.max_capacity
        )

    @property
    def small_sells(self) -> list[Contract]:
        return [c for c in self.sells if self.is_small_sell(c)]

    @property
    def big_sells(self) -> list[Contract]:
        return [c for c in self.sells if not self.is_small_sell(c)]

    def is_flexible(self, contract: Contract) -> bool:
        """A contract with volume slack or small-discharge eligibility."""
        return contract.v_min < contract.v_max or self.is_small_sell(contract)

    def flexible_share(self) -> float:
        if not self.contracts:
            return 0.0
        n_flex = sum(1 for c in self.contracts if self.is_flexible(c))
        return n_flex / len(self.contracts)

    def distance(self, a: str, b: str) -> float:
        return self.distances.get(a, b)

    def free_price(self, port: str, day: int) -> float:
        return self.prices.get(port, day)

    def validate(self) -> None:
        validate_instance(self)


def validate_instance(inst: Instance) -> None:
    """Check every structural invariant, raising InstanceError naming the culprit."""
    port_ids = [p.id for p in inst.ports]
    if len(set(port_ids)) != len(port_ids):
        raise InstanceError("duplicate port ids")
    port_set = set(port_ids)

    if inst.horizon_days <= 0:
        raise InstanceError("horizon_days must be positive")

    for (a, b), d in inst.distances.entries.items():
        if a not in port_set or b not in port_set:
            raise InstanceError(f"distance entry ({a},{b}) references unknown port")
        if d < 0:
            raise InstanceError(f"distance ({a},{b}) is negative")
        if a == b and d != 0:
            raise InstanceError(f"distance ({a},{a}) must be zero")
        other = inst.distances.entries.get((b, a))
        if other is not None and abs(other - d) > 1e-9:
            raise InstanceError(f"distance ({a},{b}) not symmetric")
    for a in port_set:
        for b in port_set:
            if a != b and (a, b) not in inst.distances.entries and (
                b,
                a,
            ) not in inst.distances.entries:
                raise InstanceError(f"distance ({a},{b}) missing")

    cids = [c.id for c in inst.contracts]
    if len(set(cids)) != len(cids):
        raise InstanceError("duplicate contract ids")
    for c in inst.contracts:
        if c.kind not in ("buy", "sell"):
            raise InstanceError(f"contract {c.id}: unknown kind {c.kind!r}")
        if c.port not in port_set:
            raise InstanceError(f"contract {c.id}: unknown port {c.port!r}")
        if not (0 <= c.release <= c.deadline < inst.horizon_days):
            raise InstanceError(
                f"contract {c.id}: window [{c.release},{c.deadline}] outside "
                f"horizon of {inst.horizon_days} days"
            )
        if not (0 <= c.v_min <= c.v_max):
            raise InstanceError(
                f"contract {c.id}: invalid volume bounds [{c.v_min},{c.v_max}]"
            )
        for day in c.window_days:
            if day not in c.prices:
                raise InstanceError(f"contract {c.id}: missing price for day {day}")
            if c.prices[day] < 0:
                raise InstanceError(f"contract {c.id}: negative price on day {day}")

    vids = [v.id for v in inst.vessels]
    if len(set(vids)) != len(vids):
        raise InstanceError("duplicate vessel ids")
    for v in inst.vessels:
        lo, hi = v.forbidden_zone
        if not (0 < lo < hi < v.fill_fraction <= 1):
            raise InstanceError(
                f"vessel {v.id}: need 0 < {lo} < {hi} < fill "
                f"{v.fill_fraction} <= 1"
            )
        if v.capacity <= 0:
            raise InstanceError(f"vessel {v.id}: non-positive capacity")
        if v.idle_boil_off < 0:
            raise InstanceError(f"vessel {v.id}: negative idle boil-off")
        if not (0 <= v.rent_start <= v.rent_end < inst.horizon_days):
            raise InstanceError(
                f"vessel {v.id}: rent interval [{v.rent_start},{v.rent_end}] "
                f"outside horizon"
            )
        if v.initial_port not in port_set:
            raise InstanceError(f"vessel {v.id}: unknown initial port")
        if v.final_port not in port_set:
            raise InstanceError(f"vessel {v.id}: unknown final port")
        if not v.consumption_table:
            raise InstanceError(f"vessel {v.id}: empty consumption table")
        for row in v.consumption_table:
            if row.fuel_mode not in FUEL_MODES:
                raise InstanceError(
                    f"vessel {v.id}: unknown fuel mode {row.fuel_mode!r}"
                )
            if row.speed <= 0:
                raise InstanceError(f"vessel {v.id}: non-positive speed in table")
            if row.consumption < 0 or row.boil_off < 0 or row.fuel_cost_rate < 0:
                raise InstanceError(f"vessel {v.id}: negative consumption entry")
        if v.low_band_top < v.initial_volume < v.high_band_bottom:
            raise InstanceError(
                f"vessel {v.id}: initial volume {v.initial_volume} inside the "
                f"forbidden band"
            )
        if v.initial_volume < 0 or v.initial_volume > v.max_onboard:
            raise InstanceError(f"vessel {v.id}: initial volume out of range")

    for port in port_set:
        if len(inst.prices.free_price.get(port, ())) < inst.horizon_days:
            raise InstanceError(f"free price series for port {port} incomplete")
    for port, series in inst.prices.free_price.items():
        if port not in port_set:
            raise InstanceError(f"price series references unknown port {port!r}")
        if any(p < 0 for p in series):
            raise InstanceError(f"negative free price at port {port}")


def with_contracts(inst: Instance, contracts: list[Contract]) -> Instance:
    """Copy of ``inst`` with a replaced contract list."""
    return replace(inst, contracts=tuple(contracts))
