"""Feasible trip enumeration with penalized trip values.

A trip is a travel arc with attributes: vessel, endpoints with service
days, speed, fuel mode, traded volumes and profit. Four kinds exist:

- ``initial``  vessel start location to a first loading
- ``laden``    buy to (non-small) sell
- ``ballast``  sell to a next buy
- ``final``    last sell to the vessel end location

Time accounting per trip: the service day at each contract is one full
day of port operations; a trip owns the sailing window strictly between
its endpoint days plus the operation day of its *end* call, so the burns
of a chained route cover every day exactly once. Final trips own only
the sailing hours to the terminal. Laden trips keep the tank in the
upper allowed band, all other kinds in the lower one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import Contract, Instance, InstanceError, Vessel

HOURS = 24.0
VOLUME_EPS = 1e-3  # m3; one micro-unit in the model's 1e3 m3 scale

TRIP_KINDS = ("initial", "laden", "ballast", "final")


@dataclass(frozen=True)
class PenaltyParams:
    """Weights of the penalized trip value: ``pi = P - O*w + R*y``."""

    over_delivery_penalty: float = 0.0  # O, money per m3
    potential_reward: float = 0.0  # R, money per candidate discharge

    def __post_init__(self):
        if self.over_delivery_penalty < 0 or self.potential_reward < 0:
            raise ValueError("penalty parameters must be non-negative")


@dataclass(frozen=True)
class Trip:
    id: str
    kind: str
    vessel: str
    start_contract: str | None
    start_port: str
    start_day: int
    end_contract: str | None
    end_port: str
    end_day: int
    speed: float
    fuel_mode: str
    buy_volume: float  # laden: canonical loaded volume
    traded_volume: float  # laden: canonical paid discharge volume
    lng_burn: float
    fuel_money: float
    profit: float
    over_delivery_w: float = 0.0
    potential_y: int = 0
    buy_v_min: float = 0.0
    sell_v_max: float = 0.0

    @property
    def laden(self) -> bool:
        return self.kind == "laden"


@dataclass
class TripSet:
    """All generated trips plus the index structures the models consume."""

    trips: list[Trip]
    w: np.ndarray
    y: np.ndarray
    profit: np.ndarray
    laden_by_contract: dict[str, list[int]]  # trade-once sets
    arrivals: dict[tuple[str, str, int], list[int]]
    departures: dict[tuple[str, str, int], list[int]]
    initials: dict[str, list[int]]
    finals: dict[str, list[int]]
    service_days: dict[str, list[int]]
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.trips)

    def penalized(self, params: PenaltyParams) -> np.ndarray:
        """Vector of pi_t = P_t - O*w_t + R*y_t over all trips."""
        return (
            self.profit
            - params.over_delivery_penalty * self.w
            + params.potential_reward * self.y
        )


def travel_time(c_i: Contract, c_j: Contract) -> int:
    """Midpoint-to-midpoint sailing days between two contracts, minus the
    operation day; negative means the pair cannot be chained."""
    return (
        c_j.release
        - c_i.release
        + (c_j.deadline - c_j.release) // 2
        - (c_i.deadline - c_i.release) // 2
        - 1
    )


def select_speed(
    vessel: Vessel, mode: str, laden: bool, distance: float, time_days: float
) -> float | None:
    """Smallest table speed covering ``distance`` within ``time_days``.

    Returns None when no admissible speed exists (including negative or
    zero time with a positive distance).
    """
    speeds = vessel.speeds(mode, laden)
    if not speeds:
        return None
    if distance <= 0:
        return speeds[0] if time_days >= 0 else None
    if time_days <= 0:
        return None
    required = distance / (HOURS * time_days)
    for s in speeds:
        if s >= required - 1e-12:
            return s
    return None


@dataclass(frozen=True)
class LegBurn:
    lng_used: float
    fuel_cost: float


def leg_burn(
    vessel: Vessel,
    mode: str,
    laden: bool,
    speed: float,
    sail_hours: float,
    idle_hours: float,
) -> LegBurn:
    """LNG use and non-LNG fuel cost of one sailing leg plus idle time."""
    row = vessel.row(mode, laden, speed)  # raises InstanceError if missing
    lng = sail_hours * (row.consumption + row.boil_off) + idle_hours * (
        vessel.idle_boil_off / HOURS
    )
    return LegBurn(lng_used=lng, fuel_cost=sail_hours * row.fuel_cost_rate)


def trip_burn(
    vessel: Vessel,
    mode: str,
    laden: bool,
    distance: float,
    sail_window_days: int,
    terminal: bool = False,
) -> tuple[float, float, float] | None:
    """(speed, lng, fuel money) of a trip leg, or None when infeasible.

    ``sail_window_days`` full days are available for sailing and waiting;
    the operation day at the end call adds one more day of idle boil-off.
    Terminal legs stop accounting at arrival (no waiting, no operation).
    """
    speed = select_speed(vessel, mode, laden, distance, sail_window_days)
    if speed is None:
        return None
    sail_hours = distance / speed if distance > 0 else 0.0
    idle_hours = 0.0 if terminal else sail_window_days * HOURS - sail_hours + HOURS
    burn = leg_burn(vessel, mode, laden, speed, sail_hours, max(idle_hours, 0.0))
    return speed, burn.lng_used, burn.fuel_cost


def laden_volume_plan(
    vessel: Vessel,
    buy: Contract,
    sell: Contract,
    burn: float,
    residual: float = 0.0,
) -> tuple[float, float, float] | None:
    """Canonical (load, paid discharge, dumped excess) of a laden trip.

    Loads the amount that fills the sell at arrival when possible, subject
    to the buy bounds, tank fill limit and the upper sloshing band; the
    discharge takes the maximum the sell contract absorbs.
    """
    lower = max(buy.v_min, vessel.high_band_bottom + burn - residual)
    upper = min(buy.v_max, vessel.max_onboard - residual)
    if lower > upper + VOLUME_EPS:
        return None
    v_buy = min(max(sell.v_max + burn - residual, lower), upper)
    arrival = residual + v_buy - burn
    v_sell = min(sell.v_max, arrival)
    if v_sell < sell.v_min - VOLUME_EPS:
        return None
    return v_buy, v_sell, arrival - v_sell


def over_delivery(trip: Trip) -> float:
    """Forced over-delivery if no small discharge rescues the trip:
    ``max(0, v_min_buy - v_max_sell - burn)``."""
    if trip.kind != "laden":
        return 0.0
    return max(0.0, trip.buy_v_min - trip.sell_v_max - trip.lng_burn)


def multi_destination_potential(trip: Trip, instance: Instance) -> int:
    """Number of small sells individually insertable between the trip's
    endpoints, using detour timing at the vessel's maximum speed."""
    if trip.kind not in ("laden", "ballast"):
        return 0
    vessel = instance.vessel(trip.vessel)
    vmax = vessel.max_speed()
    count = 0
    for c in instance.small_sells:
        m = c.midpoint_day
        if not (trip.start_day < m < trip.end_day):
            continue
        d1 = instance.distance(trip.start_port, c.port)
        d2 = instance.distance(c.port, trip.end_port)
        span1 = m - trip.start_day - 1
        span2 = trip.end_day - m - 1
        if d1 > vmax * HOURS * span1 + 1e-9 or d2 > vmax * HOURS * span2 + 1e-9:
            continue
        count += 1
    return count


def trip_profit(trip: Trip, instance: Instance) -> float:
    """Recompute a trip's profit from instance data (oracle for tests)."""
    vessel = instance.vessel(trip.vessel)
    if trip.kind == "laden":
        buy = instance.contract(trip.start_contract)
        sell = instance.contract(trip.end_contract)
        return (
            sell.unit_price(trip.end_day) * trip.traded_volume
            - buy.unit_price(trip.start_day) * trip.buy_volume
            - trip.fuel_money
        )
    if trip.kind == "initial":
        return -trip.fuel_money
    # ballast and final trips: the burned LNG is replenished (or reserved)
    # at the start port's free price on the start day
    return (
        -instance.free_price(trip.start_port, trip.start_day) * trip.lng_burn
        - trip.fuel_money
    )


def penalize(trip: Trip, params: PenaltyParams) -> float:
    """Penalized trip value pi_t = P_t - O*w_t + R*y_t."""
    return (
        trip.profit
        - params.over_delivery_penalty * trip.over_delivery_w
        + params.potential_reward * trip.potential_y
    )


def _port_index(instance: Instance) -> tuple[dict[str, int], np.ndarray]:
    ids = [p.id for p in instance.ports]
    index = {pid: i for i, pid in enumerate(ids)}
    n = len(ids)
    dist = np.zeros((n, n))
    for i, a in enumerate(ids):
        for j, b in enumerate(ids):
            if i != j:
                dist[i, j] = instance.distance(a, b)
    return index, dist


def _contract_day_table(
    contracts: list[Contract],
    vessel: Vessel,
    port_index: dict[str, int],
) -> dict[str, np.ndarray]:
    """Flat arrays over all (contract, service day) combinations."""
    idx, days, ports, price, v_min, v_max = [], [], [], [], [], []
    for k, c in enumerate(contracts):
        for d in c.window_days:
            if d < vessel.rent_start or d > vessel.rent_end:
                continue
            idx.append(k)
            days.append(d)
            ports.append(port_index[c.port])
            price.append(c.unit_price(d))
            v_min.append(c.v_min)
            v_max.append(c.v_max)
    return {
        "contract": np.array(idx, dtype=int),
        "day": np.array(days, dtype=int),
        "port": np.array(ports, dtype=int),
        "price": np.array(price),
        "v_min": np.array(v_min),
        "v_max": np.array(v_max),
    }


def _mode_burn_arrays(
    vessel: Vessel,
    mode: str,
    laden: bool,
    dist: np.ndarray,
    span: np.ndarray,
    terminal: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized trip_burn over distance/span arrays.

    Returns (feasible mask, speed, lng, fuel money). Terminal legs stop
    accounting at arrival: no waiting idle and no end-operation day.
    """
    speeds = np.array(vessel.speeds(mode, laden))
    rows = [vessel.row(mode, laden, s) for s in speeds]
    cons = np.array([r.consumption + r.boil_off for r in rows])
    fuel_rate = np.array([r.fuel_cost_rate for r in rows])

    with np.errstate(divide="ignore", invalid="ignore"):
        required = np.where(span > 0, dist / (HOURS * np.maximum(span, 1)), np.inf)
    required = np.where(dist <= 0, 0.0, required)
    pick = np.searchsorted(speeds, required - 1e-12)
    feasible = (span >= 0) & (pick < len(speeds))
    pick = np.minimum(pick, len(speeds) - 1)
    speed = speeds[pick]
    sail_hours = np.where(dist > 0, dist / speed, 0.0)
    if terminal:
        idle_hours = np.zeros_like(sail_hours)
    else:
        idle_hours = span * HOURS - sail_hours + HOURS
    lng = sail_hours * cons[pick] + idle_hours * (vessel.idle_boil_off / HOURS)
    fuel = sail_hours * fuel_rate[pick]
    return feasible, speed, lng, fuel


def generate_trips(instance: Instance) -> TripSet:
    """Enumerate every feasible trip of the four kinds for every vessel,
    fuel mode and admissible pair of service days.

    Laden trips pair buys with non-small sells (small discharges belong to
    the insertion stage); over-delivering pairs are kept. All trips respect
    the speed table, sloshing bands, rent intervals and tank capacity.
    """
    port_index, dist_matrix = _port_index(instance)
    buys = instance.buys
    big_sells = instance.big_sells
    smalls = instance.small_sells
    small_mid = np.array([c.midpoint_day for c in smalls], dtype=int)
    small_port = np.array([port_index[c.port] for c in smalls], dtype=int)

    trips: list[Trip] = []

    def cross(a: dict, b: dict) -> tuple[np.ndarray, np.ndarray]:
        ia, ib = np.meshgrid(
            np.arange(len(a["day"])), np.arange(len(b["day"])), indexing="ij"
        )
        return ia.ravel(), ib.ravel()

    def potential_counts(
        vessel: Vessel,
        p_start: np.ndarray,
        d_start: np.ndarray,
        p_end: np.ndarray,
        d_end: np.ndarray,
    ) -> np.ndarray:
        if len(smalls) == 0 or len(d_start) == 0:
            return np.zeros(len(d_start), dtype=int)
        vmax = vessel.max_speed()
        m = small_mid[None, :]
        span1 = m - d_start[:, None] - 1
        span2 = d_end[:, None] - m - 1
        d1 = dist_matrix[p_start[:, None], small_port[None, :]]
        d2 = dist_matrix[small_port[None, :], p_end[:, None]]
        ok = (
            (m > d_start[:, None])
            & (m < d_end[:, None])
            & (d1 <= vmax * HOURS * np.maximum(span1, 0) + 1e-9)
            & (d2 <= vmax * HOURS * np.maximum(span2, 0) + 1e-9)
        )
        return ok.sum(axis=1).astype(int)

    for vessel in instance.vessels:
        bd = _contract_day_table(buys, vessel, port_index)
        sd = _contract_day_table(big_sells, vessel, port_index)
        vol, fill_cap = vessel.capacity, vessel.max_onboard
        hi_bottom = vessel.high_band_bottom
        lo_top = vessel.low_band_top
        start_in_low_band = vessel.initial_volume <= lo_top + VOLUME_EPS

        # laden candidates share day pairs across modes; potential y too
        ib, isl = cross(bd, sd)
        laden_span = sd["day"][isl] - bd["day"][ib] - 1
        laden_dist = dist_matrix[bd["port"][ib], sd["port"][isl]]
        laden_ok_time = laden_span >= 0
        y_laden = None

        for mode in vessel.modes():
            feas, speed, lng, fuel = _mode_burn_arrays(
                vessel, mode, True, laden_dist, laden_span
            )
            feas &= laden_ok_time
            lower = np.maximum(bd["v_min"][ib], hi_bottom + lng)
            upper = np.minimum(bd["v_max"][ib], fill_cap)
            v_buy = np.clip(sd["v_max"][isl] + lng, lower, upper)
            arrival = v_buy - lng
            v_sell = np.minimum(sd["v_max"][isl], arrival)
            feas &= lower <= upper + VOLUME_EPS
            feas &= v_sell >= sd["v_min"][isl] - VOLUME_EPS
            if y_laden is None:
                y_laden = potential_counts(
                    vessel,
                    bd["port"][ib],
                    bd["day"][ib],
                    sd["port"][isl],
                    sd["day"][isl],
                )
            profit = sd["price"][isl] * v_sell - bd["price"][ib] * v_buy - fuel
            w = np.maximum(0.0, bd["v_min"][ib] - sd["v_max"][isl] - lng)
            for k in np.flatnonzero(feas):
                b = buys[bd["contract"][ib[k]]]
                s = big_sells[sd["contract"][isl[k]]]
                trips.append(
                    Trip(
                        id="",
                        kind="laden",
                        vessel=vessel.id,
                        start_contract=b.id,
                        start_port=b.port,
                        start_day=int(bd["day"][ib[k]]),
                        end_contract=s.id,
                        end_port=s.port,
                        end_day=int(sd["day"][isl[k]]),
                        speed=float(speed[k]),
                        fuel_mode=mode,
                        buy_volume=float(v_buy[k]),
                        traded_volume=float(v_sell[k]),
                        lng_burn=float(lng[k]),
                        fuel_money=float(fuel[k]),
                        profit=float(profit[k]),
                        over_delivery_w=float(w[k]),
                        potential_y=int(y_laden[k]),
                        buy_v_min=b.v_min,
                        sell_v_max=s.v_max,
                    )
                )

        # ballast: sell -> next buy
        isl, ib = cross(sd, bd)
        bal_span = bd["day"][ib] - sd["day"][isl] - 1
        bal_dist = dist_matrix[sd["port"][isl], bd["port"][ib]]
        free_at_start = np.array(
            [
                instance.free_price(big_sells[ci].port, int(d))
                for ci, d in zip(sd["contract"], sd["day"])
            ]
        )
        y_ballast = None
        for mode in vessel.modes():
            feas, speed, lng, fuel = _mode_burn_arrays(
                vessel, mode, False, bal_dist, bal_span
            )
            feas &= bal_span >= 0
            feas &= lng <= lo_top + VOLUME_EPS
            if y_ballast is None:
                y_ballast = potential_counts(
                    vessel,
                    sd["port"][isl],
                    sd["day"][isl],
                    bd["port"][ib],
                    bd["day"][ib],
                )
            profit = -free_at_start[isl] * lng - fuel
            for k in np.flatnonzero(feas):
                s = big_sells[sd["contract"][isl[k]]]
                b = buys[bd["contract"][ib[k]]]
                trips.append(
                    Trip(
                        id="",
                        kind="ballast",
                        vessel=vessel.id,
                        start_contract=s.id,
                        start_port=s.port,
                        start_day=int(sd["day"][isl[k]]),
                        end_contract=b.id,
                        end_port=b.port,
                        end_day=int(bd["day"][ib[k]]),
                        speed=float(speed[k]),
                        fuel_mode=mode,
                        buy_volume=0.0,
                        traded_volume=0.0,
                        lng_burn=float(lng[k]),
                        fuel_money=float(fuel[k]),
                        profit=float(profit[k]),
                        potential_y=int(y_ballast[k]),
                    )
                )

        # initial: start port -> first buy (sails in the low band)
        if start_in_low_band:
            init_span = bd["day"] - vessel.rent_start
            init_dist = dist_matrix[port_index[vessel.initial_port], bd["port"]]
            for mode in vessel.modes():
                feas, speed, lng, fuel = _mode_burn_arrays(
                    vessel, mode, False, init_dist, init_span
                )
                feas &= init_span >= 0
                feas &= lng <= vessel.initial_volume + VOLUME_EPS
                for k in np.flatnonzero(feas):
                    b = buys[bd["contract"][k]]
                    trips.append(
                        Trip(
                            id="",
                            kind="initial",
                            vessel=vessel.id,
                            start_contract=None,
                            start_port=vessel.initial_port,
                            start_day=vessel.rent_start,
                            end_contract=b.id,
                            end_port=b.port,
                            end_day=int(bd["day"][k]),
                            speed=float(speed[k]),
                            fuel_mode=mode,
                            buy_volume=0.0,
                            traded_volume=0.0,
                            lng_burn=float(lng[k]),
                            fuel_money=float(fuel[k]),
                            profit=float(-fuel[k]),
                        )
                    )

        # final: sell -> end port (sail hours only, no end operation)
        fin_span = vessel.rent_end - sd["day"]
        fin_dist = dist_matrix[sd["port"], port_index[vessel.final_port]]
        free_fin = np.array(
            [
                instance.free_price(big_sells[ci].port, int(d))
                for ci, d in zip(sd["contract"], sd["day"])
            ]
        )
        for mode in vessel.modes():
            feas, speed, lng, fuel = _mode_burn_arrays(
                vessel, mode, False, fin_dist, fin_span, terminal=True
            )
            feas &= fin_span >= 0
            feas &= lng <= lo_top + VOLUME_EPS
            profit = -free_fin * lng - fuel
            for k in np.flatnonzero(feas):
                s = big_sells[sd["contract"][k]]
                trips.append(
                    Trip(
                        id="",
                        kind="final",
                        vessel=vessel.id,
                        start_contract=s.id,
                        start_port=s.port,
                        start_day=int(sd["day"][k]),
                        end_contract=None,
                        end_port=vessel.final_port,
                        end_day=vessel.rent_end,
                        speed=float(speed[k]),
                        fuel_mode=mode,
                        buy_volume=0.0,
                        traded_volume=0.0,
                        lng_burn=float(lng[k]),
                        fuel_money=float(fuel[k]),
                        profit=float(profit[k]),
                    )
                )

    order = sorted(
        range(len(trips)),
        key=lambda i: (
            trips[i].vessel,
            TRIP_KINDS.index(trips[i].kind),
            trips[i].start_day,
            trips[i].end_day,
            trips[i].start_contract or "",
            trips[i].end_contract or "",
            trips[i].fuel_mode,
        ),
    )
    trips = [replace(trips[i], id=f"t{n:06d}") for n, i in enumerate(order)]
    return _index_trips(instance, trips)


def _index_trips(instance: Instance, trips: list[Trip]) -> TripSet:
    laden_by_contract: dict[str, list[int]] = {}
    arrivals: dict[tuple[str, str, int], list[int]] = {}
    departures: dict[tuple[str, str, int], list[int]] = {}
    initials: dict[str, list[int]] = {}
    finals: dict[str, list[int]] = {}
    for i, t in enumerate(trips):
        if t.kind == "laden":
            laden_by_contract.setdefault(t.start_contract, []).append(i)
            laden_by_contract.setdefault(t.end_contract, []).append(i)
        if t.kind == "initial":
            initials.setdefault(t.vessel, []).append(i)
        else:
            departures.setdefault(
                (t.vessel, t.start_contract, t.start_day), []
            ).append(i)
        if t.kind == "final":
            finals.setdefault(t.vessel, []).append(i)
        else:
            arrivals.setdefault((t.vessel, t.end_contract, t.end_day), []).append(i)
    service_days = {c.id: list(c.window_days) for c in instance.contracts}
    return TripSet(
        trips=trips,
        w=np.array([t.over_delivery_w for t in trips]),
        y=np.array([t.potential_y for t in trips], dtype=float),
        profit=np.array([t.profit for t in trips]),
        laden_by_contract=laden_by_contract,
        arrivals=arrivals,
        departures=departures,
        initials=initials,
        finals=finals,
        service_days=service_days,
    )


def dump_trips_csv(tripset: TripSet) -> str:
    """One CSV row per trip with all attributes and penalty metrics."""
    lines = [
        "id,kind,vessel,start_contract,start_port,start_day,end_contract,"
        "end_port,end_day,speed,fuel_mode,buy_volume,traded_volume,lng_burn,"
        "fuel_money,profit,over_delivery_w,potential_y"
    ]
    for t in tripset.trips:
        lines.append(
            f"{t.id},{t.kind},{t.vessel},{t.start_contract or ''},{t.start_port},"
            f"{t.start_day},{t.end_contract or ''},{t.end_port},{t.end_day},"
            f"{t.speed},{t.fuel_mode},{t.buy_volume},{t.traded_volume},"
            f"{t.lng_burn},{t.fuel_money},{t.profit},{t.over_delivery_w},"
            f"{t.potential_y}"
        )
    return "\n".join(lines) + "\n"
