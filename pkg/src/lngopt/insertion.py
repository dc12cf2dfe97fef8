"""Stage two: small-discharge insertion around a fixed big-pairs solution.

The neighborhood keeps every big trade and its timing, re-optimizes all
traded volumes as continuous variables, and routes leftover tank content
into unassigned small sell contracts visited at the midpoints of their
windows. Sailing legs inside one big trip inherit that trip's fuel mode;
each leg runs at the slowest table speed that keeps the timing.

Model shape: binary leg indicators, continuous volumes; flow conservation
at the fixed big calls, at-most-once visits for small contracts, and
telescoping tank-volume identities per (buy, sell) / (sell, buy) pair,
with band bounds keeping the tank outside the sloshing zone.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bigpairs import MONEY_SCALE, BigPairSolution
from .data import Contract, Instance, Vessel
from .milp import MilpModel, SolveOptions, build, solve
from .schedule import PortCall, Schedule, VesselPlan
from .trips import Trip, trip_burn

VOL_SCALE = 1e-3  # model volume unit: 1e3 m3
PRICE_SCALE = 1e-3  # (USD per m3) -> (1e6 USD per 1e3 m3)


class InsertionInfeasible(RuntimeError):
    """The neighborhood model has no feasible volume completion."""


@dataclass(frozen=True)
class Leg:
    id: str
    vessel: str
    trip_id: str | None
    src: str  # contract id or terminal marker
    dst: str
    src_day: int
    dst_day: int
    speed: float
    mode: str
    lng: float
    fuel_money: float
    kind: str  # direct | to_small | small_small | from_small | initial | final


@dataclass(frozen=True)
class TripNeighborhood:
    trip: Trip
    candidates: tuple[str, ...]  # insertable small sells
    legs: tuple[Leg, ...]  # includes the direct endpoint relay arc


@dataclass(frozen=True)
class Neighborhood:
    big: BigPairSolution
    by_vessel: dict[str, list[TripNeighborhood]]
    initial_legs: dict[str, Leg]
    final_legs: dict[str, Leg]
    pool: tuple[str, ...]  # candidate small sells, union over vessels

    def vessel_candidates(self, vessel: str) -> set[str]:
        out: set[str] = set()
        for tn in self.by_vessel.get(vessel, []):
            out.update(tn.candidates)
        return out


def _detour_leg(
    instance: Instance,
    vessel: Vessel,
    trip: Trip,
    src: str,
    src_port: str,
    src_day: int,
    dst: str,
    dst_port: str,
    dst_day: int,
    kind: str,
) -> Leg | None:
    span = dst_day - src_day - 1
    if span < 0:
        return None
    burn = trip_burn(
        vessel,
        trip.fuel_mode,
        trip.kind == "laden",
        instance.distance(src_port, dst_port),
        span,
    )
    if burn is None:
        return None
    speed, lng, fuel = burn
    return Leg(
        id=f"{vessel.id}|{trip.id}|{src}>{dst}",
        vessel=vessel.id,
        trip_id=trip.id,
        src=src,
        dst=dst,
        src_day=src_day,
        dst_day=dst_day,
        speed=speed,
        mode=trip.fuel_mode,
        lng=lng,
        fuel_money=fuel,
        kind=kind,
    )


def derive_neighborhood(big: BigPairSolution, instance: Instance) -> Neighborhood:
    """Collect insertable small sells and the sailing legs around each trip."""
    assigned = big.big_contracts
    pool = [
        c for c in instance.sells if instance.is_small_sell(c) and c.id not in assigned
    ]
    pool_by_id = {c.id: c for c in pool}

    by_vessel: dict[str, list[TripNeighborhood]] = {}
    initial_legs: dict[str, Leg] = {}
    final_legs: dict[str, Leg] = {}
    used = set()

    for vid, route in sorted(big.routes.items()):
        vessel = instance.vessel(vid)
        used.add(vid)
        trip_nbs: list[TripNeighborhood] = []
        for trip in route:
            if trip.kind == "initial":
                initial_legs[vid] = Leg(
                    id=f"{vid}|{trip.id}|@start>{trip.end_contract}",
                    vessel=vid,
                    trip_id=trip.id,
                    src="@start",
                    dst=trip.end_contract,
                    src_day=trip.start_day,
                    dst_day=trip.end_day,
                    speed=trip.speed,
                    mode=trip.fuel_mode,
                    lng=trip.lng_burn,
                    fuel_money=trip.fuel_money,
                    kind="initial",
                )
                continue
            if trip.kind == "final":
                final_legs[vid] = Leg(
                    id=f"{vid}|{trip.id}|{trip.start_contract}>@end",
                    vessel=vid,
                    trip_id=trip.id,
                    src=trip.start_contract,
                    dst="@end",
                    src_day=trip.start_day,
                    dst_day=trip.end_day,
                    speed=trip.speed,
                    mode=trip.fuel_mode,
                    lng=trip.lng_burn,
                    fuel_money=trip.fuel_money,
                    kind="final",
                )
                continue

            cands: list[Contract] = []
            in_legs: dict[str, Leg] = {}
            out_legs: dict[str, Leg] = {}
            for c in pool:
                m = c.midpoint_day
                if not (trip.start_day < m < trip.end_day):
                    continue
                leg_in = _detour_leg(
                    instance, vessel, trip,
                    trip.start_contract, trip.start_port, trip.start_day,
                    c.id, c.port, m, "to_small",
                )
                leg_out = _detour_leg(
                    instance, vessel, trip,
                    c.id, c.port, m,
                    trip.end_contract, trip.end_port, trip.end_day, "from_small",
                )
                if leg_in is None or leg_out is None:
                    continue
                cands.append(c)
                in_legs[c.id] = leg_in
                out_legs[c.id] = leg_out

            legs: list[Leg] = [
                Leg(
                    id=f"{vid}|{trip.id}|{trip.start_contract}>{trip.end_contract}",
                    vessel=vid,
                    trip_id=trip.id,
                    src=trip.start_contract,
                    dst=trip.end_contract,
                    src_day=trip.start_day,
                    dst_day=trip.end_day,
                    speed=trip.speed,
                    mode=trip.fuel_mode,
                    lng=trip.lng_burn,
                    fuel_money=trip.fuel_money,
                    kind="direct",
                )
            ]
            for c in cands:
                legs.append(in_legs[c.id])
                legs.append(out_legs[c.id])
            for a in cands:
                for b in cands:
                    if b.midpoint_day <= a.midpoint_day:
                        continue
                    leg = _detour_leg(
                        instance, vessel, trip,
                        a.id, a.port, a.midpoint_day,
                        b.id, b.port, b.midpoint_day, "small_small",
                    )
                    if leg is not None:
                        legs.append(leg)
            trip_nbs.append(
                TripNeighborhood(
                    trip=trip,
                    candidates=tuple(c.id for c in cands),
                    legs=tuple(legs),
                )
            )
        by_vessel[vid] = trip_nbs

    return Neighborhood(
        big=big,
        by_vessel=by_vessel,
        initial_legs=initial_legs,
        final_legs=final_legs,
        pool=tuple(sorted(pool_by_id)),
    )


def default_omega(instance: Instance) -> float:
    """Over-delivery weight: ten times the best unit sell price, making
    zero-waste plans strictly preferred whenever they are feasible."""
    prices = [p for c in instance.sells for p in c.prices.values()]
    return 10.0 * max(prices) if prices else 1.0


def build_insertion_model(
    nb: Neighborhood,
    instance: Instance,
    omega: float | None = None,
    capacity_rule: str = "fill_fraction",
) -> MilpModel:
    """Instantiate the insertion MILP for a derived neighborhood."""
    omega = default_omega(instance) if omega is None else omega
    variables: list[dict] = []
    constraints: list[dict] = []
    objective: dict[str, float] = {}

    def day_of(vid: str, cid: str) -> int:
        for trip in nb.big.routes[vid]:
            if trip.start_contract == cid:
                return trip.start_day
            if trip.end_contract == cid:
                return trip.end_day
        raise KeyError(cid)

    for vid, trip_nbs in sorted(nb.by_vessel.items()):
        vessel = instance.vessel(vid)
        cap_ub = (
            vessel.max_onboard if capacity_rule == "fill_fraction" else vessel.capacity
        ) * VOL_SCALE
        lo_top = vessel.low_band_top * VOL_SCALE
        hi_bottom = vessel.high_band_bottom * VOL_SCALE
        route = nb.big.routes[vid]
        bigs = [t.end_contract for t in route if t.kind != "final"]

        # big contract volumes, out-of-contract purchases, over-delivery
        for cid in bigs:
            c = instance.contract(cid)
            d = day_of(vid, cid)
            variables.append(
                {
                    "id": f"V[{cid}]",
                    "kind": "continuous",
                    "lb": c.v_min * VOL_SCALE,
                    "ub": c.v_max * VOL_SCALE,
                }
            )
            variables.append(
                {"id": f"F[{cid}]", "kind": "continuous", "lb": 0.0, "ub": cap_ub}
            )
            sign = 1.0 if c.kind == "sell" else -1.0
            objective[f"V[{cid}]"] = sign * c.unit_price(d) * PRICE_SCALE
            objective[f"F[{cid}]"] = -instance.free_price(c.port, d) * PRICE_SCALE
            if c.kind == "sell":
                variables.append(
                    {"id": f"W[{cid}]", "kind": "continuous", "lb": 0.0, "ub": cap_ub}
                )
                objective[f"W[{cid}]"] = -omega * PRICE_SCALE

        # leg indicators and small discharge volumes
        in_legs: dict[str, list[Leg]] = {}
        out_legs: dict[str, list[Leg]] = {}

        def reg_leg(leg: Leg) -> None:
            variables.append({"id": f"l[{leg.id}]", "kind": "binary"})
            if leg.fuel_money:
                objective[f"l[{leg.id}]"] = -leg.fuel_money * MONEY_SCALE
            in_legs.setdefault(leg.dst, []).append(leg)
            out_legs.setdefault(leg.src, []).append(leg)

        if vid in nb.initial_legs:
            reg_leg(nb.initial_legs[vid])
        for tn in trip_nbs:
            for leg in tn.legs:
                reg_leg(leg)
            for cid in tn.candidates:
                c = instance.contract(cid)
                variables.append(
                    {
                        "id": f"Vs[{vid}|{tn.trip.id}|{cid}]",
                        "kind": "continuous",
                        "lb": 0.0,
                        "ub": c.v_max * VOL_SCALE,
                    }
                )
                objective[f"Vs[{vid}|{tn.trip.id}|{cid}]"] = (
                    c.unit_price(c.midpoint_day) * PRICE_SCALE
                )
        if vid in nb.final_legs:
            reg_leg(nb.final_legs[vid])

        # exactly one leg in and out of every fixed big call
        for cid in bigs:
            constraints.append(
                {
                    "name": f"in[{vid},{cid}]",
                    "coeffs": {f"l[{leg.id}]": 1.0 for leg in in_legs.get(cid, [])},
                    "sense": "==",
                    "rhs": 1.0,
                }
            )
            constraints.append(
                {
                    "name": f"out[{vid},{cid}]",
                    "coeffs": {f"l[{leg.id}]": 1.0 for leg in out_legs.get(cid, [])},
                    "sense": "==",
                    "rhs": 1.0,
                }
            )

        # a vessel entering a small contract leaves it
        for cid in sorted(nb.vessel_candidates(vid)):
            coeffs = {f"l[{leg.id}]": 1.0 for leg in in_legs.get(cid, [])}
            for leg in out_legs.get(cid, []):
                coeffs[f"l[{leg.id}]"] = coeffs.get(f"l[{leg.id}]", 0.0) - 1.0
            constraints.append(
                {
                    "name": f"pass[{vid},{cid}]",
                    "coeffs": coeffs,
                    "sense": "==",
                    "rhs": 0.0,
                }
            )

        # small volume forced to zero unless its trip visits the contract
        for tn in trip_nbs:
            trip_leg_out = {leg.src: [] for leg in tn.legs}
            for leg in tn.legs:
                trip_leg_out[leg.src].append(leg)
            for cid in tn.candidates:
                c = instance.contract(cid)
                outs = {
                    f"l[{leg.id}]": 1.0 for leg in trip_leg_out.get(cid, [])
                }
                vs = f"Vs[{vid}|{tn.trip.id}|{cid}]"
                coeffs = {vs: 1.0}
                for k, v in outs.items():
                    coeffs[k] = -c.v_max * VOL_SCALE
                constraints.append(
                    {
                        "name": f"vs_ub[{vs}]",
                        "coeffs": coeffs,
                        "sense": "<=",
                        "rhs": 0.0,
                    }
                )
                coeffs = {vs: 1.0}
                for k, v in outs.items():
                    coeffs[k] = -c.v_min * VOL_SCALE
                constraints.append(
                    {
                        "name": f"vs_lb[{vs}]",
                        "coeffs": coeffs,
                        "sense": ">=",
                        "rhs": 0.0,
                    }
                )

        # pair volume telescoping and band bounds
        v0 = vessel.initial_volume - (
            nb.initial_legs[vid].lng if vid in nb.initial_legs else 0.0
        )
        prev_end: str | None = None
        for p, tn in enumerate(trip_nbs):
            trip = tn.trip
            laden = trip.kind == "laden"
            lb = hi_bottom if laden else 0.0
            ub = cap_ub if laden else lo_top
            s_var, e_var = f"start[{vid},{p}]", f"end[{vid},{p}]"
            variables.append(
                {"id": s_var, "kind": "continuous", "lb": lb, "ub": ub}
            )
            variables.append(
                {"id": e_var, "kind": "continuous", "lb": lb, "ub": ub}
            )
            constraints.append(
                {
                    "name": f"monotone[{vid},{p}]",
                    "coeffs": {s_var: 1.0, e_var: -1.0},
                    "sense": ">=",
                    "rhs": 0.0,
                }
            )
            cid = trip.start_contract
            c = instance.contract(cid)
            coeffs = {s_var: 1.0, f"F[{cid}]": -1.0}
            rhs = 0.0
            if laden:
                coeffs[f"V[{cid}]"] = -1.0
            else:
                coeffs[f"V[{cid}]"] = 1.0
                coeffs[f"W[{cid}]"] = 1.0
            if prev_end is None:
                rhs = v0 * VOL_SCALE
            else:
                coeffs[prev_end] = -1.0
            constraints.append(
                {
                    "name": f"link[{vid},{p}]",
                    "coeffs": coeffs,
                    "sense": "==",
                    "rhs": rhs,
                }
            )
            coeffs = {e_var: 1.0, s_var: -1.0}
            for leg in tn.legs:
                coeffs[f"l[{leg.id}]"] = leg.lng * VOL_SCALE
            for cid2 in tn.candidates:
                coeffs[f"Vs[{vid}|{tn.trip.id}|{cid2}]"] = 1.0
            constraints.append(
                {
                    "name": f"balance[{vid},{p}]",
                    "coeffs": coeffs,
                    "sense": "==",
                    "rhs": 0.0,
                }
            )
            prev_end = e_var

        # departure for the final leg
        if trip_nbs and vid in nb.final_legs:
            last_sell = trip_nbs[-1].trip.end_contract
            lng_final = nb.final_legs[vid].lng
            variables.append(
                {
                    "id": f"fin[{vid}]",
                    "kind": "continuous",
                    "lb": lng_final * VOL_SCALE,
                    "ub": lo_top,
                }
            )
            constraints.append(
                {
                    "name": f"final[{vid}]",
                    "coeffs": {
                        f"fin[{vid}]": 1.0,
                        prev_end: -1.0,
                        f"V[{last_sell}]": 1.0,
                        f"W[{last_sell}]": 1.0,
                        f"F[{last_sell}]": -1.0,
                    },
                    "sense": "==",
                    "rhs": 0.0,
                }
            )

    # small contract served by at most one vessel, entered iff exited
    enter: dict[str, dict[str, float]] = {}
    leave: dict[str, dict[str, float]] = {}
    for vid, trip_nbs in nb.by_vessel.items():
        for tn in trip_nbs:
            for leg in tn.legs:
                if leg.dst in nb.pool:
                    enter.setdefault(leg.dst, {})[f"l[{leg.id}]"] = 1.0
                if leg.src in nb.pool:
                    leave.setdefault(leg.src, {})[f"l[{leg.id}]"] = 1.0
    for cid in sorted(set(enter) | set(leave)):
        constraints.append(
            {
                "name": f"small_in[{cid}]",
                "coeffs": enter.get(cid, {}),
                "sense": "<=",
                "rhs": 1.0,
            }
        )
        constraints.append(
            {
                "name": f"small_out[{cid}]",
                "coeffs": leave.get(cid, {}),
                "sense": "<=",
                "rhs": 1.0,
            }
        )

    return build(
        {
            "variables": variables,
            "constraints": constraints,
            "objective": {"coeffs": objective},
        }
    )


def solve_insertion(
    nb: Neighborhood,
    instance: Instance,
    options: SolveOptions | None = None,
    omega: float | None = None,
    capacity_rule: str = "fill_fraction",
) -> Schedule:
    """Solve the insertion model and assemble the executable schedule.

    The returned schedule's ``meta`` carries the profit decomposition:
    big-trade revenue, purchases, free-LNG cost, small-sale revenue, fuel
    money, the artificial over-delivery penalty and the headline profit
    (all in USD; headline excludes the penalty).
    """
    omega = default_omega(instance) if omega is None else omega
    model = build_insertion_model(nb, instance, omega, capacity_rule)
    sol = solve(model, options)
    if not sol.ok:
        raise InsertionInfeasible(f"insertion model status: {sol.status}")
    get = sol.assignment.get

    revenue = purchases = free_cost = small_rev = fuel = dumped = 0.0
    plans: list[VesselPlan] = []
    for vid, trip_nbs in sorted(nb.by_vessel.items()):
        vessel = instance.vessel(vid)
        route = nb.big.routes[vid]
        init = nb.initial_legs[vid]
        fin_leg = nb.final_legs[vid]
        fuel += init.fuel_money + fin_leg.fuel_money

        calls: list[PortCall] = []
        first_buy = instance.contract(route[0].end_contract)
        onboard = vessel.initial_volume - init.lng
        v_val = get(f"V[{first_buy.id}]", 0.0) / VOL_SCALE
        f_val = get(f"F[{first_buy.id}]", 0.0) / VOL_SCALE
        d = route[0].end_day
        calls.append(
            PortCall(
                contract=first_buy.id,
                port=first_buy.port,
                day=d,
                kind="buy",
                volume=v_val,
                free_purchase=f_val,
                over_delivery=0.0,
                onboard_before=onboard,
                onboard_after=onboard + v_val + f_val,
                leg_speed=init.speed,
                leg_mode=init.mode,
            )
        )
        purchases += first_buy.unit_price(d) * v_val
        free_cost += instance.free_price(first_buy.port, d) * f_val
        onboard += v_val + f_val

        for tn in trip_nbs:
            chosen = [leg for leg in tn.legs if get(f"l[{leg.id}]", 0.0) > 0.5]
            chosen.sort(key=lambda leg: (leg.dst_day, leg.dst))
            for leg in chosen:
                fuel += leg.fuel_money
                before = onboard - leg.lng
                if leg.dst in nb.pool:
                    c = instance.contract(leg.dst)
                    vs = get(f"Vs[{vid}|{tn.trip.id}|{leg.dst}]", 0.0) / VOL_SCALE
                    small_rev += c.unit_price(c.midpoint_day) * vs
                    calls.append(
                        PortCall(
                            contract=c.id,
                            port=c.port,
                            day=leg.dst_day,
                            kind="sell",
                            volume=vs,
                            free_purchase=0.0,
                            over_delivery=0.0,
                            onboard_before=before,
                            onboard_after=before - vs,
                            leg_speed=leg.speed,
                            leg_mode=leg.mode,
                        )
                    )
                    onboard = before - vs
                else:
                    c = instance.contract(leg.dst)
                    dd = leg.dst_day
                    v_val = get(f"V[{c.id}]", 0.0) / VOL_SCALE
                    f_val = get(f"F[{c.id}]", 0.0) / VOL_SCALE
                    if c.kind == "sell":
                        w_val = get(f"W[{c.id}]", 0.0) / VOL_SCALE
                        after = before - v_val - w_val + f_val
                        revenue += c.unit_price(dd) * v_val
                        dumped += w_val
                    else:
                        w_val = 0.0
                        after = before + v_val + f_val
                        purchases += c.unit_price(dd) * v_val
                    free_cost += instance.free_price(c.port, dd) * f_val
                    calls.append(
                        PortCall(
                            contract=c.id,
                            port=c.port,
                            day=dd,
                            kind=c.kind,
                            volume=v_val,
                            free_purchase=f_val,
                            over_delivery=w_val,
                            onboard_before=before,
                            onboard_after=after,
                            leg_speed=leg.speed,
                            leg_mode=leg.mode,
                        )
                    )
                    onboard = after
        plans.append(
            VesselPlan(
                vessel=vid,
                calls=tuple(calls),
                final_speed=fin_leg.speed,
                final_mode=fin_leg.mode,
            )
        )
    for vessel in instance.vessels:
        if vessel.id not in nb.by_vessel:
            plans.append(VesselPlan(vessel=vessel.id, calls=()))
    plans.sort(key=lambda p: p.vessel)

    headline = revenue + small_rev - purchases - free_cost - fuel
    penalty = omega * dumped
    objective_usd = sol.objective_value / MONEY_SCALE
    decomposition_gap = abs((headline - penalty) - objective_usd)
    return Schedule(
        plans=tuple(plans),
        provenance="insertion",
        meta={
            "status": sol.status,
            "revenue": revenue,
            "small_revenue": small_rev,
            "purchase_cost": purchases,
            "free_lng_cost": free_cost,
            "fuel_cost": fuel,
            "over_delivery_volume": dumped,
            "penalty": penalty,
            "headline_profit": headline,
            "objective": objective_usd,
            "decomposition_gap": decomposition_gap,
            "omega": omega,
        },
    )


def audit_insertion(
    nb: Neighborhood,
    instance: Instance,
    schedule: Schedule,
    tolerance: float = 1e-6,
) -> list[str]:
    """Re-verify the model's identities on an extracted schedule.

    Checks, in the model's 1e3 m3 scale: telescoping volume identity per
    pair, sloshing band bounds at pair starts and ends, the final
    departure bound, and single service of every small contract.
    """
    bad: list[str] = []
    tol = tolerance / VOL_SCALE  # compare in m3 with the scaled tolerance
    small_seen: dict[str, str] = {}
    for vid, trip_nbs in sorted(nb.by_vessel.items()):
        vessel = instance.vessel(vid)
        plan = schedule.plan(vid)
        calls = {  # first call of a contract id
            c.contract: c for c in reversed(plan.calls)
        }
        for tn in trip_nbs:
            trip = tn.trip
            start_call = calls[trip.start_contract]
            end_call = calls[trip.end_contract]
            smalls = [
                c
                for c in plan.calls
                if c.contract in tn.candidates
                and trip.start_day < c.day < trip.end_day
            ]
            for c in smalls:
                if c.contract in small_seen:
                    bad.append(f"small {c.contract} served twice")
                small_seen[c.contract] = vid
            lng = start_call.onboard_after - end_call.onboard_before - sum(
                c.volume for c in smalls
            )
            legs_lng = _chosen_legs_lng(tn, [c.contract for c in smalls])
            if legs_lng is None or abs(lng - legs_lng) > tol:
                bad.append(f"telescoping broken at {vid}/{trip.id}")
            lo, hi = (
                (vessel.high_band_bottom, vessel.max_onboard)
                if trip.kind == "laden"
                else (0.0, vessel.low_band_top)
            )
            for label, value in [
                ("start", start_call.onboard_after),
                ("end", end_call.onboard_before),
            ]:
                if not (lo - tol <= value <= hi + tol):
                    bad.append(
                        f"band breach {vid}/{trip.id} {label}: {value:.1f} "
                        f"outside [{lo:.1f},{hi:.1f}]"
                    )
        if trip_nbs:
            fin = nb.final_legs[vid]
            dep = plan.departure_volume
            if not (fin.lng - tol <= dep <= vessel.low_band_top + tol):
                bad.append(f"final departure volume of {vid} out of bounds")
    return bad


def _chosen_legs_lng(tn: TripNeighborhood, visited: list[str]) -> float | None:
    """Total leg burn of the unique path through ``visited`` small calls."""
    # visited smalls arrive in call-day order from the schedule
    stops = [tn.trip.start_contract] + list(visited) + [tn.trip.end_contract]
    by_pair = {(leg.src, leg.dst): leg for leg in tn.legs}
    total = 0.0
    for a, b in zip(stops, stops[1:]):
        leg = by_pair.get((a, b))
        if leg is None:
            return None
        total += leg.lng
    return total
