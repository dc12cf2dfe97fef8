"""Stage one: arc-flow selection of big buy/sell pairs.

One binary per generated trip; the objective is the penalized trip value.
Constraint families: each contract trades at most once, vessel movement
is flow-conserved at every (vessel, contract, day) node, and every used
vessel leaves its start location once and reaches its end location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import Instance
from .milp import MilpModel, MilpSolution, SolveError, SolveOptions, solve
from .schedule import PortCall, Schedule, VesselPlan
from .trips import PenaltyParams, Trip, TripSet, laden_volume_plan

MONEY_SCALE = 1e-6  # model money unit: 1e6 USD


@dataclass(frozen=True)
class BigPairSolution:
    """Chosen trips arranged into per-vessel routes.

    ``routes`` orders each vessel's trips initial, laden, (ballast,
    laden)*, final; vessels without trips are absent. ``pairs`` lists the
    (start contract, end contract) adjacencies excluding terminal legs.
    """

    routes: dict[str, list[Trip]]
    penalized_objective: float  # USD, value of the solved objective
    unpenalized_profit: float  # USD, sum of raw trip profits
    status: str

    @property
    def chosen(self) -> list[Trip]:
        return [t for route in self.routes.values() for t in route]

    def pairs(self, vessel: str) -> list[Trip]:
        """Laden and ballast trips of a vessel in route order."""
        return [t for t in self.routes.get(vessel, []) if t.kind in ("laden", "ballast")]

    @property
    def big_contracts(self) -> set[str]:
        out: set[str] = set()
        for route in self.routes.values():
            for t in route:
                if t.start_contract:
                    out.add(t.start_contract)
                if t.end_contract:
                    out.add(t.end_contract)
        return out

    def buys_of(self, vessel: str) -> list[str]:
        return [t.start_contract for t in self.routes.get(vessel, []) if t.kind == "laden"]

    def sells_of(self, vessel: str) -> list[str]:
        return [t.end_contract for t in self.routes.get(vessel, []) if t.kind == "laden"]


def build_big_pairs_model(trips: TripSet, params: PenaltyParams) -> MilpModel:
    """Instantiate the trip-selection ILP over a penalized trip set."""
    cache = trips._cache.get("bigpairs_rows")
    if cache is None:
        rows, cols, vals = [], [], []
        senses: list[str] = []
        rhs: list[float] = []
        names: list[str] = []

        def add_row(name: str, idxs: list[tuple[int, float]], sense: str, b: float):
            r = len(rhs)
            for j, v in idxs:
                rows.append(r)
                cols.append(j)
                vals.append(v)
            senses.append(sense)
            rhs.append(b)
            names.append(name)

        for cid in sorted(trips.service_days):
            add_row(
                f"once[{cid}]",
                [(j, 1.0) for j in trips.laden_by_contract.get(cid, [])],
                "<=",
                1.0,
            )

        vessels = sorted(trips.initials.keys() | trips.finals.keys())
        vessels_all = sorted(
            {t.vessel for t in trips.trips} | set(vessels)
        )
        for vid in vessels_all:
            for cid in sorted(trips.service_days):
                for d in trips.service_days[cid]:
                    arr = trips.arrivals.get((vid, cid, d), [])
                    dep = trips.departures.get((vid, cid, d), [])
                    add_row(
                        f"flow[{vid},{cid},{d}]",
                        [(j, 1.0) for j in arr] + [(j, -1.0) for j in dep],
                        "==",
                        0.0,
                    )
            ini = trips.initials.get(vid, [])
            fin = trips.finals.get(vid, [])
            add_row(
                f"edge_order[{vid}]",
                [(j, 1.0) for j in ini] + [(j, -1.0) for j in fin],
                "<=",
                0.0,
            )
            add_row(f"edge_once[{vid}]", [(j, 1.0) for j in fin], "<=", 1.0)

        a = sparse.csr_matrix(
            (vals, (rows, cols)), shape=(len(rhs), len(trips))
        )
        cache = (a, tuple(senses), np.array(rhs), tuple(names))
        trips._cache["bigpairs_rows"] = cache

    a, senses, rhs, names = cache
    n = len(trips)
    return MilpModel(
        var_ids=tuple(t.id for t in trips.trips),
        integer=np.ones(n, dtype=bool),
        lower=np.zeros(n),
        upper=np.ones(n),
        objective=trips.penalized(params) * MONEY_SCALE,
        a_matrix=a,
        senses=senses,
        rhs=rhs,
        row_names=names,
    )


def solve_big_pairs(
    instance: Instance,
    trips: TripSet,
    params: PenaltyParams | None = None,
    options: SolveOptions | None = None,
) -> BigPairSolution:
    """Solve the pair-selection ILP and extract ordered vessel routes."""
    params = params or PenaltyParams()
    model = build_big_pairs_model(trips, params)
    sol = solve(model, options)
    if not sol.ok:
        return BigPairSolution(
            routes={}, penalized_objective=0.0, unpenalized_profit=0.0, status=sol.status
        )

    chosen = [
        trips.trips[j]
        for j, t in enumerate(trips.trips)
        if sol.assignment[t.id] > 0.5
    ]
    routes: dict[str, list[Trip]] = {}
    for t in chosen:
        routes.setdefault(t.vessel, []).append(t)
    for vid in routes:
        routes[vid].sort(key=lambda t: (t.start_day, t.end_day))
    routes = dict(sorted(routes.items()))
    _check_routes(routes)

    penalized = sum(
        t.profit
        - params.over_delivery_penalty * t.over_delivery_w
        + params.potential_reward * t.potential_y
        for t in chosen
    )
    if abs(penalized * MONEY_SCALE - sol.objective_value) > 1e-6 * max(
        1.0, abs(sol.objective_value)
    ):
        raise SolveError("route extraction does not reproduce the objective")
    return BigPairSolution(
        routes=routes,
        penalized_objective=penalized,
        unpenalized_profit=sum(t.profit for t in chosen),
        status=sol.status,
    )


def _check_routes(routes: dict[str, list[Trip]]) -> None:
    """Re-verify solution invariants outside the solver."""
    seen: set[str] = set()
    for vid, route in routes.items():
        kinds = [t.kind for t in route]
        middle = kinds[1:-1]
        ok = (
            len(kinds) >= 3
            and kinds[0] == "initial"
            and kinds[-1] == "final"
            and len(middle) % 2 == 1
            and all(
                k == ("laden" if i % 2 == 0 else "ballast")
                for i, k in enumerate(middle)
            )
        )
        if not ok:
            raise SolveError(f"vessel {vid}: malformed route {kinds}")
        for a, b in zip(route, route[1:]):
            if a.end_contract != b.start_contract or a.end_day != b.start_day:
                raise SolveError(f"vessel {vid}: disconnected route")
        for t in route:
            if t.kind == "laden":
                for cid in (t.start_contract, t.end_contract):
                    if cid in seen:
                        raise SolveError(f"contract {cid} traded twice")
                    seen.add(cid)


def bigpairs_schedule(
    solution: BigPairSolution, instance: Instance
) -> Schedule:
    """Lift a big-pairs solution to an executable schedule.

    Each sell discharges everything onboard (paid up to the contract
    maximum, the rest dumped as over-delivery) and buys back exactly the
    LNG the next leg burns, so vessels arrive at every buy empty; the
    residual of the initial leg shifts the first load accordingly.
    """
    plans = []
    for vid, route in sorted(solution.routes.items()):
        vessel = instance.vessel(vid)
        calls: list[PortCall] = []
        onboard = vessel.initial_volume
        for i, t in enumerate(route):
            if t.kind == "final":
                break
            onboard -= t.lng_burn  # leg into this call, op day included
            nxt = route[i + 1]
            if t.kind in ("initial", "ballast"):  # arriving at a buy
                buy = instance.contract(t.end_contract)
                sell = instance.contract(nxt.end_contract)
                plan = laden_volume_plan(
                    vessel, buy, sell, nxt.lng_burn, residual=onboard
                )
                if plan is None:
                    raise SolveError(
                        f"vessel {vid}: no feasible volume plan at {buy.id}"
                    )
                v_buy, _, _ = plan
                calls.append(
                    PortCall(
                        contract=buy.id,
                        port=buy.port,
                        day=t.end_day,
                        kind="buy",
                        volume=v_buy,
                        free_purchase=0.0,
                        over_delivery=0.0,
                        onboard_before=onboard,
                        onboard_after=onboard + v_buy,
                        leg_speed=t.speed,
                        leg_mode=t.fuel_mode,
                    )
                )
                onboard += v_buy
            else:  # laden arriving at a sell
                sell = instance.contract(t.end_contract)
                paid = min(sell.v_max, onboard)
                dump = onboard - paid
                refuel = nxt.lng_burn  # next leg is ballast or final
                calls.append(
                    PortCall(
                        contract=sell.id,
                        port=sell.port,
                        day=t.end_day,
                        kind="sell",
                        volume=paid,
                        free_purchase=refuel,
                        over_delivery=dump,
                        onboard_before=onboard,
                        onboard_after=refuel,
                        leg_speed=t.speed,
                        leg_mode=t.fuel_mode,
                    )
                )
                onboard = refuel
        final = route[-1] if route else None
        plans.append(
            VesselPlan(
                vessel=vid,
                calls=tuple(calls),
                final_speed=final.speed if final else None,
                final_mode=final.fuel_mode if final else None,
            )
        )
    for vessel in instance.vessels:
        if vessel.id not in solution.routes:
            plans.append(VesselPlan(vessel=vessel.id, calls=()))
    plans.sort(key=lambda p: p.vessel)
    return Schedule(
        plans=tuple(plans),
        provenance="bigpairs",
        meta={"unpenalized_profit": solution.unpenalized_profit},
    )
