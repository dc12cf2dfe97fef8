"""Solver-free feasibility checking and profit evaluation for schedules.

This module is the ground-truth oracle the planning stages are audited
against: it re-derives every quantity (leg burns, band membership, trade
arithmetic) from the instance's raw tables and shares no computation code
with the model builders.

Two modes: ``main`` checks the full problem conventions (windows, rent
intervals, terminal locations, speed- and mode-dependent burns); the
``appendix`` mode checks the simplified one-stage model's conventions
(LNG-only sailing, window-midpoint visits, daily burn rates, no terminal
requirements).
"""

from __future__ import annotations

from dataclasses import dataclass

from .data import Instance, Vessel
from .schedule import PortCall, Schedule

HOURS = 24.0
VOL_TOL = 1e-3  # m3, i.e. 1e-6 in the model's 1e3 m3 unit

SEVERITY = [
    "dangling",
    "single_service",
    "kind_mismatch",
    "window",
    "midpoint",
    "rent",
    "operations",
    "speed_missing",
    "travel_time",
    "fuel_mode",
    "volume_bounds",
    "negative_flow",
    "capacity",
    "sloshing",
    "lng_balance",
    "trade_balance",
    "initial_state",
    "final_state",
]


class DanglingReference(KeyError):
    """Schedule references an unknown vessel or contract."""


@dataclass(frozen=True)
class Violation:
    code: str
    vessel: str | None = None
    contract: str | None = None
    day: int | None = None
    measured: float | None = None
    bound: float | None = None
    message: str = ""

    def __str__(self) -> str:
        where = "/".join(x for x in (self.vessel, self.contract) if x)
        return f"[{self.code}] {where} day={self.day}: {self.message}"


@dataclass(frozen=True)
class ViolationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "feasible"
        return "\n".join(str(v) for v in self.violations)


def _sorted(violations: list[Violation]) -> tuple[Violation, ...]:
    return tuple(
        sorted(
            violations,
            key=lambda v: (
                SEVERITY.index(v.code) if v.code in SEVERITY else len(SEVERITY),
                v.vessel or "",
                v.day if v.day is not None else -1,
            ),
        )
    )


def _hourly_idle(vessel: Vessel) -> float:
    return vessel.idle_boil_off / HOURS


def _row(vessel: Vessel, mode: str, laden: bool, speed: float):
    for r in vessel.consumption_table:
        if (
            r.fuel_mode == mode
            and r.laden == laden
            and abs(r.speed - speed) < 1e-9
        ):
            return r
    return None


def validate(
    schedule: Schedule, instance: Instance, mode: str = "main"
) -> ViolationReport:
    """Check a schedule against every operational constraint."""
    if mode not in ("main", "appendix"):
        raise ValueError(f"unknown validation mode {mode!r}")
    out: list[Violation] = []
    served: dict[str, str] = {}
    known = {c.id for c in instance.contracts}

    for plan in schedule.plans:
        try:
            vessel = instance.vessel(plan.vessel)
        except KeyError:
            raise DanglingReference(f"unknown vessel {plan.vessel!r}")
        for call in plan.calls:
            if call.contract not in known:
                raise DanglingReference(f"unknown contract {call.contract!r}")

        for call in plan.calls:
            c = instance.contract(call.contract)
            if call.contract in served:
                out.append(
                    Violation(
                        "single_service",
                        plan.vessel,
                        call.contract,
                        call.day,
                        message=f"already served by {served[call.contract]}",
                    )
                )
            served[call.contract] = plan.vessel
            if c.kind != call.kind:
                out.append(
                    Violation(
                        "kind_mismatch", plan.vessel, c.id, call.day,
                        message=f"call kind {call.kind} vs contract {c.kind}",
                    )
                )
            if mode == "main":
                if not (c.release <= call.day <= c.deadline):
                    out.append(
                        Violation(
                            "window", plan.vessel, c.id, call.day,
                            measured=call.day,
                            message=f"outside [{c.release},{c.deadline}]",
                        )
                    )
                if not (vessel.rent_start <= call.day <= vessel.rent_end):
                    out.append(
                        Violation(
                            "rent", plan.vessel, c.id, call.day,
                            message="outside the rent interval",
                        )
                    )
            else:
                midpoint = c.release + (c.deadline - c.release) // 2
                if call.day != midpoint:
                    out.append(
                        Violation(
                            "midpoint", plan.vessel, c.id, call.day,
                            measured=call.day, bound=midpoint,
                            message="not the window midpoint",
                        )
                    )
            if not (c.v_min - VOL_TOL <= call.volume <= c.v_max + VOL_TOL):
                out.append(
                    Violation(
                        "volume_bounds", plan.vessel, c.id, call.day,
                        measured=call.volume,
                        message=f"volume outside [{c.v_min},{c.v_max}]",
                    )
                )
            if call.free_purchase < -VOL_TOL or call.over_delivery < -VOL_TOL:
                out.append(
                    Violation(
                        "negative_flow", plan.vessel, c.id, call.day,
                        message="negative purchase or over-delivery",
                    )
                )
            if call.kind == "buy" and call.over_delivery > VOL_TOL:
                out.append(
                    Violation(
                        "negative_flow", plan.vessel, c.id, call.day,
                        message="over-delivery recorded at a buy",
                    )
                )

        out.extend(_check_vessel_path(plan, vessel, instance, mode))
    return ViolationReport(violations=_sorted(out))


def _check_vessel_path(plan, vessel: Vessel, instance: Instance, mode: str):
    out: list[Violation] = []
    calls = plan.calls
    if not calls:
        return out
    lo_top = vessel.low_band_top
    hi_bottom = vessel.high_band_bottom
    cap_sail = vessel.fill_fraction * vessel.capacity
    cap_moored = vessel.capacity if mode == "appendix" else cap_sail

    for a, b in zip(calls, calls[1:]):
        if b.day <= a.day:
            out.append(
                Violation(
                    "operations", plan.vessel, b.contract, b.day,
                    message="calls closer than the one-day operation",
                )
            )

    # legs: (from_port, window_days, call, departure_volume, terminal)
    legs: list[tuple[str, int, PortCall | None, float, bool]] = []
    first = calls[0]
    legs.append(
        (
            vessel.initial_port,
            first.day - vessel.rent_start,
            first,
            vessel.initial_volume,
            False,
        )
    )
    for a, b in zip(calls, calls[1:]):
        legs.append((a.port, b.day - a.day - 1, b, a.onboard_after, False))

    for from_port, window, call, depart, _terminal in legs:
        c = instance.contract(call.contract)
        dist = instance.distance(from_port, call.port)
        if window < 0:
            out.append(
                Violation(
                    "travel_time", plan.vessel, call.contract, call.day,
                    message="negative sailing window",
                )
            )
            continue
        if mode == "appendix":
            lng, violations = _appendix_leg(
                vessel, plan.vessel, call, dist, window
            )
            out.extend(violations)
        else:
            lng, violations = _main_leg(
                vessel, plan.vessel, call, dist, window, depart, lo_top, hi_bottom
            )
            out.extend(violations)
        if lng is not None:
            expected = depart - lng
            if abs(call.onboard_before - expected) > VOL_TOL:
                out.append(
                    Violation(
                        "lng_balance", plan.vessel, call.contract, call.day,
                        measured=call.onboard_before, bound=expected,
                        message=(
                            f"arrival volume {call.onboard_before:.3f} != "
                            f"{expected:.3f} from the consumption table"
                        ),
                    )
                )
        # band membership of the sailing segment endpoints
        arrive = call.onboard_before
        in_low = depart <= lo_top + VOL_TOL and arrive >= -VOL_TOL
        in_high = arrive >= hi_bottom - VOL_TOL and depart <= cap_sail + VOL_TOL
        if not (in_low or in_high):
            out.append(
                Violation(
                    "sloshing", plan.vessel, call.contract, call.day,
                    measured=depart,
                    message=(
                        f"sailing segment [{depart:.0f} -> {arrive:.0f}] "
                        f"crosses the forbidden band ({lo_top:.0f},{hi_bottom:.0f})"
                    ),
                )
            )
        if depart > cap_sail + VOL_TOL or arrive < -VOL_TOL:
            out.append(
                Violation(
                    "capacity", plan.vessel, call.contract, call.day,
                    measured=depart, bound=cap_sail,
                    message="tank capacity breached while sailing",
                )
            )

    # trade arithmetic at every call
    for call in calls:
        if call.kind == "buy":
            expected = call.onboard_before + call.volume + call.free_purchase
        else:
            expected = (
                call.onboard_before
                - call.volume
                - call.over_delivery
                + call.free_purchase
            )
        if abs(call.onboard_after - expected) > VOL_TOL:
            out.append(
                Violation(
                    "trade_balance", plan.vessel, call.contract, call.day,
                    measured=call.onboard_after, bound=expected,
                    message="onboard volume after trade inconsistent",
                )
            )
        if call.onboard_after > cap_moored + VOL_TOL or call.onboard_after < -VOL_TOL:
            out.append(
                Violation(
                    "capacity", plan.vessel, call.contract, call.day,
                    measured=call.onboard_after, bound=cap_moored,
                    message="tank capacity breached after trading",
                )
            )

    if mode == "main":
        out.extend(_check_final_leg(plan, vessel, instance, lo_top))
    return out


def _main_leg(vessel, vid, call, dist, window, depart, lo_top, hi_bottom):
    out: list[Violation] = []
    laden = depart >= hi_bottom - VOL_TOL
    row = _row(vessel, call.leg_mode, laden, call.leg_speed)
    if row is None:
        out.append(
            Violation(
                "speed_missing", vid, call.contract, call.day,
                measured=call.leg_speed,
                message=(
                    f"speed {call.leg_speed} not in the {call.leg_mode} "
                    f"{'laden' if laden else 'ballast'} table"
                ),
            )
        )
        return None, out
    if dist > call.leg_speed * HOURS * window + 1e-6:
        out.append(
            Violation(
                "travel_time", vid, call.contract, call.day,
                measured=dist, bound=call.leg_speed * HOURS * window,
                message="distance not coverable in the sailing window",
            )
        )
        return None, out
    sail = dist / call.leg_speed if dist > 0 else 0.0
    idle = window * HOURS - sail + HOURS
    lng = sail * (row.consumption + row.boil_off) + idle * _hourly_idle(vessel)
    return lng, out


def _appendix_leg(vessel, vid, call, dist, window):
    out: list[Violation] = []
    if call.leg_mode != "lng_only":
        out.append(
            Violation(
                "fuel_mode", vid, call.contract, call.day,
                message="appendix mode allows only LNG propulsion",
            )
        )
        return None, out
    row = _row(vessel, "lng_only", True, call.leg_speed)
    if row is None:
        out.append(
            Violation(
                "speed_missing", vid, call.contract, call.day,
                measured=call.leg_speed,
                message="speed not in the LNG table",
            )
        )
        return None, out
    if dist > call.leg_speed * HOURS * window + 1e-6:
        out.append(
            Violation(
                "travel_time", vid, call.contract, call.day,
                measured=dist, bound=call.leg_speed * HOURS * window,
                message="distance not coverable before the midpoint",
            )
        )
        return None, out
    # daily-rate accounting: full window at the leg speed plus one idle day
    lng = window * HOURS * (row.consumption + row.boil_off) + vessel.idle_boil_off
    return lng, out


def _check_final_leg(plan, vessel: Vessel, instance: Instance, lo_top):
    out: list[Violation] = []
    last = plan.calls[-1]
    depart = plan.departure_volume
    if plan.final_speed is None or plan.final_mode is None:
        out.append(
            Violation(
                "final_state", plan.vessel, last.contract, last.day,
                message="used vessel has no leg to its final location",
            )
        )
        return out
    dist = instance.distance(last.port, vessel.final_port)
    window = vessel.rent_end - last.day
    row = _row(vessel, plan.final_mode, False, plan.final_speed)
    if row is None:
        out.append(
            Violation(
                "speed_missing", plan.vessel, last.contract, last.day,
                measured=plan.final_speed,
                message="final leg speed not in the table",
            )
        )
        return out
    if dist > plan.final_speed * HOURS * window + 1e-6:
        out.append(
            Violation(
                "final_state", plan.vessel, last.contract, last.day,
                measured=dist, bound=plan.final_speed * HOURS * window,
                message="final location unreachable before rent end",
            )
        )
        return out
    sail = dist / plan.final_speed if dist > 0 else 0.0
    lng = sail * (row.consumption + row.boil_off)
    if depart - lng < -VOL_TOL:
        out.append(
            Violation(
                "final_state", plan.vessel, last.contract, last.day,
                measured=depart, bound=lng,
                message="not enough LNG onboard for the final leg",
            )
        )
    if depart > lo_top + VOL_TOL:
        out.append(
            Violation(
                "sloshing", plan.vessel, last.contract, last.day,
                measured=depart, bound=lo_top,
                message="final leg departs above the empty band",
            )
        )
    return out


@dataclass(frozen=True)
class ProfitBreakdown:
    revenue: float
    purchase_cost: float
    fuel_cost: float
    free_lng_cost: float
    over_delivery_volume: float

    @property
    def net(self) -> float:
        return (
            self.revenue - self.purchase_cost - self.fuel_cost - self.free_lng_cost
        )


def evaluate_profit(schedule: Schedule, instance: Instance) -> ProfitBreakdown:
    """Recompute cash flows of a schedule from first principles."""
    revenue = purchase = fuel = free_cost = dumped = 0.0
    for plan in schedule.plans:
        vessel = instance.vessel(plan.vessel)
        for call in plan.calls:
            c = instance.contract(call.contract)
            money = c.unit_price(call.day) * call.volume
            if call.kind == "sell":
                revenue += money
            else:
                purchase += money
            free_cost += instance.free_price(call.port, call.day) * call.free_purchase
            dumped += call.over_delivery
        # fuel money along recorded legs
        prev_port = vessel.initial_port
        depart = vessel.initial_volume
        hi_bottom = vessel.high_band_bottom
        for call in plan.calls:
            laden = depart >= hi_bottom - VOL_TOL
            row = _row(vessel, call.leg_mode, laden, call.leg_speed)
            dist = instance.distance(prev_port, call.port)
            if row is not None and dist > 0:
                fuel += dist / call.leg_speed * row.fuel_cost_rate
            prev_port = call.port
            depart = call.onboard_after
        if plan.calls and plan.final_speed is not None:
            row = _row(vessel, plan.final_mode, False, plan.final_speed)
            dist = instance.distance(prev_port, vessel.final_port)
            if row is not None and dist > 0:
                fuel += dist / plan.final_speed * row.fuel_cost_rate
    return ProfitBreakdown(
        revenue=revenue,
        purchase_cost=purchase,
        fuel_cost=fuel,
        free_lng_cost=free_cost,
        over_delivery_volume=dumped,
    )
