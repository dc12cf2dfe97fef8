"""Executable plans: timed port calls with volumes and an onboard trace.

The onboard trace convention: ``onboard_before`` is the tank content on
arrival at the call, after the operation-day boil-off and before any
trading; ``onboard_after`` adds the bought volume (buys) or removes the
paid discharge plus dumped over-delivery (sells), plus any out-of-contract
purchase. Sailing segments therefore run from one call's ``onboard_after``
to the next call's ``onboard_before``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path


@dataclass(frozen=True)
class PortCall:
    contract: str
    port: str
    day: int
    kind: str  # "buy" | "sell"
    volume: float  # paid traded volume
    free_purchase: float  # out-of-contract LNG bought at this call
    over_delivery: float  # discharged but unpaid volume (sells only)
    onboard_before: float
    onboard_after: float
    leg_speed: float  # speed of the leg arriving into this call
    leg_mode: str


@dataclass(frozen=True)
class VesselPlan:
    vessel: str
    calls: tuple[PortCall, ...]
    final_speed: float | None = None  # leg to the vessel's end location
    final_mode: str | None = None

    @property
    def used(self) -> bool:
        return bool(self.calls)

    @property
    def departure_volume(self) -> float:
        """Onboard volume when leaving the last call."""
        return self.calls[-1].onboard_after if self.calls else 0.0


@dataclass(frozen=True)
class Schedule:
    plans: tuple[VesselPlan, ...]
    provenance: str = ""
    meta: dict = field(default_factory=dict)

    def plan(self, vessel: str) -> VesselPlan | None:
        for p in self.plans:
            if p.vessel == vessel:
                return p
        return None

    @property
    def calls(self) -> list[tuple[str, PortCall]]:
        return [(p.vessel, c) for p in self.plans for c in p.calls]


def schedule_to_json(schedule: Schedule) -> str:
    doc = {
        "provenance": schedule.provenance,
        "meta": schedule.meta,
        "plans": [
            {
                "vessel": p.vessel,
                "final_speed": p.final_speed,
                "final_mode": p.final_mode,
                "calls": [asdict(c) for c in p.calls],
            }
            for p in schedule.plans
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def schedule_from_json(text: str) -> Schedule:
    doc = json.loads(text)
    plans = tuple(
        VesselPlan(
            vessel=p["vessel"],
            calls=tuple(PortCall(**c) for c in p["calls"]),
            final_speed=p.get("final_speed"),
            final_mode=p.get("final_mode"),
        )
        for p in doc["plans"]
    )
    return Schedule(
        plans=plans, provenance=doc.get("provenance", ""), meta=doc.get("meta", {})
    )


def save_schedule(schedule: Schedule, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(schedule_to_json(schedule))
    return path


def load_schedule(path: str | Path) -> Schedule:
    return schedule_from_json(Path(path).read_text())
