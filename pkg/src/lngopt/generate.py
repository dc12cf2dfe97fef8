"""Seeded synthetic instance generator and the flexibility-restriction transform.

The generator is parametric rather than fitted to data: export ports get
low LNG price levels and import ports high ones, so profitable buy/sell
pairings always exist; most contract windows last a single day with a
minority stretching up to a week.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import (
    Contract,
    ConsumptionRow,
    DistanceMatrix,
    Instance,
    Port,
    PriceSeries,
    Vessel,
    with_contracts,
)

SPEED_GRID = [16.0, 16.5, 17.0, 17.5, 18.0, 18.5, 19.0, 19.5, 20.0, 20.5]


@dataclass(frozen=True)
class GeneratorParams:
    n_vessels: int = 4
    n_buy: int = 52
    n_sell: int = 200
    small_fraction: float = 0.5
    horizon_days: int = 885
    n_ports: int = 12

    def check(self) -> None:
        if min(self.n_vessels, self.n_buy, self.n_sell, self.n_ports) <= 0:
            raise ValueError("all generator counts must be positive")
        if self.horizon_days <= 30:
            raise ValueError("horizon must exceed 30 days")
        if not 0.0 <= self.small_fraction <= 1.0:
            raise ValueError("small_fraction must lie in [0, 1]")


def _consumption_table(
    rng: np.random.Generator, idle_boil_off: float, with_fuel_mode: bool
) -> tuple[ConsumptionRow, ...]:
    rows: list[ConsumptionRow] = []
    c20 = rng.uniform(4.5, 5.5)  # m3 LNG per sailing hour at 20 kn, laden
    fuel_price = rng.uniform(360.0, 420.0)  # $ per LNG-equivalent m3
    for laden in (True, False):
        load_factor = 1.0 if laden else 0.85
        boil = idle_boil_off / 24.0 * (1.15 if laden else 0.85)
        for speed in SPEED_GRID:
            burn = c20 * (speed / 20.0) ** 3 * load_factor
            rows.append(
                ConsumptionRow("lng_only", laden, speed, burn, boil, 0.0)
            )
            if with_fuel_mode:
                rows.append(
                    ConsumptionRow(
                        "fuel_only", laden, speed, 0.0, boil, burn * fuel_price
                    )
                )
    return tuple(rows)


def generate_instance(seed: int, params: GeneratorParams | None = None) -> Instance:
    """Build a deterministic synthetic instance for the given seed."""
    params = params or GeneratorParams()
    params.check()
    rng = np.random.default_rng(seed)
    horizon = params.horizon_days

    ports = tuple(Port(id=f"P{i:02d}", name=f"Port {i}") for i in range(params.n_ports))
    n_export = max(1, params.n_ports // 2)
    export_ports = [p.id for p in ports[:n_export]]
    import_ports = [p.id for p in ports[n_export:]] or export_ports

    coords = rng.uniform(0.0, 3200.0, size=(params.n_ports, 2))
    entries: dict[tuple[str, str], float] = {}
    for i in range(params.n_ports):
        for j in range(i + 1, params.n_ports):
            d = float(np.hypot(*(coords[i] - coords[j])))
            entries[(ports[i].id, ports[j].id)] = round(d, 1)
    distances = DistanceMatrix(entries=entries)

    day_idx = np.arange(horizon)
    free: dict[str, tuple[float, ...]] = {}
    for k, port in enumerate(ports):
        base = rng.uniform(180.0, 260.0) if port.id in export_ports else rng.uniform(
            330.0, 430.0
        )
        phase = rng.uniform(0.0, 365.0)
        series = base * (1.0 + 0.08 * np.sin(2 * np.pi * (day_idx + phase) / 365.0))
        series = series + rng.normal(0.0, 2.0, size=horizon)
        free[port.id] = tuple(np.maximum(series, 1.0).round(4))
    prices = PriceSeries(free_price=free)

    vessels = []
    for k in range(params.n_vessels):
        capacity = round(rng.uniform(120_000.0, 180_000.0), 0)
        idle_boil = round(capacity * rng.uniform(0.0012, 0.0018), 2)
        vessels.append(
            Vessel(
                id=f"V{k:02d}",
                capacity=capacity,
                consumption_table=_consumption_table(
                    rng, idle_boil, with_fuel_mode=(k % 2 == 1)
                ),
                idle_boil_off=idle_boil,
                rent_start=0,
                rent_end=horizon - 1,
                initial_port=str(rng.choice(export_ports)),
                final_port=str(rng.choice([p.id for p in ports])),
                initial_volume=round(capacity * rng.uniform(0.06, 0.15), 0),
            )
        )
    vessels = tuple(vessels)
    cap_max = max(v.capacity for v in vessels)

    def window(lo_start: int, hi_start: int) -> tuple[int, int]:
        r = int(rng.integers(lo_start, hi_start))
        length = 0 if rng.random() < 0.8 else int(rng.integers(1, 7))
        return r, min(r + length, horizon - 1)

    def contract_prices(port: str, r: int, d: int) -> dict[int, float]:
        factor = rng.uniform(0.97, 1.03)
        return {
            day: round(free[port][day] * factor, 4) for day in range(r, d + 1)
        }

    contracts: list[Contract] = []
    for i in range(params.n_buy):
        port = str(rng.choice(export_ports))
        r, d = window(3, max(4, horizon - 45))
        capref = vessels[int(rng.integers(0, len(vessels)))].capacity
        v_min = round(capref * rng.uniform(0.60, 0.80), 0)
        v_max = round(capref * rng.uniform(0.92, 1.00), 0)
        contracts.append(
            Contract(
                id=f"B{i:03d}",
                kind="buy",
                port=port,
                release=r,
                deadline=d,
                v_min=v_min,
                v_max=v_max,
                prices=contract_prices(port, r, d),
            )
        )

    n_small = int(round(params.small_fraction * params.n_sell))
    for i in range(params.n_sell):
        port = str(rng.choice(import_ports))
        r, d = window(10, max(11, horizon - 10))
        if i < n_small:
            v_min = round(cap_max * rng.uniform(0.0, 0.18), 0)
            v_max = v_min + round(cap_max * rng.uniform(0.03, 0.15), 0)
        else:
            v_min = round(cap_max * rng.uniform(0.30, 0.50), 0)
            v_max = round(cap_max * rng.uniform(0.85, 1.00), 0)
        contracts.append(
            Contract(
                id=f"S{i:03d}",
                kind="sell",
                port=port,
                release=r,
                deadline=d,
                v_min=v_min,
                v_max=v_max,
                prices=contract_prices(port, r, d),
            )
        )

    inst = Instance(
        horizon_days=horizon,
        ports=ports,
        distances=distances,
        vessels=vessels,
        contracts=tuple(contracts),
        prices=prices,
        name=f"gen-{seed}-v{params.n_vessels}b{params.n_buy}s{params.n_sell}",
    )
    inst.validate()
    return inst


def restrict_flexibility(inst: Instance, keep_fraction: float, seed: int) -> Instance:
    """Reduce the flexible-contract share to roughly ``keep_fraction``.

    Small sells are removed outright; other flexible contracts get their
    lower volume bound raised to the upper one. The de-flexing order is a
    seeded permutation, so smaller ``keep_fraction`` values extend the
    changes of larger ones (prefix property).
    """
    if not 0.0 <= keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in [0, 1]")
    if keep_fraction >= 1.0:
        return inst

    flexibles = sorted((c for c in inst.contracts if inst.is_flexible(c)), key=lambda c: c.id)
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(flexibles)))

    keep: dict[str, Contract] = {c.id: c for c in inst.contracts}
    n_total = len(inst.contracts)
    n_flex = len(flexibles)
    for idx in order:
        if n_total > 0 and n_flex / n_total <= keep_fraction:
            break
        c = flexibles[idx]
        if inst.is_small_sell(c):
            del keep[c.id]
            n_total -= 1
        else:
            keep[c.id] = replace(c, v_min=c.v_max)
        n_flex -= 1

    remaining = [keep[c.id] for c in inst.contracts if c.id in keep]
    out = with_contracts(inst, remaining)
    return replace(
        out, name=f"{inst.name}-flex{int(round(keep_fraction * 100)):03d}"
    )
