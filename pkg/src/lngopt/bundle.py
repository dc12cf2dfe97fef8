"""Instance bundle serialization.

A bundle is a zip archive with four members:

- ``instance.json``       ports, vessels, contracts, horizon
- ``consumption.csv``     per-vessel sailing regimes (Table-1-style columns)
- ``distances.csv``       ``port,port,nm`` triples, upper triangle only
- ``prices.csv``          ``port,day,price`` free LNG price series

Archives are written deterministically (fixed timestamps, stored order),
so saving a loaded bundle reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import zipfile
from pathlib import Path

from .data import (
    Contract,
    ConsumptionRow,
    DistanceMatrix,
    Instance,
    InstanceError,
    Port,
    PriceSeries,
    Vessel,
    validate_instance,
)

CONSUMPTION_HEADER = [
    "Vessel name",
    "Fuel mode",
    "Is laden",
    "Speed knots",
    "Consumption m3/hour",
    "Boil-off m3/hour",
    "Fuel cost per hour",
]

_ZIP_DATE = (2020, 1, 1, 0, 0, 0)


class BundleError(ValueError):
    """Malformed bundle content, with the offending member and location."""


def _num(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise BundleError(f"{where}: not a number: {text!r}") from None


def save_instance(inst: Instance) -> bytes:
    """Serialize an Instance to deterministic bundle bytes."""
    doc = {
        "name": inst.name,
        "horizon_days": inst.horizon_days,
        "ports": [{"id": p.id, "name": p.name} for p in inst.ports],
        "vessels": [
            {
                "id": v.id,
                "capacity": v.capacity,
                "idle_boil_off": v.idle_boil_off,
                "rent_start": v.rent_start,
                "rent_end": v.rent_end,
                "initial_port": v.initial_port,
                "final_port": v.final_port,
                "initial_volume": v.initial_volume,
                "fill_fraction": v.fill_fraction,
                "forbidden_zone": list(v.forbidden_zone),
            }
            for v in inst.vessels
        ],
        "contracts": [
            {
                "id": c.id,
                "kind": c.kind,
                "port": c.port,
                "release": c.release,
                "deadline": c.deadline,
                "v_min": c.v_min,
                "v_max": c.v_max,
                "prices": {str(d): p for d, p in sorted(c.prices.items())},
            }
            for c in inst.contracts
        ],
    }
    json_text = json.dumps(doc, indent=2, sort_keys=True) + "\n"

    cons = io.StringIO()
    w = csv.writer(cons, lineterminator="\n")
    w.writerow(CONSUMPTION_HEADER)
    for v in inst.vessels:
        for row in v.consumption_table:
            w.writerow(
                [
                    v.id,
                    row.fuel_mode,
                    "yes" if row.laden else "no",
                    repr(row.speed),
                    repr(row.consumption),
                    repr(row.boil_off),
                    repr(row.fuel_cost_rate),
                ]
            )

    dist = io.StringIO()
    w = csv.writer(dist, lineterminator="\n")
    w.writerow(["port_a", "port_b", "nautical_miles"])
    seen = set()
    for (a, b), d in sorted(inst.distances.entries.items()):
        if (b, a) in seen or a == b:
            continue
        seen.add((a, b))
        w.writerow([a, b, repr(d)])

    prices = io.StringIO()
    w = csv.writer(prices, lineterminator="\n")
    w.writerow(["port", "day", "price"])
    for port in sorted(inst.prices.free_price):
        for day, price in enumerate(inst.prices.free_price[port]):
            w.writerow([port, day, repr(price)])

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
        for member, text in [
            ("instance.json", json_text),
            ("consumption.csv", cons.getvalue()),
            ("distances.csv", dist.getvalue()),
            ("prices.csv", prices.getvalue()),
        ]:
            info = zipfile.ZipInfo(member, date_time=_ZIP_DATE)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, text)
    return buf.getvalue()


def save_instance_path(inst: Instance, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(save_instance(inst))
    return path


def load_instance(source: bytes | str | Path) -> Instance:
    """Load and validate an Instance from bundle bytes or a bundle file path."""
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as e:
        raise BundleError(f"not a bundle archive: {e}") from None

    names = set(zf.namelist())
    for member in ("instance.json", "consumption.csv", "distances.csv", "prices.csv"):
        if member not in names:
            raise BundleError(f"bundle is missing {member}")

    try:
        doc = json.loads(zf.read("instance.json"))
    except json.JSONDecodeError as e:
        raise BundleError(f"instance.json: line {e.lineno} col {e.colno}: {e.msg}")

    tables: dict[str, list[ConsumptionRow]] = {}
    reader = csv.reader(io.StringIO(zf.read("consumption.csv").decode()))
    header = next(reader, None)
    if header != CONSUMPTION_HEADER:
        raise BundleError(f"consumption.csv: unexpected header {header}")
    for i, row in enumerate(reader, start=2):
        if len(row) != 7:
            raise BundleError(f"consumption.csv row {i}: expected 7 fields")
        where = f"consumption.csv row {i}"
        tables.setdefault(row[0], []).append(
            ConsumptionRow(
                fuel_mode=row[1],
                laden=row[2] == "yes",
                speed=_num(row[3], where),
                consumption=_num(row[4], where),
                boil_off=_num(row[5], where),
                fuel_cost_rate=_num(row[6], where),
            )
        )

    entries: dict[tuple[str, str], float] = {}
    reader = csv.reader(io.StringIO(zf.read("distances.csv").decode()))
    next(reader, None)
    for i, row in enumerate(reader, start=2):
        if len(row) != 3:
            raise BundleError(f"distances.csv row {i}: expected 3 fields")
        entries[(row[0], row[1])] = _num(row[2], f"distances.csv row {i}")

    series: dict[str, dict[int, float]] = {}
    reader = csv.reader(io.StringIO(zf.read("prices.csv").decode()))
    next(reader, None)
    for i, row in enumerate(reader, start=2):
        if len(row) != 3:
            raise BundleError(f"prices.csv row {i}: expected 3 fields")
        where = f"prices.csv row {i}"
        series.setdefault(row[0], {})[int(_num(row[1], where))] = _num(row[2], where)

    try:
        ports = tuple(Port(id=p["id"], name=p.get("name", "")) for p in doc["ports"])
        vessels = tuple(
            Vessel(
                id=v["id"],
                capacity=float(v["capacity"]),
                consumption_table=tuple(tables.get(v["id"], ())),
                idle_boil_off=float(v["idle_boil_off"]),
                rent_start=int(v["rent_start"]),
                rent_end=int(v["rent_end"]),
                initial_port=v["initial_port"],
                final_port=v["final_port"],
                initial_volume=float(v["initial_volume"]),
                fill_fraction=float(v["fill_fraction"]),
                forbidden_zone=tuple(v["forbidden_zone"]),
            )
            for v in doc["vessels"]
        )
        contracts = tuple(
            Contract(
                id=c["id"],
                kind=c["kind"],
                port=c["port"],
                release=int(c["release"]),
                deadline=int(c["deadline"]),
                v_min=float(c["v_min"]),
                v_max=float(c["v_max"]),
                prices={int(d): float(p) for d, p in c["prices"].items()},
            )
            for c in doc["contracts"]
        )
    except (KeyError, TypeError) as e:
        raise BundleError(f"instance.json: missing or malformed field: {e}")

    price_series = PriceSeries(
        free_price={
            port: tuple(v for _, v in sorted(days.items()))
            for port, days in series.items()
        }
    )
    inst = Instance(
        horizon_days=int(doc["horizon_days"]),
        ports=ports,
        distances=DistanceMatrix(entries=entries),
        vessels=vessels,
        contracts=contracts,
        prices=price_series,
        name=doc.get("name", "instance"),
    )
    validate_instance(inst)
    return inst
