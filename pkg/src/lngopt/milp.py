"""Generic mixed-integer linear programs: build, solve, LP-file round trip.

Models maximize a linear objective over binary and continuous variables
under <=, >=, == row constraints. Solving uses the HiGHS branch-and-bound
behind scipy; solutions are re-verified against the raw rows and binaries
are rounded to exact 0/1 before they leave this module.

Models built by the planning stages are scaled (volumes in 1e3 m3, money
in 1e6 USD) so the 1e-6 verification tolerance is meaningful.
"""

from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint
from scipy.optimize import milp as _scipy_milp

SENSES = ("<=", ">=", "==")


class ModelError(ValueError):
    """Malformed model description."""


class SolveError(RuntimeError):
    """Solver returned an assignment that fails re-verification."""


@dataclass(frozen=True)
class MilpModel:
    """Immutable MILP in arrays: maximize obj @ x subject to row constraints."""

    var_ids: tuple[str, ...]
    integer: np.ndarray  # bool: binary variables
    lower: np.ndarray
    upper: np.ndarray
    objective: np.ndarray
    a_matrix: sparse.csr_matrix  # shape (n_rows, n_vars)
    senses: tuple[str, ...]
    rhs: np.ndarray
    row_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = len(self.var_ids)
        if len(set(self.var_ids)) != n:
            raise ModelError("duplicate variable id")
        for arr, name in [
            (self.integer, "integer"),
            (self.lower, "lower"),
            (self.upper, "upper"),
            (self.objective, "objective"),
        ]:
            if len(arr) != n:
                raise ModelError(f"{name} array length mismatch")
        if self.a_matrix.shape != (len(self.rhs), n):
            raise ModelError("constraint matrix shape mismatch")
        if len(self.senses) != len(self.rhs):
            raise ModelError("senses length mismatch")
        for s in self.senses:
            if s not in SENSES:
                raise ModelError(f"unknown sense {s!r}")

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    @property
    def n_binaries(self) -> int:
        return int(self.integer.sum())

    def index_of(self, var_id: str) -> int:
        try:
            return self.var_ids.index(var_id)
        except ValueError:
            raise ModelError(f"unknown variable {var_id!r}") from None


@dataclass(frozen=True)
class MilpSolution:
    status: str  # optimal | feasible | infeasible | unbounded | budget_exhausted
    assignment: dict[str, float]
    objective_value: float
    gap: float | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible", "budget_exhausted")

    def value(self, var_id: str) -> float:
        return self.assignment[var_id]


@dataclass(frozen=True)
class SolveOptions:
    budget: int | None = None  # branch-and-bound node limit
    tolerance: float = 1e-6
    time_limit: float | None = None
    gap: float = 0.0  # acceptable relative optimality gap


def build(spec: dict) -> MilpModel:
    """Build a model from a declarative description.

    ``spec`` keys: ``variables`` (id, kind in {binary, continuous}, optional
    lb/ub), ``constraints`` (coeffs mapping, sense, rhs, optional name) and
    ``objective`` (coeffs mapping; sense is always maximize).
    """
    ids: list[str] = []
    index: dict[str, int] = {}
    integer, lower, upper = [], [], []
    for v in spec.get("variables", []):
        vid = v["id"]
        if vid in index:
            raise ModelError(f"duplicate variable id {vid!r}")
        index[vid] = len(ids)
        ids.append(vid)
        kind = v.get("kind", "continuous")
        if kind == "binary":
            integer.append(True)
            lower.append(0.0)
            upper.append(1.0)
        elif kind == "continuous":
            integer.append(False)
            lower.append(float(v.get("lb", 0.0)))
            upper.append(float(v.get("ub", np.inf)))
        else:
            raise ModelError(f"unknown variable kind {kind!r}")

    rows, cols, vals = [], [], []
    senses, rhs, row_names = [], [], []
    for r, con in enumerate(spec.get("constraints", [])):
        sense = con.get("sense", "<=")
        if sense not in SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        for vid, coef in con["coeffs"].items():
            if vid not in index:
                raise ModelError(f"constraint references unknown variable {vid!r}")
            rows.append(r)
            cols.append(index[vid])
            vals.append(float(coef))
        senses.append(sense)
        rhs.append(float(con["rhs"]))
        row_names.append(con.get("name", f"c{r}"))

    obj = np.zeros(len(ids))
    for vid, coef in spec.get("objective", {}).get("coeffs", {}).items():
        if vid not in index:
            raise ModelError(f"objective references unknown variable {vid!r}")
        obj[index[vid]] = float(coef)

    a = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(len(rhs), len(ids))
    )
    return MilpModel(
        var_ids=tuple(ids),
        integer=np.array(integer, dtype=bool),
        lower=np.array(lower),
        upper=np.array(upper),
        objective=obj,
        a_matrix=a,
        senses=tuple(senses),
        rhs=np.array(rhs),
        row_names=tuple(row_names),
    )


def verify_assignment(
    model: MilpModel, x: np.ndarray, tolerance: float = 1e-6
) -> list[str]:
    """Names of constraints or bounds violated beyond a per-row tolerance
    scaled by the row magnitude."""
    bad: list[str] = []
    tol_b = tolerance * np.maximum(1.0, np.abs(model.rhs)) if model.n_rows else None
    if model.n_rows:
        ax = model.a_matrix @ x
        for i, sense in enumerate(model.senses):
            t = tol_b[i]
            if sense == "<=" and ax[i] > model.rhs[i] + t:
                bad.append(_row_name(model, i))
            elif sense == ">=" and ax[i] < model.rhs[i] - t:
                bad.append(_row_name(model, i))
            elif sense == "==" and abs(ax[i] - model.rhs[i]) > t:
                bad.append(_row_name(model, i))
    tol_v = tolerance * np.maximum(1.0, np.abs(x))
    if np.any(x < model.lower - tol_v) or np.any(x > model.upper + tol_v):
        bad.append("bounds")
    return bad


def _row_name(model: MilpModel, i: int) -> str:
    return model.row_names[i] if model.row_names else f"c{i}"


def solve(model: MilpModel, options: SolveOptions | None = None) -> MilpSolution:
    """Solve to proven optimality (or to the node budget) with HiGHS.

    Deterministic for identical inputs and options. Binaries in returned
    assignments are exact 0/1; assignments are re-verified against the raw
    rows at the option tolerance.
    """
    options = options or SolveOptions()
    if model.n_vars == 0:
        feasible = True
        for sense, b in zip(model.senses, model.rhs):
            lhs = 0.0
            if (
                (sense == "<=" and lhs > b + options.tolerance)
                or (sense == ">=" and lhs < b - options.tolerance)
                or (sense == "==" and abs(b) > options.tolerance)
            ):
                feasible = False
        status = "optimal" if feasible else "infeasible"
        return MilpSolution(status=status, assignment={}, objective_value=0.0)

    lb = np.full(model.n_rows, -np.inf)
    ub = np.full(model.n_rows, np.inf)
    for i, sense in enumerate(model.senses):
        if sense in ("<=", "=="):
            ub[i] = model.rhs[i]
        if sense in (">=", "=="):
            lb[i] = model.rhs[i]
    constraints = LinearConstraint(model.a_matrix, lb, ub)
    bounds = Bounds(model.lower, model.upper)

    solver_opts: dict = {"presolve": True, "mip_rel_gap": options.gap}
    if options.budget is not None:
        solver_opts["node_limit"] = int(options.budget)
    if options.time_limit is not None:
        solver_opts["time_limit"] = float(options.time_limit)

    # Root relaxation first: when it lands on integers it proves the
    # integer optimum outright, skipping the branch-and-bound machinery.
    res = None
    if model.n_binaries:
        relax = _scipy_milp(
            c=-model.objective,
            constraints=constraints,
            integrality=np.zeros(model.n_vars),
            bounds=bounds,
        )
        if relax.status == 2:
            return MilpSolution("infeasible", {}, 0.0)
        if relax.status == 0 and relax.x is not None:
            xi = relax.x[model.integer]
            if np.all(np.abs(xi - np.round(xi)) <= 1e-7):
                res = relax
    if res is None:
        res = _scipy_milp(
            c=-model.objective,
            constraints=constraints,
            integrality=model.integer.astype(int),
            bounds=bounds,
            options=solver_opts,
        )

    if res.status == 2:
        return MilpSolution("infeasible", {}, 0.0)
    if res.status == 3:
        return MilpSolution("unbounded", {}, np.inf)
    if res.x is None:
        # limit hit before any incumbent, or numerical trouble
        status = "budget_exhausted" if res.status == 1 else "infeasible"
        return MilpSolution(status, {}, 0.0, gap=np.inf)

    x = np.asarray(res.x, dtype=float)
    rounded = np.round(x)
    snap = model.integer & (np.abs(x - rounded) <= 1e-5)
    x = np.where(snap, rounded, x)
    if np.any(model.integer & ~snap):
        raise SolveError("integer variable far from integrality")
    x = np.clip(x, model.lower, model.upper)

    bad = verify_assignment(model, x, options.tolerance)
    if bad:
        raise SolveError(f"solution violates: {', '.join(bad[:5])}")

    gap = getattr(res, "mip_gap", None)
    if res.status == 1:
        status = "budget_exhausted"
    elif gap is not None and gap > options.tolerance:
        status = "feasible"
    else:
        status = "optimal"
    objective = float(model.objective @ x)
    return MilpSolution(
        status=status,
        assignment={vid: float(val) for vid, val in zip(model.var_ids, x)},
        objective_value=objective,
        gap=float(gap) if gap is not None else None,
    )


_NAME_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _lp_names(model: MilpModel) -> list[str]:
    names = []
    used = set()
    for i, vid in enumerate(model.var_ids):
        name = vid if _NAME_RE.match(vid) else f"v{i}"
        if name in used:
            name = f"v{i}"
        used.add(name)
        names.append(name)
    return names


def _lp_terms(coeffs: list[tuple[float, str]]) -> str:
    parts = []
    for coef, name in coeffs:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {abs(coef)!r} {name}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp(model: MilpModel) -> str:
    """Emit the model in the standard LP file dialect."""
    names = _lp_names(model)
    out = ["Maximize"]
    obj = [
        (model.objective[j], names[j])
        for j in range(model.n_vars)
        if model.objective[j] != 0
    ]
    out.append(f" obj: {_lp_terms(obj)}")
    out.append("Subject To")
    coo = model.a_matrix.tocoo()
    by_row: dict[int, list[tuple[float, str]]] = {}
    for r, c, v in zip(coo.row, coo.col, coo.data):
        if v != 0:
            by_row.setdefault(int(r), []).append((float(v), names[int(c)]))
    sense_txt = {"<=": "<=", ">=": ">=", "==": "="}
    for i in range(model.n_rows):
        terms = _lp_terms(sorted(by_row.get(i, []), key=lambda t: t[1]))
        out.append(
            f" {_row_name(model, i)}: {terms} {sense_txt[model.senses[i]]} "
            f"{model.rhs[i]!r}"
        )
    out.append("Bounds")
    for j in range(model.n_vars):
        if model.integer[j]:
            continue
        lo, hi = model.lower[j], model.upper[j]
        if np.isinf(hi) and lo == 0:
            continue
        lo_txt = "-inf" if np.isinf(lo) else repr(float(lo))
        hi_txt = "+inf" if np.isinf(hi) else repr(float(hi))
        out.append(f" {lo_txt} <= {names[j]} <= {hi_txt}")
    binaries = [names[j] for j in range(model.n_vars) if model.integer[j]]
    if binaries:
        out.append("Binaries")
        for k in range(0, len(binaries), 8):
            out.append(" " + " ".join(binaries[k : k + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


_TERM_RE = re.compile(r"([+-]?)\s*(\d+\.?\d*(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][A-Za-z0-9_.]*)")


def parse_lp(text: str) -> MilpModel:
    """Parse the LP dialect emitted by export_lp back into a model."""
    section = None
    sense_obj = 1.0
    obj: dict[str, float] = {}
    constraints: list[tuple[str, dict[str, float], str, float]] = []
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()
    var_order: list[str] = []
    seen: set[str] = set()

    def note(var: str) -> None:
        if var not in seen:
            seen.add(var)
            var_order.append(var)

    def parse_terms(expr: str) -> dict[str, float]:
        coeffs: dict[str, float] = {}
        if expr.strip() == "0":
            return coeffs
        for sign, num, var in _TERM_RE.findall(expr):
            coef = float(num) if num else 1.0
            if sign == "-":
                coef = -coef
            coeffs[var] = coeffs.get(var, 0.0) + coef
            note(var)
        return coeffs

    for raw in text.splitlines():
        line = raw.split("\\")[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "maximise", "max"):
            section, sense_obj = "obj", 1.0
            continue
        if low in ("minimize", "minimise", "min"):
            section, sense_obj = "obj", -1.0
            continue
        if low in ("subject to", "st", "s.t.", "such that"):
            section = "cons"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binaries", "binary", "bin"):
            section = "bin"
            continue
        if low in ("general", "generals", "end"):
            section = "end" if low == "end" else "gen"
            continue

        if section == "obj":
            body = line.split(":", 1)[1] if ":" in line else line
            for var, coef in parse_terms(body).items():
                obj[var] = obj.get(var, 0.0) + sense_obj * coef
        elif section == "cons":
            name, body = (
                [s.strip() for s in line.split(":", 1)]
                if ":" in line
                else (f"c{len(constraints)}", line)
            )
            m = re.search(r"(<=|>=|=)", body)
            if not m:
                raise ModelError(f"constraint without comparator: {line!r}")
            sense = {"<=": "<=", ">=": ">=", "=": "=="}[m.group(1)]
            lhs, rhs_txt = body.split(m.group(1), 1)
            constraints.append((name, parse_terms(lhs), sense, float(rhs_txt)))
        elif section == "bounds":
            if low.endswith(" free"):
                var = line.rsplit(None, 1)[0]
                note(var)
                bounds[var] = (-np.inf, np.inf)
                continue
            pieces = re.split(r"(<=|>=|=)", line)
            pieces = [p.strip() for p in pieces]
            if len(pieces) == 5 and pieces[1] == "<=" and pieces[3] == "<=":
                var = pieces[2]
                note(var)
                bounds[var] = (_bound_val(pieces[0]), _bound_val(pieces[4]))
            elif len(pieces) == 3:
                a, op, b = pieces
                if _NAME_RE.match(a):
                    var, val = a, _bound_val(b)
                    note(var)
                    lo, hi = bounds.get(var, (0.0, np.inf))
                    bounds[var] = {
                        "<=": (lo, val),
                        ">=": (val, hi),
                        "=": (val, val),
                    }[op]
                else:
                    var, val = b, _bound_val(a)
                    note(var)
                    lo, hi = bounds.get(var, (0.0, np.inf))
                    bounds[var] = {"<=": (val, hi), ">=": (lo, val), "=": (val, val)}[
                        op
                    ]
            else:
                raise ModelError(f"unparseable bound: {line!r}")
        elif section == "bin":
            for var in line.split():
                note(var)
                binaries.add(var)

    spec = {
        "variables": [
            {
                "id": v,
                "kind": "binary" if v in binaries else "continuous",
                "lb": bounds.get(v, (0.0, np.inf))[0],
                "ub": bounds.get(v, (0.0, np.inf))[1],
            }
            for v in var_order
        ],
        "constraints": [
            {"name": n, "coeffs": c, "sense": s, "rhs": r}
            for n, c, s, r in constraints
        ],
        "objective": {"coeffs": obj},
    }
    return build(spec)


def _bound_val(text: str) -> float:
    t = text.lower().replace(" ", "")
    if t in ("-inf", "-infinity"):
        return -np.inf
    if t in ("+inf", "inf", "+infinity", "infinity"):
        return np.inf
    return float(text)


def solve_with_command(
    model: MilpModel,
    command: list[str],
    workdir: str | Path,
    tolerance: float = 1e-6,
) -> MilpSolution:
    """External-solver bridge: write LP, run a command, read the solution.

    The command receives ``{lp}`` and ``{sol}`` placeholders expanded to
    file paths. The solution file holds one ``var value`` pair per line
    (``#`` comments allowed). Values are verified against the model.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    lp_path = workdir / "model.lp"
    sol_path = workdir / "model.sol"
    lp_path.write_text(export_lp(model))
    cmd = [arg.format(lp=str(lp_path), sol=str(sol_path)) for arg in command]
    subprocess.run(cmd, check=True, capture_output=True)

    names = _lp_names(model)
    name_to_idx = {n: j for j, n in enumerate(names)}
    x = np.zeros(model.n_vars)
    for lineno, raw in enumerate(sol_path.read_text().splitlines(), start=1):
        line = raw.split("#")[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ModelError(f"solution file line {lineno}: expected 'var value'")
        if parts[0] not in name_to_idx:
            raise ModelError(f"solution file line {lineno}: unknown var {parts[0]!r}")
        x[name_to_idx[parts[0]]] = float(parts[1])

    x = np.where(model.integer, np.round(x), x)
    bad = verify_assignment(model, x, tolerance)
    if bad:
        raise SolveError(f"external solution violates: {', '.join(bad[:5])}")
    return MilpSolution(
        status="feasible",
        assignment={vid: float(v) for vid, v in zip(model.var_ids, x)},
        objective_value=float(model.objective @ x),
    )
