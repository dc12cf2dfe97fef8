"""Budget-limited black-box maximization over a 2D parameter grid.

The search is a cross-approximation loop: pick a few columns of the value
tensor, evaluate them, select the maximum-volume row set, evaluate those
rows, reselect columns, and repeat; restarts use fresh random columns
until the evaluation budget runs out. Every distinct grid point is
evaluated at most once and the best evaluated point wins.

The first evaluation always lands on the grid's origin (lowest value on
both axes), so a grid containing zero penalties makes the unpenalized
baseline a guaranteed candidate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MAXVOL_SWAP_TOL = 1.0 + 1e-2


@dataclass(frozen=True)
class Grid2D:
    o_values: tuple[float, ...]
    r_values: tuple[float, ...]

    def __post_init__(self):
        for name, vals in (("o_values", self.o_values), ("r_values", self.r_values)):
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} must be non-negative")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.o_values), len(self.r_values)

    def point(self, i: int, j: int) -> tuple[float, float]:
        return self.o_values[i], self.r_values[j]


def log_axis(top: float, n: int = 16, decades: float = 3.0) -> tuple[float, ...]:
    """Zero plus ``n - 1`` log-spaced values up to ``top``."""
    if top <= 0:
        top = 1.0
    lo = top / 10.0**decades
    return (0.0, *np.geomspace(lo, top, n - 1))


@dataclass(frozen=True)
class OptResult:
    best_point: tuple[float, float]
    best_value: float
    evaluations_used: int
    trace: tuple[tuple[tuple[float, float], float], ...]
    maxvol_fallbacks: int = 0
    error: str | None = None

    def trace_csv(self) -> str:
        lines = ["over_delivery_penalty,potential_reward,value,eval_index"]
        for k, ((o, r), v) in enumerate(self.trace):
            lines.append(f"{o},{r},{v},{k}")
        return "\n".join(lines) + "\n"


def _pivot_rows(a: np.ndarray) -> tuple[list[int], bool]:
    """Partial-pivot row selection; flags rank deficiency."""
    n, k = a.shape
    b = a.astype(float).copy()
    rows: list[int] = []
    fallback = False
    remaining = list(range(n))
    for j in range(k):
        pick = max(remaining, key=lambda i: abs(b[i, j]))
        if abs(b[pick, j]) < 1e-12:
            fallback = True
            pick = remaining[0]
        else:
            for i in remaining:
                if i != pick:
                    b[i] -= b[i, j] / b[pick, j] * b[pick]
        rows.append(pick)
        remaining.remove(pick)
    return rows, fallback


def maxvol(matrix: np.ndarray, swap_tol: float = MAXVOL_SWAP_TOL) -> list[int]:
    """Indices of k rows whose square submatrix locally maximizes |det|.

    Greedy single-row swaps stop once no swap improves the determinant by
    more than ``swap_tol``. Rank-deficient inputs fall back to pivoted
    selection (the fallback is reported through ``maxvol_info``).
    """
    rows, _ = maxvol_info(matrix, swap_tol)
    return rows


def maxvol_info(
    matrix: np.ndarray, swap_tol: float = MAXVOL_SWAP_TOL, max_iters: int = 200
) -> tuple[list[int], bool]:
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    n, k = a.shape
    if k > n:
        raise ValueError("maxvol needs at least as many rows as columns")
    if k == n:
        return list(range(n)), False
    rows, fallback = _pivot_rows(a)
    if fallback:
        return sorted(rows), True
    rows = list(rows)
    for _ in range(max_iters):
        sub = a[rows]
        try:
            coeff = np.linalg.solve(sub.T, a.T).T  # a @ inv(sub)
        except np.linalg.LinAlgError:
            return sorted(rows), True
        i, j = np.unravel_index(np.argmax(np.abs(coeff)), coeff.shape)
        if abs(coeff[i, j]) <= swap_tol:
            break
        rows[j] = int(i)
    return sorted(rows), False


class _BudgetExhausted(Exception):
    pass


class _Evaluator:
    def __init__(self, f, grid: Grid2D, budget: int):
        self.f = f
        self.grid = grid
        self.budget = budget
        self.cache: dict[tuple[int, int], float] = {}
        self.trace: list[tuple[tuple[float, float], float]] = []

    def __call__(self, i: int, j: int) -> float:
        key = (i, j)
        if key in self.cache:
            return self.cache[key]
        if len(self.trace) >= self.budget:
            raise _BudgetExhausted
        point = self.grid.point(i, j)
        value = float(self.f(*point))
        self.cache[key] = value
        self.trace.append((point, value))
        return value


def optimize(
    f: Callable[[float, float], float],
    grid: Grid2D,
    budget: int,
    seed: int = 0,
    rank: int = 2,
    max_sweeps: int = 4,
) -> OptResult:
    """Maximize ``f`` over the grid within ``budget`` evaluations.

    Deterministic in ``seed``; a larger budget with the same seed follows
    the same evaluation sequence, only longer. Exceptions raised by ``f``
    stop the search and are reported on the result with the partial trace.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    n_o, n_r = grid.shape
    k = max(1, min(rank, n_o, n_r))
    rng = np.random.default_rng(seed)
    ev = _Evaluator(f, grid, budget)
    fallbacks = 0
    error: str | None = None

    try:
        ev(0, 0)  # the origin is always a candidate
        while len(ev.cache) < n_o * n_r:  # restarts until the budget is used up
            cols = sorted(rng.choice(n_r, size=k, replace=False).tolist())
            for _ in range(max_sweeps):
                col_matrix = np.array(
                    [[ev(i, j) for j in cols] for i in range(n_o)]
                )
                rows, fb = maxvol_info(col_matrix)
                fallbacks += fb
                row_matrix = np.array(
                    [[ev(i, j) for j in range(n_r)] for i in rows]
                )
                new_cols, fb = maxvol_info(row_matrix.T)
                fallbacks += fb
                if new_cols == cols:
                    break
                cols = new_cols
            if len(ev.trace) >= budget:
                raise _BudgetExhausted
    except _BudgetExhausted:
        pass
    except Exception as e:  # noqa: BLE001 - report f's failure with the trace
        error = repr(e)

    if not ev.trace:
        raise RuntimeError(f"objective failed on the first evaluation: {error}")
    best_idx = int(np.argmax([v for _, v in ev.trace]))
    point, value = ev.trace[best_idx]
    return OptResult(
        best_point=point,
        best_value=value,
        evaluations_used=len(ev.trace),
        trace=tuple(ev.trace),
        maxvol_fallbacks=fallbacks,
        error=error,
    )
