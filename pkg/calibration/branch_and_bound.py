"""
Best-first branch-and-bound over LP relaxations for 0/1 mixed-integer programs.

Only the problem shape used by the overlap MIP is supported: minimize c'x
subject to A_ub x <= b_ub and simple bounds, with some columns binary.
LP relaxations are solved with HiGHS through scipy.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, Optional

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

INTEGRALITY_TOL = 1e-6
BOUND_TOL = 1e-7


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    GAP_LIMIT = "gap_limit"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class LinearModel:
    """min c'x  s.t.  a_ub x <= b_ub,  lower <= x <= upper,  x[binary] in {0, 1}."""
    c: np.ndarray
    a_ub: sparse.csr_matrix
    b_ub: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    binary: np.ndarray


@dataclass(frozen=True)
class LpResult:
    feasible: bool
    x: Optional[np.ndarray] = None
    objective: float = float("inf")


@dataclass(frozen=True)
class BnbResult:
    status: SolveStatus
    x: Optional[np.ndarray]
    objective: float
    bound: float
    gap: float
    nodes: int
    lp_solves: int
    runtime: float


def solve_lp(model: LinearModel, lower: np.ndarray, upper: np.ndarray) -> LpResult:
    """Solve the LP relaxation under the given column bounds."""
    res = linprog(
        model.c,
        A_ub=model.a_ub,
        b_ub=model.b_ub,
        bounds=np.column_stack([lower, upper]),
        method="highs",
    )
    if res.status != 0:
        return LpResult(feasible=False)
    x = np.clip(res.x, lower, upper)
    return LpResult(feasible=True, x=x, objective=float(res.fun))


def fix_binaries(model: LinearModel, values: np.ndarray,
                 lower: Optional[np.ndarray] = None,
                 upper: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """Column bounds with every binary fixed to the given 0/1 values."""
    lo = model.lower.copy() if lower is None else lower.copy()
    hi = model.upper.copy() if upper is None else upper.copy()
    values = np.asarray(values, dtype=float)
    lo[model.binary] = values
    hi[model.binary] = values
    return lo, hi


def relative_gap(incumbent: float, bound: float) -> float:
    """(incumbent - bound) / max(|incumbent|, 1); zero once the bound meets the incumbent."""
    if not np.isfinite(incumbent):
        return float("inf")
    return max(0.0, incumbent - bound) / max(abs(incumbent), 1.0)


def _most_fractional(values: np.ndarray) -> Optional[int]:
    """Position of the binary closest to 0.5; lowest position wins ties."""
    frac = np.minimum(values, 1.0 - values)
    if frac.size == 0 or frac.max() <= INTEGRALITY_TOL:
        return None
    score = np.round(np.abs(values - 0.5), 12)
    return int(np.argmin(score))


def branch_and_bound(model: LinearModel, gap_tol: float = 1e-6, node_limit: int = 200,
                     time_limit: Optional[float] = None,
                     heuristic: Optional[Callable[[np.ndarray], Optional[LpResult]]] = None,
                     heuristic_every: int = 10,
                     incumbent: Optional[LpResult] = None) -> BnbResult:
    """
    Best-first search on the LP bound, branching on the most fractional binary.

    heuristic receives a node's LP solution and may return an integral
    feasible solution; it runs at the root and every heuristic_every nodes.
    A child's bound must not drop below its parent's (checked). The search
    stops at the gap tolerance or at the node limit, which reports GAP_LIMIT
    with the best incumbent. time_limit (seconds) adds a wall-clock stop; it
    is off by default so that results do not depend on machine load.
    """
    start = time.perf_counter()
    counter = itertools.count()
    lp_solves = 1

    root = solve_lp(model, model.lower, model.upper)
    if not root.feasible:
        return BnbResult(SolveStatus.INFEASIBLE, None, float("inf"), float("inf"), float("inf"),
                         0, lp_solves, time.perf_counter() - start)

    best_x = incumbent.x if incumbent is not None and incumbent.feasible else None
    best_obj = incumbent.objective if best_x is not None else float("inf")

    def consider(candidate: Optional[LpResult]):
        nonlocal best_x, best_obj
        if candidate is not None and candidate.feasible and candidate.objective < best_obj - 1e-12:
            best_x, best_obj = candidate.x, candidate.objective

    heap: list[tuple[float, int, np.ndarray, np.ndarray, LpResult]] = []
    heapq.heappush(heap, (root.objective, next(counter), model.lower, model.upper, root))
    nodes = 0
    status = SolveStatus.OPTIMAL
    global_bound = root.objective

    def closes_gap(bound: float) -> bool:
        # no incumbent yet: nothing to prune against
        return bool(np.isfinite(best_obj)) and best_obj - bound <= gap_tol * max(abs(best_obj), 1.0)

    while heap:
        bound, _, lower, upper, node = heap[0]
        global_bound = bound
        if closes_gap(bound):
            break
        timed_out = time_limit is not None and time.perf_counter() - start > time_limit
        if nodes >= node_limit or timed_out:
            status = SolveStatus.GAP_LIMIT
            break
        heapq.heappop(heap)
        nodes += 1

        values = node.x[model.binary]
        branch = _most_fractional(values)
        if branch is None:
            consider(node)
            continue
        if heuristic is not None and (nodes == 1 or nodes % heuristic_every == 0):
            consider(heuristic(node.x))
            lp_solves += 1

        column = int(model.binary[branch])
        for fixed in (0.0, 1.0):
            lo, hi = lower.copy(), upper.copy()
            lo[column] = hi[column] = fixed
            child = solve_lp(model, lo, hi)
            lp_solves += 1
            if not child.feasible:
                continue
            if child.objective < node.objective - BOUND_TOL * max(1.0, abs(node.objective)):
                raise AssertionError(
                    f"LP bound decreased from {node.objective} to {child.objective} after branching"
                )
            if not closes_gap(child.objective):
                heapq.heappush(heap, (child.objective, next(counter), lo, hi, child))

    if not heap:
        global_bound = best_obj
    if best_x is None:
        return BnbResult(SolveStatus.INFEASIBLE, None, float("inf"), global_bound, float("inf"),
                         nodes, lp_solves, time.perf_counter() - start)
    global_bound = min(global_bound, best_obj)
    return BnbResult(
        status=status,
        x=best_x,
        objective=best_obj,
        bound=global_bound,
        gap=relative_gap(best_obj, global_bound),
        nodes=nodes,
        lp_solves=lp_solves,
        runtime=time.perf_counter() - start,
    )


def enumerate_binaries(model: LinearModel) -> Iterator[tuple[np.ndarray, LpResult]]:
    """Every 0/1 assignment of the binaries with the LP solved at that assignment."""
    for bits in itertools.product((0.0, 1.0), repeat=len(model.binary)):
        values = np.array(bits)
        lo, hi = fix_binaries(model, values)
        yield values, solve_lp(model, lo, hi)
