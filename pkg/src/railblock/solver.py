"""Exact MILP solving.

LP relaxations are delegated to the HiGHS engine behind scipy.optimize;
the branch-and-bound layer on top is deterministic: best-first node order
(bound, then creation order), most-fractional branching with lexicographic
tag tie-break, optional symbol priorities.  With a single thread two runs
of the same model produce identical incumbents and node counts.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .milp import MilpModel

log = logging.getLogger("railblock.solver")

OPTIMAL = "optimal"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit-reached"
ERROR = "error"

INT_TOL = 1e-6
FEAS_TOL = 1e-7
PRUNE_TOL = 1e-9


class SolverError(Exception):
    pass


class WarmStartError(SolverError):
    """A warm-start assignment could not be completed to a feasible point."""


@dataclass(frozen=True)
class SolveOptions:
    time_limit: float = 600.0
    rel_gap_target: float = 1e-9
    node_limit: int | None = None
    threads: int = 1
    seed: int = 0
    branch_priority: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be > 0")
        if not 0 <= self.rel_gap_target < 1:
            raise ValueError("rel_gap_target must be in [0, 1)")


@dataclass
class SolveResult:
    status: str
    objective: float | None
    best_bound: float | None
    values: dict[tuple, float] | None
    node_count: int
    wall_time: float
    message: str = ""
    incumbents: list[tuple[float, dict[tuple, float]]] = field(default_factory=list, repr=False)
    bound_trace: list[float] = field(default_factory=list, repr=False)

    @property
    def gap(self) -> float | None:
        """(upper bound - lower bound) / upper bound; None when undefined."""
        if self.objective is None or self.best_bound is None:
            return None
        diff = max(0.0, self.objective - self.best_bound)
        if abs(self.objective) < 1e-12:
            return 0.0 if diff <= 1e-12 else math.inf
        return diff / self.objective

    def value(self, tag: tuple) -> float:
        if self.values is None:
            raise SolverError("no solution values available")
        return self.values[tag]


class _Arrays:
    """Immutable matrix form of a model, shared by all branch-and-bound nodes."""

    def __init__(self, model: MilpModel):
        n = len(model.variables)
        self.n = n
        self.c = np.zeros(n)
        for vid, coef in model.objective.items():
            self.c[vid] = coef
        self.constant = model.objective_constant
        ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
        for con in model.constraints:
            if con.sense == "=":
                eq_rows.append(con.terms)
                eq_rhs.append(con.rhs)
            elif con.sense == "<=":
                ub_rows.append(con.terms)
                ub_rhs.append(con.rhs)
            else:
                ub_rows.append(tuple((vid, -coef) for vid, coef in con.terms))
                ub_rhs.append(-con.rhs)
        self.a_ub = self._matrix(ub_rows, n)
        self.b_ub = np.array(ub_rhs) if ub_rhs else None
        self.a_eq = self._matrix(eq_rows, n)
        self.b_eq = np.array(eq_rhs) if eq_rhs else None
        self.lower = np.array([v.lower for v in model.variables])
        self.upper = np.array([v.upper for v in model.variables])
        self.int_ids = np.array(model.integer_ids(), dtype=int)
        self.tags = [v.tag for v in model.variables]

    @staticmethod
    def _matrix(rows, n):
        if not rows:
            return None
        data, row_idx, col_idx = [], [], []
        for r, terms in enumerate(rows):
            for vid, coef in terms:
                row_idx.append(r)
                col_idx.append(vid)
                data.append(coef)
        return sp.csr_matrix((data, (row_idx, col_idx)), shape=(len(rows), n))


_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


def _solve_relaxation(arr: _Arrays, lower: np.ndarray, upper: np.ndarray):
    """One LP solve; returns (status, objective, x)."""
    res = linprog(
        arr.c,
        A_ub=arr.a_ub,
        b_ub=arr.b_ub,
        A_eq=arr.a_eq,
        b_eq=arr.b_eq,
        bounds=np.column_stack((lower, upper)),
        method="highs",
        options=_LP_OPTIONS,
    )
    if res.status == 0:
        return OPTIMAL, res.fun + arr.constant, res.x
    if res.status == 2:
        return INFEASIBLE, None, None
    if res.status == 3:
        return UNBOUNDED, None, None
    return ERROR, None, None


def _values_dict(arr: _Arrays, x: np.ndarray) -> dict[tuple, float]:
    return {tag: float(val) for tag, val in zip(arr.tags, x)}


def solve_lp(model: MilpModel, opts: SolveOptions | None = None) -> SolveResult:
    """Solve the LP relaxation (integrality dropped, bounds kept)."""
    start = time.perf_counter()
    arr = _Arrays(model)
    status, obj, x = _solve_relaxation(arr, arr.lower, arr.upper)
    wall = time.perf_counter() - start
    if status == OPTIMAL:
        return SolveResult(OPTIMAL, obj, obj, _values_dict(arr, x), 0, wall)
    message = "" if status in (INFEASIBLE, UNBOUNDED) else "numerical failure in LP engine"
    return SolveResult(status, None, None, None, 0, wall, message=message)


def _polish(arr: _Arrays, lower, upper, x):
    """Fix integer variables at their rounded values and re-solve for the rest."""
    lo = lower.copy()
    hi = upper.copy()
    if arr.int_ids.size:
        rounded = np.round(x[arr.int_ids])
        lo[arr.int_ids] = rounded
        hi[arr.int_ids] = rounded
    return _solve_relaxation(arr, lo, hi)


def _fractional(arr: _Arrays, x: np.ndarray) -> list[tuple[int, float]]:
    out = []
    for vid in arr.int_ids:
        frac = abs(x[vid] - round(x[vid]))
        if frac > INT_TOL:
            out.append((int(vid), frac))
    return out


def _pick_branch_var(arr, fractional, priority: tuple[str, ...] | None):
    def rank(vid: int) -> int:
        if not priority:
            return 0
        symbol = str(arr.tags[vid][0])
        return priority.index(symbol) if symbol in priority else len(priority)

    best = min(fractional, key=lambda item: (rank(item[0]), -item[1], arr.tags[item[0]]))
    return best[0]


def solve_milp(
    model: MilpModel,
    opts: SolveOptions | None = None,
    start: Mapping[tuple, float] | None = None,
) -> SolveResult:
    """Branch-and-bound to proven optimality (or a limit, with valid bounds).

    On ``limit-reached`` the result still carries the incumbent (if any) and
    a lower bound valid for the full model.  ``start`` seeds the incumbent
    via :func:`warm_start`; a rejected start is reported in ``message`` and
    the solve proceeds cold.
    """
    opts = opts or SolveOptions()
    if opts.threads > 1:
        log.info("opportunistic multi-thread mode not implemented; running deterministic single-thread")
    t0 = time.perf_counter()
    arr = _Arrays(model)
    message = ""

    incumbent_val: float | None = None
    incumbent_x: dict[tuple, float] | None = None
    incumbents: list[tuple[float, dict[tuple, float]]] = []

    if start is not None:
        try:
            seed = warm_start(model, start, _arr=arr)
            incumbent_val = seed.objective
            incumbent_x = seed.values
            incumbents.append((seed.objective, seed.values))
            log.debug("warm start accepted with objective %.6f", seed.objective)
        except WarmStartError as exc:
            message = f"warm start rejected: {exc}"
            log.info("%s; solving cold", message)

    status, bound, x = _solve_relaxation(arr, arr.lower, arr.upper)
    nodes = 1
    if status == ERROR:
        return SolveResult(ERROR, incumbent_val, None, incumbent_x, nodes, time.perf_counter() - t0,
                           message="numerical failure in root relaxation")
    if status == UNBOUNDED:
        return SolveResult(UNBOUNDED, None, None, None, nodes, time.perf_counter() - t0)
    if status == INFEASIBLE:
        if incumbent_val is not None:
            return SolveResult(ERROR, incumbent_val, None, incumbent_x, nodes, time.perf_counter() - t0,
                               message="root relaxation infeasible but warm start accepted; model inconsistent")
        return SolveResult(INFEASIBLE, None, None, None, nodes, time.perf_counter() - t0)

    best_lb = bound
    trace = [bound]
    counter = 0
    heap: list[tuple[float, int, dict[int, tuple[float, float]]]] = []

    def prune_against_incumbent(node_bound: float) -> bool:
        if incumbent_val is None:
            return False
        return node_bound >= incumbent_val - PRUNE_TOL * (1.0 + abs(incumbent_val))

    def register_incumbent(obj: float, values: dict[tuple, float]):
        nonlocal incumbent_val, incumbent_x
        if incumbent_val is None or obj < incumbent_val:
            incumbent_val = obj
            incumbent_x = values
            incumbents.append((obj, values))
            log.debug("incumbent %.9g after %d nodes", obj, nodes)

    def finish(status: str, lb: float | None) -> SolveResult:
        if incumbent_val is not None and lb is not None:
            lb = min(lb, incumbent_val)
        if lb is not None:
            trace.append(max(trace[-1], lb) if trace else lb)
        return SolveResult(
            status,
            incumbent_val,
            lb,
            incumbent_x,
            nodes,
            time.perf_counter() - t0,
            message=message,
            incumbents=incumbents,
            bound_trace=trace,
        )

    def gap_met() -> bool:
        if incumbent_val is None:
            return False
        if abs(incumbent_val) < 1e-12:
            return incumbent_val - best_lb <= 1e-12
        return (incumbent_val - best_lb) / abs(incumbent_val) <= opts.rel_gap_target

    def push_children(parent_bound: float, overrides, lower, upper, vid: int, val: float):
        nonlocal counter
        down = dict(overrides)
        down[vid] = (lower[vid], math.floor(val))
        up = dict(overrides)
        up[vid] = (math.floor(val) + 1.0, upper[vid])
        counter += 1
        heapq.heappush(heap, (parent_bound, counter, down))
        counter += 1
        heapq.heappush(heap, (parent_bound, counter, up))

    # root node
    fractional = _fractional(arr, x)
    if not fractional:
        p_status, p_obj, p_x = _polish(arr, arr.lower, arr.upper, x)
        if p_status != OPTIMAL:
            message = "root solution failed integral re-solve"
            return finish(ERROR, best_lb)
        register_incumbent(p_obj, _values_dict(arr, p_x))
        return finish(OPTIMAL, incumbent_val)
    vid = _pick_branch_var(arr, fractional, opts.branch_priority)
    push_children(bound, {}, arr.lower, arr.upper, vid, x[vid])

    limit_hit = False
    while heap:
        if time.perf_counter() - t0 >= opts.time_limit:
            limit_hit = True
            break
        if opts.node_limit is not None and nodes >= opts.node_limit:
            limit_hit = True
            break
        node_bound, _, overrides = heapq.heappop(heap)
        # best-first: the popped key is the smallest open bound, hence the global bound
        best_lb = max(best_lb, node_bound)
        trace.append(best_lb)
        if gap_met():
            return finish(OPTIMAL, best_lb)
        if prune_against_incumbent(node_bound):
            continue
        lower = arr.lower.copy()
        upper = arr.upper.copy()
        for vid, (lo, hi) in overrides.items():
            lower[vid] = max(lower[vid], lo)
            upper[vid] = min(upper[vid], hi)
        nodes += 1
        status, obj, x = _solve_relaxation(arr, lower, upper)
        if status == ERROR:
            message = "numerical failure while solving a node relaxation"
            return finish(ERROR, best_lb)
        if status in (INFEASIBLE, UNBOUNDED):
            continue
        if prune_against_incumbent(obj):
            continue
        fractional = _fractional(arr, x)
        if not fractional:
            p_status, p_obj, p_x = _polish(arr, lower, upper, x)
            if p_status != OPTIMAL:
                message = "node solution failed integral re-solve"
                return finish(ERROR, best_lb)
            register_incumbent(p_obj, _values_dict(arr, p_x))
            continue
        vid = _pick_branch_var(arr, fractional, opts.branch_priority)
        push_children(obj, overrides, lower, upper, vid, x[vid])

    if limit_hit:
        lb = best_lb
        if heap:
            lb = max(lb, min(b for b, _, _ in heap))
        return finish(LIMIT, lb)

    # tree exhausted: every open node was pruned or fathomed
    if incumbent_val is None:
        return SolveResult(INFEASIBLE, None, None, None, nodes, time.perf_counter() - t0, message=message)
    return finish(OPTIMAL, incumbent_val)


def warm_start(
    model: MilpModel,
    assignment: Mapping[tuple, float],
    _arr: _Arrays | None = None,
) -> SolveResult:
    """Complete a partial assignment into a feasible incumbent seed.

    Assigned variables are fixed; the remaining ones are completed by one LP
    solve (any leftover integer variables must come out integral).  Raises
    WarmStartError with a reason, naming a violated constraint when one can
    be pinpointed.
    """
    t0 = time.perf_counter()
    arr = _arr or _Arrays(model)
    lower = arr.lower.copy()
    upper = arr.upper.copy()
    fixed: dict[int, float] = {}
    for tag, value in assignment.items():
        try:
            vid = model.var_id(tag)
        except KeyError:
            raise WarmStartError(f"assignment references unknown variable {tag}")
        var = model.variables[vid]
        val = float(value)
        if var.is_integral:
            if abs(val - round(val)) > INT_TOL:
                raise WarmStartError(f"{tag} = {val} is not integral")
            val = float(round(val))
        if val < var.lower - FEAS_TOL or val > var.upper + FEAS_TOL:
            raise WarmStartError(f"{tag} = {val} violates bounds [{var.lower}, {var.upper}]")
        lower[vid] = val
        upper[vid] = val
        fixed[vid] = val

    status, obj, x = _solve_relaxation(arr, lower, upper)
    if status != OPTIMAL:
        label = _violated_label(model, fixed)
        if label is not None:
            raise WarmStartError(f"assignment violates constraint {label}")
        raise WarmStartError(f"no feasible completion ({status})")
    leftover = _fractional(arr, x)
    if leftover:
        p_status, p_obj, p_x = _polish(arr, lower, upper, x)
        if p_status != OPTIMAL:
            raise WarmStartError("completion left fractional integer variables")
        obj, x = p_obj, p_x
    return SolveResult(FEASIBLE, obj, None, _values_dict(arr, x), 0, time.perf_counter() - t0)


def _violated_label(model: MilpModel, fixed: Mapping[int, float]):
    """First constraint violated by the fixed values alone (fully-assigned rows)."""
    for con in model.constraints:
        if any(vid not in fixed for vid, _ in con.terms):
            continue
        lhs = sum(coef * fixed[vid] for vid, coef in con.terms)
        if con.sense == "<=" and lhs > con.rhs + 1e-6:
            return con.label
        if con.sense == ">=" and lhs < con.rhs - 1e-6:
            return con.label
        if con.sense == "=" and abs(lhs - con.rhs) > 1e-6:
            return con.label
    return None
