"""Independent feasibility checking and cost recomputation for full plans.

The validator re-derives everything from the instance and the plan itself:
shortest distances, block flows, track counts and the cost breakdown.  Each
check maps to one constraint family of the integrated model (labels follow
the model documentation in the README), so a feasible plan for the
integrated model yields an empty violation list, and the two-stage plan's
possible train-capacity overruns surface as Eq3 entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .instance import Instance
from .pathgen import LENGTH_TOL, shortest_distances
from .sequential import CostBreakdown, TbspSolution, recompute_costs

FEAS_TOL = 1e-6


class SolutionFormatError(Exception):
    """The solution is structurally unusable (distinct from violations)."""


@dataclass(frozen=True)
class Violation:
    family: str
    index: tuple
    lhs: float
    rhs: float

    @property
    def magnitude(self) -> float:
        return abs(self.lhs - self.rhs)

    def __str__(self) -> str:
        return f"{self.family}{self.index}: lhs {self.lhs:.6g} vs rhs {self.rhs:.6g}"


def _chain_ok(inst: Instance, nodes: tuple[int, ...], o: int, d: int) -> bool:
    if len(nodes) < 2 or nodes[0] != o or nodes[-1] != d:
        return False
    if len(set(nodes)) != len(nodes):
        return False
    return all(arc in inst.link_map for arc in zip(nodes, nodes[1:]))


def _length(inst: Instance, nodes: tuple[int, ...]) -> float:
    return sum(inst.link_map[arc].length for arc in zip(nodes, nodes[1:]) if arc in inst.link_map)


def validate(inst: Instance, sol: TbspSolution) -> tuple[list[Violation], CostBreakdown]:
    """All constraint violations of a plan plus its recomputed cost breakdown.

    An empty list means the plan is feasible for the integrated model.
    Checks that depend on an entity being structurally sound (for example a
    block's detour bound needs a coherent route) are skipped for entities
    already reported broken, so one defect does not cascade into unrelated
    families.
    """
    if not isinstance(sol, TbspSolution):
        raise SolutionFormatError("expected a TbspSolution")
    demanded = inst.demand_pairs()
    for od in demanded:
        if od not in sol.paths:
            raise SolutionFormatError(f"solution misses the path for demanded pair {od}")
        if od not in sol.sequences:
            raise SolutionFormatError(f"solution misses the block sequence for demanded pair {od}")
    for (p, q), plan in sol.blocks.items():
        if plan.sort_tracks < 0 or plan.frequency < -FEAS_TOL:
            raise SolutionFormatError(f"block ({p},{q}) carries negative frequency or track count")

    violations: list[Violation] = []
    dist = shortest_distances(inst)
    eps = inst.detour_ratio

    # Eq2-flow: shipment paths and block routes are real directed chains
    ok_path: dict[tuple[int, int], bool] = {}
    for od in sorted(sol.paths):
        nodes = sol.paths[od]
        ok_path[od] = _chain_ok(inst, nodes, *od)
        if not ok_path[od]:
            violations.append(Violation("Eq2-flow", ("shipment",) + od, 0.0, 1.0))
    ok_block: dict[tuple[int, int], bool] = {}
    for pq in sorted(sol.blocks):
        route = sol.blocks[pq].route
        ok_block[pq] = _chain_ok(inst, route, *pq)
        if not ok_block[pq]:
            violations.append(Violation("Eq2-flow", ("block",) + pq, 0.0, 1.0))

    # Eq4-detour: paths and block routes within the detour bound
    for od in sorted(sol.paths):
        if not ok_path[od]:
            continue
        km = _length(inst, sol.paths[od])
        bound = eps * dist.get(od, math.inf)
        if km > bound + max(LENGTH_TOL, FEAS_TOL):
            violations.append(Violation("Eq4-detour", ("shipment",) + od, km, bound))
    for pq in sorted(sol.blocks):
        if not ok_block[pq]:
            continue
        km = _length(inst, sol.blocks[pq].route)
        bound = eps * dist.get(pq, math.inf)
        if km > bound + max(LENGTH_TOL, FEAS_TOL):
            violations.append(Violation("Eq4-detour", ("block",) + pq, km, bound))

    # Eq6-chain: each sequence chains origin to destination without gaps
    for od in sorted(sol.sequences):
        o, d = od
        seq = sol.sequences[od]
        if not seq:
            violations.append(Violation("Eq6-chain", od + ("empty",), 0.0, 1.0))
            continue
        stops = [seq[0][0]] + [q for _, q in seq]
        expected = [p for p, _ in seq] + [stops[-1]]
        chained = stops[:-1] == expected[:-1] and all(p != q for p, q in seq)
        if seq[0][0] != o or seq[-1][1] != d or not chained or len(set(stops)) != len(stops):
            violations.append(Violation("Eq6-chain", od, 0.0, 1.0))

    # Eq13-provided: sequences ride provided blocks only
    used_ok: dict[tuple[int, int], bool] = {}
    for od in sorted(sol.sequences):
        for pq in sol.sequences[od]:
            if pq not in sol.blocks:
                violations.append(Violation("Eq13-provided", od + pq, 1.0, 0.0))
                used_ok[pq] = False

    # Eq14-pathmatch: a used block's route lies on the user's path
    for od in sorted(sol.sequences):
        if not ok_path.get(od, False):
            continue
        path_arcs = set(zip(sol.paths[od], sol.paths[od][1:]))
        for pq in sol.sequences[od]:
            plan = sol.blocks.get(pq)
            if plan is None or not ok_block.get(pq, False):
                continue
            route_arcs = set(zip(plan.route, plan.route[1:]))
            if not route_arcs <= path_arcs:
                violations.append(Violation("Eq14-pathmatch", od + pq, len(route_arcs - path_arcs), 0.0))

    # block flows (cars assigned per block)
    flows: dict[tuple[int, int], float] = {pq: 0.0 for pq in sol.blocks}
    for od in sorted(sol.sequences):
        n = inst.demands.get(od, 0)
        if n <= 0:
            continue
        for pq in sol.sequences[od]:
            if pq in flows:
                flows[pq] += n

    # Eq5-frequency: train frequency equals block flow / train size
    for pq in sorted(sol.blocks):
        z = sol.blocks[pq].frequency
        lhs = inst.train_size * z
        if abs(lhs - flows[pq]) > FEAS_TOL * max(1.0, abs(flows[pq])):
            violations.append(Violation("Eq5-frequency", pq, lhs, flows[pq]))

    # Eq3-linktrains: trains crossing each link within its capacity
    link_trains: dict[tuple[int, int], float] = {}
    for pq in sorted(sol.blocks):
        if not ok_block[pq]:
            continue
        plan = sol.blocks[pq]
        for arc in zip(plan.route, plan.route[1:]):
            link_trains[arc] = link_trains.get(arc, 0.0) + plan.frequency
    for arc in sorted(link_trains):
        link = inst.link_map[arc]
        cap = link.capacity * link.remaining_rate
        if link_trains[arc] > cap + FEAS_TOL:
            violations.append(Violation("Eq3-linktrains", arc, link_trains[arc], cap))

    # Eq7-yardcap: cars re-sorted at each yard within usable capacity
    handled: dict[int, float] = {}
    for od in sorted(sol.sequences):
        n = inst.demands.get(od, 0)
        if n <= 0:
            continue
        d = od[1]
        for _, q in sol.sequences[od]:
            if q != d:
                handled[q] = handled.get(q, 0.0) + n
    for q in sorted(handled):
        yard = inst.yard(q)
        cap = yard.class_capacity * yard.capacity_ratio
        if handled[q] > cap + FEAS_TOL:
            violations.append(Violation("Eq7-yardcap", (q,), handled[q], cap))

    # Eq8-trackbudget: sort tracks used per yard within its stock
    per_yard: dict[int, float] = {}
    for (p, q), plan in sol.blocks.items():
        per_yard[p] = per_yard.get(p, 0.0) + plan.sort_tracks
    for p in sorted(per_yard):
        budget = float(inst.yard(p).sort_tracks)
        if per_yard[p] > budget + FEAS_TOL:
            violations.append(Violation("Eq8-trackbudget", (p,), per_yard[p], budget))

    # Eq9/Eq10: track count sandwich -> w == ceil(flow / track capacity)
    gamma = inst.track_capacity
    for pq in sorted(sol.blocks):
        w = sol.blocks[pq].sort_tracks
        flow = flows[pq]
        lhs = gamma * (w - 1) + 1
        if lhs > flow + FEAS_TOL:
            violations.append(Violation("Eq9-tracklb", pq, lhs, flow))
        if flow > gamma * w + FEAS_TOL:
            violations.append(Violation("Eq10-trackub", pq, flow, gamma * w))

    # Eq12-intree (with Eq11 folded in): all traffic to d leaving p shares a block
    outbound: dict[tuple[int, int], set[int]] = {}
    for od in sorted(sol.sequences):
        d = od[1]
        for p, q in sol.sequences[od]:
            outbound.setdefault((d, p), set()).add(q)
    for (d, p) in sorted(outbound):
        heads = outbound[(d, p)]
        if len(heads) > 1:
            violations.append(Violation("Eq12-intree", (d, p), float(len(heads)), 1.0))

    breakdown = recompute_costs(inst, sol.paths, sol.sequences, sol.blocks)
    return violations, breakdown


def expected_tracks(flow: float, track_capacity: float) -> int:
    """Track count the sandwich forces: ceil(flow / capacity), 0 at zero flow."""
    if flow <= 0:
        return 0
    return math.ceil(flow / track_capacity - 1e-9)


# -- comparison reports ----------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    """One run's cost breakdown plus its wall time, for side-by-side tables."""

    costs: CostBreakdown
    runtime: float
    label: str = ""


_ROWS = (
    ("Car mile (car-km)", lambda r: r.costs.car_km),
    ("Accumulation (car-hour)", lambda r: r.costs.accumulation),
    ("Classification cost (car-hour)", lambda r: r.costs.reclassification),
    ("Total cost (car-hour)", lambda r: r.costs.total),
    ("Run time (second)", lambda r: r.runtime),
)


@dataclass(frozen=True)
class ComparisonRow:
    item: str
    a: float
    b: float
    deviation: str  # formatted percentage or "n/a"


def relative_deviation(a: float, b: float) -> str:
    """(b - a) / a as a percentage with two decimals; 'n/a' on zero base."""
    if a == 0:
        return "n/a"
    return f"{(b - a) / a * 100.0:.2f}%"


def compare_reports(a: RunReport, b: RunReport) -> list[ComparisonRow]:
    return [
        ComparisonRow(item=name, a=getter(a), b=getter(b), deviation=relative_deviation(getter(a), getter(b)))
        for name, getter in _ROWS
    ]


def render_comparison(rows: list[ComparisonRow], a_label: str = "A", b_label: str = "B") -> str:
    header = f"{'Items':<34}{a_label:>16}{b_label:>16}{'Relative deviation':>22}"
    lines = [header, "-" * len(header)]
    for row in rows:
        lines.append(f"{row.item:<34}{row.a:>16,.10g}{row.b:>16,.10g}{row.deviation:>22}")
    return "\n".join(lines)


def render_report(report: RunReport) -> str:
    header = f"{'Items':<34}{'Value':>18}"
    lines = [header, "-" * len(header)]
    for name, getter in _ROWS:
        lines.append(f"{name:<34}{getter(report):>18,.10g}")
    return "\n".join(lines)
