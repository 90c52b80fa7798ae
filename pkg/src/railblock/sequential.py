"""Two-stage decomposition and the shared solution data model.

Stage one routes every shipment at minimum total car-kilometers subject to
link car-capacity; stage two, with the routes frozen, chooses blocks and
consolidations at minimum accumulation plus reclassification cost.  The two
stages run once, in order; there is no feedback loop.  The assembled plan is
an upper bound: stage one enforces car capacity, so the per-link train
capacity is verified afterwards and reported rather than repaired.
"""

from __future__ import annotations

import json
import logging
import math
import pathlib
from dataclasses import dataclass, field

from .builders import REDUCED, BuildOptions, build_block_model, build_path_model
from .instance import Instance
from .milp import MilpModel
from .pathgen import Path, PathCatalog
from .solver import FEASIBLE, LIMIT, OPTIMAL, SolveOptions, SolveResult, solve_milp

log = logging.getLogger("railblock.sequential")


class SolutionError(Exception):
    pass


class StageError(Exception):
    """A stage of the two-stage run failed; remembers which one."""

    def __init__(self, stage: str, result: SolveResult):
        super().__init__(f"{stage} stage ended with status {result.status}")
        self.stage = stage
        self.result = result


@dataclass(frozen=True)
class CostBreakdown:
    """The three cost components and their weighted total (car-hours)."""

    car_km: float
    accumulation: float
    reclassification: float
    total: float

    @classmethod
    def assemble(cls, km_factor: float, car_km: float, accumulation: float, reclassification: float):
        return cls(
            car_km=car_km,
            accumulation=accumulation,
            reclassification=reclassification,
            total=km_factor * car_km + accumulation + reclassification,
        )


@dataclass(frozen=True)
class BlockPlan:
    route: tuple[int, ...]
    frequency: float
    sort_tracks: int


@dataclass
class TbspSolution:
    """A full plan: per-shipment routes and block chains, provided blocks."""

    paths: dict[tuple[int, int], tuple[int, ...]]
    sequences: dict[tuple[int, int], tuple[tuple[int, int], ...]]
    blocks: dict[tuple[int, int], BlockPlan]
    costs: CostBreakdown

    def to_dict(self) -> dict:
        return {
            "paths": [{"o": o, "d": d, "nodes": list(nodes)} for (o, d), nodes in sorted(self.paths.items())],
            "sequences": [
                {"o": o, "d": d, "blocks": [[p, q] for p, q in seq]}
                for (o, d), seq in sorted(self.sequences.items())
            ],
            "blocks": [
                {"p": p, "q": q, "route": list(plan.route), "z": plan.frequency, "w": plan.sort_tracks}
                for (p, q), plan in sorted(self.blocks.items())
            ],
            "costs": {
                "car_km": self.costs.car_km,
                "accumulation": self.costs.accumulation,
                "reclassification": self.costs.reclassification,
                "total": self.costs.total,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TbspSolution":
        try:
            paths = {(rec["o"], rec["d"]): tuple(rec["nodes"]) for rec in doc["paths"]}
            sequences = {
                (rec["o"], rec["d"]): tuple((p, q) for p, q in rec["blocks"]) for rec in doc["sequences"]
            }
            blocks = {
                (rec["p"], rec["q"]): BlockPlan(tuple(rec["route"]), float(rec["z"]), int(rec["w"]))
                for rec in doc["blocks"]
            }
            costs = CostBreakdown(
                car_km=float(doc["costs"]["car_km"]),
                accumulation=float(doc["costs"]["accumulation"]),
                reclassification=float(doc["costs"]["reclassification"]),
                total=float(doc["costs"]["total"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SolutionError(f"malformed solution document: {exc}") from exc
        return cls(paths=paths, sequences=sequences, blocks=blocks, costs=costs)

    def save(self, path) -> None:
        pathlib.Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TbspSolution":
        try:
            doc = json.loads(pathlib.Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise SolutionError(f"cannot read solution {path}: {exc}") from exc
        return cls.from_dict(doc)


def recompute_costs(inst: Instance, paths, sequences, blocks) -> CostBreakdown:
    """Cost breakdown from plan data alone (never trusts stored totals)."""
    link_map = inst.link_map
    car_km = 0.0
    reclass = 0.0
    for (o, d), nodes in paths.items():
        n = inst.demands.get((o, d), 0)
        if n <= 0:
            continue
        km = sum(link_map[arc].length for arc in zip(nodes, nodes[1:]) if arc in link_map)
        car_km += n * km
    for (o, d), seq in sequences.items():
        n = inst.demands.get((o, d), 0)
        if n <= 0:
            continue
        for _, q in seq:
            if q != d:
                reclass += n * inst.yard(q).reclass_delay
    accumulation = sum(inst.train_size * inst.accumulation(p, q) for (p, q) in blocks)
    return CostBreakdown.assemble(inst.km_factor, car_km, accumulation, reclass)


# -- extraction from solved models ---------------------------------------------------


def _walk_selected(arcs_out: dict[int, list[int]], origin: int, destination: int) -> tuple[int, ...]:
    """Deterministic walk over selected arcs from origin to destination.

    Handles stray selected cycles (possible under zero objective weight) by
    depth-first search preferring the smallest next node.
    """
    stack = [(origin, (origin,))]
    while stack:
        node, trail = stack.pop()
        if node == destination:
            return trail
        for nxt in sorted(arcs_out.get(node, []), reverse=True):
            if nxt not in trail:
                stack.append((nxt, trail + (nxt,)))
    raise SolutionError(f"selected arcs do not connect {origin} to {destination}")


def _selected_arcs(values: dict[tuple, float], symbol: str, key_prefix: tuple) -> dict[int, list[int]]:
    arcs_out: dict[int, list[int]] = {}
    plen = len(key_prefix)
    for tag, val in values.items():
        if tag[0] != symbol or tag[1 : 1 + plen] != key_prefix:
            continue
        if val > 0.5:
            tail, head = tag[1 + plen], tag[2 + plen]
            arcs_out.setdefault(tail, []).append(head)
    return arcs_out


def extract_paths(inst: Instance, result: SolveResult) -> dict[tuple[int, int], tuple[int, ...]]:
    """Per-demanded-pair node sequence from a solved routing model.

    Fractional or disconnected selections raise SolutionError: the routing
    model's own constraints make them impossible in an accepted solution.
    """
    if result.status not in (OPTIMAL, FEASIBLE) or result.values is None:
        raise SolutionError(f"cannot extract paths from a result with status {result.status}")
    for tag, val in result.values.items():
        if tag[0] == "x" and min(abs(val), abs(1.0 - val)) > 1e-5:
            raise SolutionError(f"fractional arc selection {tag} = {val}")
    out: dict[tuple[int, int], tuple[int, ...]] = {}
    for o, d in inst.demand_pairs():
        arcs_out = _selected_arcs(result.values, "x", (o, d))
        if not arcs_out:
            raise SolutionError(f"no arcs selected for demanded pair ({o},{d})")
        out[(o, d)] = _walk_selected(arcs_out, o, d)
    return out


def extract_sequence(values: dict[tuple, float], o: int, d: int) -> tuple[tuple[int, int], ...]:
    """Block chain for one shipment from the consolidation variables."""
    arcs_out = _selected_arcs(values, "u", (o, d))
    nodes = _walk_selected(arcs_out, o, d)
    return tuple(zip(nodes, nodes[1:]))


def derive_frequencies(block_result: SolveResult, inst: Instance) -> dict[tuple[int, int], float]:
    """Train frequency per provided block: assigned cars / train size."""
    if block_result.values is None:
        raise SolutionError("block result carries no values")
    flows: dict[tuple[int, int], float] = {}
    provided: set[tuple[int, int]] = set()
    for tag, val in block_result.values.items():
        if tag[0] == "y" and val > 0.5:
            provided.add((tag[1], tag[2]))
        elif tag[0] == "u" and val > 0.5:
            o, d, p, q = tag[1:]
            flows[(p, q)] = flows.get((p, q), 0.0) + inst.demands.get((o, d), 0)
    return {pq: flows.get(pq, 0.0) / inst.train_size for pq in sorted(provided)}


def solution_from_values(
    inst: Instance,
    values: dict[tuple, float],
    routes: dict[tuple[int, int], tuple[int, ...]] | None = None,
) -> TbspSolution:
    """Assemble a TbspSolution from solved variable values.

    Works for both the integrated model (block routes read off the x
    variables) and the stage-two model (block routes supplied via
    ``routes``).
    """
    paths: dict[tuple[int, int], tuple[int, ...]] = {}
    for o, d in inst.demand_pairs():
        if routes is not None and (o, d) in routes:
            paths[(o, d)] = routes[(o, d)]
        else:
            arcs_out = _selected_arcs(values, "x", (o, d))
            paths[(o, d)] = _walk_selected(arcs_out, o, d)

    sequences = {od: extract_sequence(values, *od) for od in inst.demand_pairs()}

    provided = sorted(
        (tag[1], tag[2]) for tag, val in values.items() if tag[0] == "y" and val > 0.5
    )
    flows: dict[tuple[int, int], float] = {}
    for tag, val in values.items():
        if tag[0] == "u" and val > 0.5:
            o, d, p, q = tag[1:]
            flows[(p, q)] = flows.get((p, q), 0.0) + inst.demands.get((o, d), 0)

    blocks: dict[tuple[int, int], BlockPlan] = {}
    for p, q in provided:
        if routes is not None:
            if (p, q) not in routes:
                raise SolutionError(f"provided block ({p},{q}) has no fixed route")
            route = routes[(p, q)]
        else:
            arcs_out = _selected_arcs(values, "x", (p, q))
            route = _walk_selected(arcs_out, p, q)
        w_val = values.get(("w", p, q), 0.0)
        blocks[(p, q)] = BlockPlan(
            route=route,
            frequency=flows.get((p, q), 0.0) / inst.train_size,
            sort_tracks=int(round(w_val)),
        )
    costs = recompute_costs(inst, paths, sequences, blocks)
    return TbspSolution(paths=paths, sequences=sequences, blocks=blocks, costs=costs)


# -- the two-stage driver -------------------------------------------------------------


@dataclass
class SequentialOutcome:
    solution: TbspSolution
    stage_path: SolveResult
    stage_block: SolveResult
    path_model: MilpModel
    block_model: MilpModel


def fixed_routes(
    inst: Instance,
    catalog: PathCatalog,
    stage_one: dict[tuple[int, int], tuple[int, ...]],
) -> dict[tuple[int, int], tuple[int, ...]]:
    """Routes for every ordered pair: stage-one answers for demanded pairs,
    the first (shortest, lexicographically smallest) legal path otherwise."""
    routes: dict[tuple[int, int], tuple[int, ...]] = dict(stage_one)
    for od, paths in sorted(catalog.legal_paths.items()):
        if od not in routes and paths:
            routes[od] = paths[0].nodes
    return routes


def _as_paths(inst: Instance, routes: dict[tuple[int, int], tuple[int, ...]]) -> dict[tuple[int, int], Path]:
    link_map = inst.link_map
    out = {}
    for od, nodes in routes.items():
        length = sum(link_map[arc].length for arc in zip(nodes, nodes[1:]))
        out[od] = Path(nodes=tuple(nodes), length=length)
    return out


def solve_sequential(
    inst: Instance,
    catalog: PathCatalog,
    build_opts: BuildOptions | None = None,
    solve_opts: SolveOptions | None = None,
) -> SequentialOutcome:
    """Run the two stages and assemble the full plan.

    Each stage gets half of the overall time limit.  The outcome's total is
    an upper bound for the integrated model; no lower bound is produced
    here.
    """
    build_opts = build_opts or BuildOptions(reduction=REDUCED)
    solve_opts = solve_opts or SolveOptions()
    stage_opts = SolveOptions(
        time_limit=solve_opts.time_limit / 2.0,
        rel_gap_target=solve_opts.rel_gap_target,
        node_limit=solve_opts.node_limit,
        threads=solve_opts.threads,
        seed=solve_opts.seed,
        branch_priority=solve_opts.branch_priority,
    )

    path_model = build_path_model(inst, catalog, build_opts)
    res_path = solve_milp(path_model, stage_opts)
    if res_path.status not in (OPTIMAL, LIMIT) or res_path.values is None:
        raise StageError("path", res_path)
    stage_one = extract_paths(inst, res_path)
    routes = fixed_routes(inst, catalog, stage_one)

    block_model = build_block_model(inst, _as_paths(inst, routes), build_opts)
    res_block = solve_milp(block_model, stage_opts)
    if res_block.status not in (OPTIMAL, LIMIT) or res_block.values is None:
        raise StageError("block", res_block)

    solution = solution_from_values(inst, res_block.values, routes=routes)
    log.info(
        "sequential total %.6g (stage bounds: path %.6g, block %.6g)",
        solution.costs.total,
        res_path.objective if res_path.objective is not None else math.nan,
        res_block.objective if res_block.objective is not None else math.nan,
    )
    return SequentialOutcome(
        solution=solution,
        stage_path=res_path,
        stage_block=res_block,
        path_model=path_model,
        block_model=block_model,
    )


# -- post-hoc capacity report ----------------------------------------------------------


@dataclass(frozen=True)
class LinkLoad:
    link: tuple[int, int]
    trains: float
    capacity: float

    @property
    def slack(self) -> float:
        return self.capacity - self.trains

    @property
    def violated(self) -> bool:
        return self.trains > self.capacity + 1e-6


def check_link_trains(solution: TbspSolution, inst: Instance) -> list[LinkLoad]:
    """Trains per link versus capacity, for every link a block runs over.

    The two-stage plan enforces car capacity in stage one only, so train
    capacity is audited here; entries with negative slack are violations.
    """
    loads: dict[tuple[int, int], float] = {}
    for (p, q), plan in solution.blocks.items():
        for arc in zip(plan.route, plan.route[1:]):
            loads[arc] = loads.get(arc, 0.0) + plan.frequency
    report = []
    for arc in sorted(loads):
        link = inst.link_map.get(arc)
        capacity = link.capacity * link.remaining_rate if link is not None else 0.0
        report.append(LinkLoad(link=arc, trains=loads[arc], capacity=capacity))
    return report


# -- warm-start assembly ----------------------------------------------------------------


def integrated_assignment(
    model: MilpModel,
    inst: Instance,
    catalog: PathCatalog,
    solution: TbspSolution,
) -> dict[tuple, float]:
    """Variable assignment seeding an integrated solve from a full plan.

    Every binary/integer variable of the model gets a value: shipment and
    provided-block routes come from the plan, unused pairs route along their
    first legal path (they must route somewhere), everything else is zero.
    The continuous z and s variables are left to the completion solve.
    """
    route_arcs: dict[tuple[int, int], set[tuple[int, int]]] = {}

    def arcs_for(pair: tuple[int, int]) -> set[tuple[int, int]]:
        if pair not in route_arcs:
            if pair in solution.blocks:
                nodes = solution.blocks[pair].route
            elif pair in solution.paths:
                nodes = solution.paths[pair]
            else:
                paths = catalog.paths(*pair)
                nodes = paths[0].nodes if paths else ()
            route_arcs[pair] = set(zip(nodes, nodes[1:]))
        return route_arcs[pair]

    used: dict[tuple[int, int], set[tuple[int, int]]] = {}
    for od, seq in solution.sequences.items():
        used[od] = set(seq)

    assignment: dict[tuple, float] = {}
    for var in model.variables:
        symbol = var.tag[0]
        if symbol == "x":
            _, o, d, i, j = var.tag
            assignment[var.tag] = 1.0 if (i, j) in arcs_for((o, d)) else 0.0
        elif symbol == "y":
            _, p, q = var.tag
            assignment[var.tag] = 1.0 if (p, q) in solution.blocks else 0.0
        elif symbol == "u":
            _, o, d, p, q = var.tag
            assignment[var.tag] = 1.0 if (p, q) in used.get((o, d), ()) else 0.0
        elif symbol == "v":
            _, d, p, q = var.tag
            assignment[var.tag] = (
                1.0 if any(od[1] == d and (p, q) in seq for od, seq in used.items()) else 0.0
            )
        elif symbol == "w":
            _, p, q = var.tag
            plan = solution.blocks.get((p, q))
            assignment[var.tag] = float(plan.sort_tracks) if plan else 0.0
    return assignment
