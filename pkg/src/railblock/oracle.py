"""Exhaustive enumeration solver for tiny instances.

This is the ground truth for every optimality assertion in the test suite:
it enumerates, per shipment, every (legal path, block chain) alternative and
scans the full cross product, filtering by exactly the feasibility rules the
optimization models encode: shared blocks ride one route, outbound
consolidation is unique per (destination, yard), link train capacity, yard
reclassification capacity and the sort-track budget.  It refuses instances
beyond its limits instead of answering partially.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .instance import Instance, Link, Yard, validate_instance
from .pathgen import LENGTH_TOL, PathCatalog, enumerate_block_sequences
from .sequential import BlockPlan, CostBreakdown, TbspSolution, recompute_costs


class OracleLimitError(Exception):
    """The instance falls outside the exhaustive solver's limits."""


@dataclass(frozen=True)
class OracleLimits:
    max_yards: int = 6
    max_paths_per_pair: int = 8
    max_demands: int = 4
    max_alternatives: int = 2_000_000

    def __post_init__(self):
        for name in ("max_yards", "max_paths_per_pair", "max_demands", "max_alternatives"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class OracleResult:
    status: str  # "optimal" or "infeasible"
    objective: float | None
    solution: TbspSolution | None


@dataclass(frozen=True)
class _Alternative:
    path: tuple[int, ...]
    sequence: tuple[tuple[int, int], ...]
    car_km: float
    reclass: float
    segments: tuple[tuple[tuple[int, int], tuple[int, ...]], ...]  # (block, route)


def _alternatives(inst: Instance, catalog: PathCatalog, o: int, d: int, n: int) -> list[_Alternative]:
    eps = catalog.epsilon
    out: list[_Alternative] = []
    for path in catalog.paths(o, d):
        prefix = [0.0]
        for arc in path.arcs:
            prefix.append(prefix[-1] + inst.link_map[arc].length)
        position = {node: idx for idx, node in enumerate(path.nodes)}
        for seq in enumerate_block_sequences(path):
            # every block of the chain must respect its own detour bound
            legal = True
            segments = []
            for p, q in seq:
                seg_km = prefix[position[q]] - prefix[position[p]]
                if seg_km > eps * catalog.shortest_km[(p, q)] + LENGTH_TOL:
                    legal = False
                    break
                segments.append(((p, q), path.nodes[position[p] : position[q] + 1]))
            if not legal:
                continue
            reclass = sum(n * inst.yard(q).reclass_delay for _, q in seq if q != d)
            out.append(
                _Alternative(
                    path=path.nodes,
                    sequence=tuple(seq),
                    car_km=n * path.length,
                    reclass=reclass,
                    segments=tuple(segments),
                )
            )
    return out


def _feasible_plan(inst: Instance, chosen: list[tuple[tuple[int, int], _Alternative]]):
    """Cross-shipment feasibility; returns plan pieces or None."""
    routes: dict[tuple[int, int], tuple[int, ...]] = {}
    flows: dict[tuple[int, int], float] = {}
    next_block: dict[tuple[int, int], int] = {}
    for (o, d), alt in chosen:
        n = inst.demands[(o, d)]
        for (p, q), route in alt.segments:
            if routes.setdefault((p, q), route) != route:
                return None  # one block, one route
            flows[(p, q)] = flows.get((p, q), 0.0) + n
            if next_block.setdefault((d, p), q) != q:
                return None  # intree: one outbound block per (destination, yard)

    # sort tracks per block and per yard budget
    tracks: dict[tuple[int, int], int] = {}
    per_yard: dict[int, int] = {}
    for (p, q), flow in flows.items():
        w = math.ceil(flow / inst.track_capacity - 1e-9)
        tracks[(p, q)] = w
        per_yard[p] = per_yard.get(p, 0) + w
    for p, total in per_yard.items():
        if total > inst.yard(p).sort_tracks:
            return None

    # yard reclassification capacity (arrivals, destination excluded)
    handled: dict[int, float] = {}
    for (o, d), alt in chosen:
        n = inst.demands[(o, d)]
        for _, q in alt.sequence:
            if q != d:
                handled[q] = handled.get(q, 0.0) + n
    for q, cars in handled.items():
        yard = inst.yard(q)
        if cars > yard.class_capacity * yard.capacity_ratio + 1e-9:
            return None

    # link train capacity
    link_trains: dict[tuple[int, int], float] = {}
    for (p, q), flow in flows.items():
        z = flow / inst.train_size
        for arc in zip(routes[(p, q)], routes[(p, q)][1:]):
            link_trains[arc] = link_trains.get(arc, 0.0) + z
    for arc, trains in link_trains.items():
        link = inst.link_map[arc]
        if trains > link.capacity * link.remaining_rate + 1e-9:
            return None

    return routes, flows, tracks


def oracle_optimum(
    inst: Instance,
    catalog: PathCatalog,
    limits: OracleLimits | None = None,
) -> OracleResult:
    """Certified optimum by full enumeration; refuses oversized inputs."""
    limits = limits or OracleLimits()
    if len(inst.yards) > limits.max_yards:
        raise OracleLimitError(f"{len(inst.yards)} yards exceed the limit {limits.max_yards}")
    demanded = inst.demand_pairs()
    if len(demanded) > limits.max_demands:
        raise OracleLimitError(f"{len(demanded)} demands exceed the limit {limits.max_demands}")
    for od in demanded:
        count = len(catalog.paths(*od))
        if count > limits.max_paths_per_pair:
            raise OracleLimitError(f"pair {od} has {count} legal paths, above the limit {limits.max_paths_per_pair}")

    per_demand = []
    total = 1
    for od in demanded:
        alts = _alternatives(inst, catalog, od[0], od[1], inst.demands[od])
        if not alts:
            return OracleResult(status="infeasible", objective=None, solution=None)
        per_demand.append((od, alts))
        total *= len(alts)
        if total > limits.max_alternatives:
            raise OracleLimitError(f"{total}+ combinations exceed the limit {limits.max_alternatives}")

    best_val: float | None = None
    best_plan = None

    lam = inst.km_factor

    def dfs(idx: int, chosen: list, partial: float, open_blocks: set):
        nonlocal best_val, best_plan
        if best_val is not None and partial >= best_val - 1e-12:
            return
        if idx == len(per_demand):
            pieces = _feasible_plan(inst, chosen)
            if pieces is None:
                return
            value = partial
            if best_val is None or value < best_val - 1e-12:
                best_val = value
                best_plan = (list(chosen), pieces)
            return
        od, alts = per_demand[idx]
        for alt in alts:
            extra = lam * alt.car_km + alt.reclass
            new_blocks = {pq for pq, _ in alt.segments if pq not in open_blocks}
            extra += sum(inst.train_size * inst.accumulation(p, q) for p, q in new_blocks)
            chosen.append((od, alt))
            dfs(idx + 1, chosen, partial + extra, open_blocks | new_blocks)
            chosen.pop()

    dfs(0, [], 0.0, set())

    if best_val is None:
        return OracleResult(status="infeasible", objective=None, solution=None)

    chosen, (routes, flows, tracks) = best_plan
    paths = {od: alt.path for od, alt in chosen}
    sequences = {od: alt.sequence for od, alt in chosen}
    blocks = {
        pq: BlockPlan(route=routes[pq], frequency=flows[pq] / inst.train_size, sort_tracks=tracks[pq])
        for pq in sorted(flows)
    }
    costs = recompute_costs(inst, paths, sequences, blocks)
    solution = TbspSolution(paths=paths, sequences=sequences, blocks=blocks, costs=costs)
    return OracleResult(status="optimal", objective=best_val, solution=solution)


# -- random instance generation ---------------------------------------------------------


def random_instance(seed: int, limits: OracleLimits | None = None) -> Instance:
    """Reproducible small instance within the oracle's limits.

    Construction: a random yard ordering with a directed line through it
    (so any demand from an earlier to a later yard is connected), a few
    extra random arcs, integer lengths 1..5 km, demands of 10..200 cars
    between ordered pairs along the line.  Capacities are mostly generous
    with an occasional tight link so that capacity rules get exercised.
    """
    limits = limits or OracleLimits()
    rng = random.Random(seed)
    n = rng.randint(3, min(5, limits.max_yards))
    ids = list(range(1, n + 1))
    order = ids[:]
    rng.shuffle(order)

    yards = tuple(
        Yard(
            id=i,
            reclass_delay=rng.choice([0.5, 1.0, 1.5, 2.0, 3.0]),
            class_capacity=float(rng.randint(500, 3000)),
            sort_tracks=rng.randint(2, 6),
            capacity_ratio=rng.choice([0.8, 0.9, 1.0]),
        )
        for i in ids
    )

    arcs: dict[tuple[int, int], Link] = {}

    def add_arc(tail: int, head: int):
        tight = rng.random() < 0.08
        arcs[(tail, head)] = Link(
            tail=tail,
            head=head,
            length=float(rng.randint(1, 5)),
            capacity=float(rng.randint(2, 4) if tight else rng.randint(6, 15)),
            remaining_rate=rng.choice([0.75, 1.0, 1.0]),
        )

    for a, b in zip(order, order[1:]):
        add_arc(a, b)
    max_links = 6 if n >= 5 else n + 2
    for _ in range(rng.randint(0, max(0, max_links - (n - 1)))):
        tail, head = rng.sample(ids, 2)
        if (tail, head) not in arcs:
            add_arc(tail, head)

    demand_count = rng.randint(1, min(3, limits.max_demands))
    demands: dict[tuple[int, int], int] = {}
    attempts = 0
    while len(demands) < demand_count and attempts < 50:
        attempts += 1
        a = rng.randrange(0, n - 1)
        b = rng.randrange(a + 1, n)
        od = (order[a], order[b])
        if od not in demands:
            demands[od] = rng.randint(10, 150)

    overrides = {}
    if rng.random() < 0.3:
        p, q = rng.sample(ids, 2)
        overrides[(p, q)] = float(rng.randint(5, 25))

    inst = Instance(
        yards=yards,
        links=tuple(arcs[key] for key in sorted(arcs)),
        demands=demands,
        train_size=rng.randint(25, 60),
        track_capacity=float(rng.randint(50, 200)),
        detour_ratio=rng.choice([1.0, 1.2, 1.5, 2.0]),
        km_factor=rng.choice([0.05, 0.1, 0.2]),
        accumulation_default=float(rng.randint(5, 20)),
        accumulation_overrides=overrides,
    )
    return validate_instance(inst)
