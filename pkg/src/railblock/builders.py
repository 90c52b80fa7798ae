"""Builders for the four optimization models.

Variable families (tag symbols follow the model documentation in the README):

    x[o,d,i,j]  binary   pair (o,d) routes over link (i,j)
    y[p,q]      binary   block (p,q) is provided
    z[p,q]      cont.    train frequency of block (p,q)
    u[o,d,p,q]  binary   shipment (o,d) rides block (p,q)
    v[d,p,q]    binary   traffic to d leaving yard p uses block (p,q)
    w[p,q]      integer  sort tracks dedicated to block (p,q)
    s[p,q,i,j]  cont.    linearization product x[p,q,i,j] * z[p,q]

Two build modes exist.  ``full`` enumerates every index combination (the
complete-enumeration shape whose size matches :func:`railblock.milp.
predicted_size`); ``reduced`` restricts x/u to the per-pair candidate sets
derived from legal paths, which never cuts off an optimal solution as long
as every legal path is enumerated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .instance import Instance
from .milp import BINARY, CONTINUOUS, INTEGER, MilpModel
from .pathgen import Path, PathCatalog

FULL = "full"
REDUCED = "reduced"


class BuildError(Exception):
    pass


class InfeasibleByConstruction(BuildError):
    """A demanded pair cannot be served at all; raised before any solve."""


@dataclass(frozen=True)
class BuildOptions:
    """Knobs shared by the model builders.

    ``big_m`` overrides the default frequency bound total_cars / train_size;
    a smaller value would cut off feasible frequencies and is rejected.
    When the detour bound is dropped in reduced mode, candidate paths are
    capped at ``no_detour_path_cap`` shortest paths per pair (the full and
    sequential modes stay exact without the cap).
    """

    reduction: str = REDUCED
    include_detour: bool = True
    big_m: float | None = None
    no_detour_path_cap: int = 20

    def __post_init__(self):
        if self.reduction not in (FULL, REDUCED):
            raise BuildError(f"unknown reduction mode {self.reduction!r}")
        if self.no_detour_path_cap < 1:
            raise BuildError("no_detour_path_cap must be >= 1")


def default_big_m(inst: Instance) -> float:
    return sum(inst.demands.values()) / inst.train_size


def _resolve_big_m(inst: Instance, opts: BuildOptions) -> float:
    floor = default_big_m(inst)
    if opts.big_m is None:
        return floor
    if opts.big_m < floor - 1e-9:
        raise BuildError(f"big_m {opts.big_m} is below the safe floor {floor} (total cars / train size)")
    return float(opts.big_m)


def containment(r_pq: Path, r_od: Path) -> bool:
    """True when every arc of r_pq appears in r_od.

    For simple paths that share endpoints p and q on r_od this is the same
    as r_pq being the contiguous p..q stretch of r_od.
    """
    return set(r_pq.arcs) <= set(r_od.arcs)


def _require_serveable(inst: Instance, catalog: PathCatalog) -> None:
    for od in inst.demand_pairs():
        if not catalog.paths(*od):
            raise InfeasibleByConstruction(f"demanded pair {od} has no legal path")


def _balance_rhs(i: int, o: int, d: int) -> float:
    if o == d:
        return 0.0
    if i == o:
        return 1.0
    if i == d:
        return -1.0
    return 0.0


# -- integrated model ---------------------------------------------------------------


def build_integrated(inst: Instance, catalog: PathCatalog, opts: BuildOptions | None = None) -> MilpModel:
    """Linearized integrated model: routing, block design, consolidation.

    In full mode every pair/index combination is enumerated; pairs that have
    no legal route get zero right-hand sides (and unroutable blocks' u
    variables are pinned to 0) so the model stays feasible on networks that
    are not strongly connected.
    """
    opts = opts or BuildOptions()
    _require_serveable(inst, catalog)
    big_m = _resolve_big_m(inst, opts)

    yards = inst.yard_ids()
    links = sorted(inst.link_map)
    demanded = inst.demand_pairs()
    demanded_set = set(demanded)
    full = opts.reduction == FULL

    def routable(pair: tuple[int, int]) -> bool:
        o, d = pair
        return o != d and bool(catalog.paths(o, d))

    if full:
        x_pairs = [(o, d) for o in yards for d in yards]
        x_arcs = {pair: links for pair in x_pairs}
        block_pairs = list(x_pairs)
        u_keys = [(o, d, p, q) for o in yards for d in yards for p in yards for q in yards]
        v_keys = [(d, p, q) for d in yards for p in yards for q in yards]
        s_arcs = {pair: links for pair in x_pairs}
    else:
        block_pairs = sorted({pq for od in demanded for pq in catalog.block_candidates[od]})
        x_pairs = block_pairs
        if opts.include_detour:
            x_arcs = {pair: sorted(catalog.link_candidates[pair]) for pair in x_pairs}
        else:
            x_arcs = {pair: links for pair in x_pairs}
        u_keys = [(o, d, p, q) for (o, d) in demanded for (p, q) in sorted(catalog.block_candidates[(o, d)])]
        v_keys = sorted({(d, p, q) for (o, d, p, q) in u_keys})
        s_arcs = {pair: x_arcs[pair] for pair in block_pairs}

    model = MilpModel(name=f"integrated-{opts.reduction}")
    for o, d in x_pairs:
        for i, j in x_arcs[(o, d)]:
            model.add_variable(BINARY, 0, 1, ("x", o, d, i, j))
    for p, q in block_pairs:
        model.add_variable(BINARY, 0, 1, ("y", p, q))
    for p, q in block_pairs:
        model.add_variable(CONTINUOUS, 0.0, math.inf, ("z", p, q))
    for o, d, p, q in u_keys:
        # blocks that have no legal route cannot carry anyone
        upper = 1.0 if routable((p, q)) else 0.0
        model.add_variable(BINARY if upper else INTEGER, 0.0, upper, ("u", o, d, p, q))
    for d, p, q in v_keys:
        model.add_variable(BINARY, 0, 1, ("v", d, p, q))
    for p, q in block_pairs:
        model.add_variable(INTEGER, 0.0, math.inf, ("w", p, q))
    for p, q in block_pairs:
        for i, j in s_arcs[(p, q)]:
            model.add_variable(CONTINUOUS, 0.0, math.inf, ("s", p, q, i, j))

    # objective: weighted car-km + accumulation + reclassification
    lam = inst.km_factor
    for (o, d), n in sorted(inst.demands.items()):
        if n <= 0 or (o, d) not in x_arcs:
            continue
        for i, j in x_arcs[(o, d)]:
            model.add_objective_term(model.var_id(("x", o, d, i, j)), lam * n * inst.link_map[(i, j)].length)
    for p, q in block_pairs:
        model.add_objective_term(model.var_id(("y", p, q)), inst.train_size * inst.accumulation(p, q))
    for o, d, p, q in u_keys:
        n = inst.demands.get((o, d), 0)
        if n > 0 and q != d:
            model.add_objective_term(model.var_id(("u", o, d, p, q)), n * inst.yard(q).reclass_delay)

    _emit_routing_rows(model, inst, catalog, x_pairs, x_arcs, routable, opts.include_detour, full)

    # Eq5-frequency: cars assigned to a block fix its train frequency
    u_by_block: dict[tuple[int, int], list[tuple[int, int]]] = {pq: [] for pq in block_pairs}
    for o, d, p, q in u_keys:
        u_by_block[(p, q)].append((o, d))
    for p, q in block_pairs:
        terms = [
            (model.var_id(("u", o, d, p, q)), float(inst.demands.get((o, d), 0)))
            for (o, d) in u_by_block[(p, q)]
        ]
        terms.append((model.var_id(("z", p, q)), -float(inst.train_size)))
        model.add_constraint(terms, "=", 0.0, ("Eq5-frequency", p, q))

    _emit_consolidation_rows(model, inst, u_keys, block_pairs, demanded_set, full, yards)

    # Eq14-pathmatch: a block's route must lie on every rider's route
    # (when the block IS the pair the x terms cancel and the row is vacuous)
    for o, d, p, q in u_keys:
        u_id = model.var_id(("u", o, d, p, q))
        for i, j in s_arcs.get((p, q), ()):
            merged: dict[int, float] = {u_id: 1.0}
            x_pq = model.var_id(("x", p, q, i, j))
            merged[x_pq] = merged.get(x_pq, 0.0) + 1.0
            if model.has_tag(("x", o, d, i, j)):
                x_od = model.var_id(("x", o, d, i, j))
                merged[x_od] = merged.get(x_od, 0.0) - 1.0
            model.add_constraint(list(merged.items()), "<=", 1.0, ("Eq14-pathmatch", o, d, p, q, i, j))

    # Eq22/23/24: s == x * z by big-M sandwich
    for p, q in block_pairs:
        z_id = model.var_id(("z", p, q))
        for i, j in s_arcs[(p, q)]:
            s_id = model.var_id(("s", p, q, i, j))
            x_id = model.var_id(("x", p, q, i, j))
            model.add_constraint([(s_id, 1.0), (x_id, -big_m)], "<=", 0.0, ("Eq22-linkM", p, q, i, j))
            model.add_constraint([(s_id, 1.0), (z_id, -1.0)], "<=", 0.0, ("Eq23-linkz", p, q, i, j))
            model.add_constraint(
                [(z_id, 1.0), (x_id, big_m), (s_id, -1.0)], "<=", big_m, ("Eq24-linklb", p, q, i, j)
            )

    # Eq26-linkcap: trains crossing each link stay within its capacity
    s_by_link: dict[tuple[int, int], list[int]] = {arc: [] for arc in links}
    for p, q in block_pairs:
        for arc in s_arcs[(p, q)]:
            s_by_link[arc].append(model.var_id(("s", p, q, arc[0], arc[1])))
    for i, j in links:
        terms = [(sid, 1.0) for sid in s_by_link[(i, j)]]
        if full or terms:
            link = inst.link_map[(i, j)]
            model.add_constraint(terms, "<=", link.capacity * link.remaining_rate, ("Eq26-linkcap", i, j))

    return model


def _emit_routing_rows(model, inst, catalog, x_pairs, x_arcs, routable, include_detour, full) -> None:
    """Physical-layer rows: flow conservation (Eq2) and detour bounds (Eq4)."""
    for o, d in x_pairs:
        arcs = x_arcs[(o, d)]
        if not arcs and not routable((o, d)):
            continue
        outgoing: dict[int, list[int]] = {}
        incoming: dict[int, list[int]] = {}
        nodes = {o, d}
        for i, j in arcs:
            vid = model.var_id(("x", o, d, i, j))
            outgoing.setdefault(i, []).append(vid)
            incoming.setdefault(j, []).append(vid)
            nodes.update((i, j))
        ok = routable((o, d))
        node_iter = inst.yard_ids() if full else sorted(nodes)
        for i in node_iter:
            terms = [(vid, 1.0) for vid in outgoing.get(i, [])]
            terms += [(vid, -1.0) for vid in incoming.get(i, [])]
            rhs = _balance_rhs(i, o, d) if ok else 0.0
            model.add_constraint(terms, "=", rhs, ("Eq2-flow", o, d, i))
        if include_detour:
            terms = [
                (model.var_id(("x", o, d, i, j)), inst.link_map[(i, j)].length) for i, j in arcs
            ]
            bound = catalog.epsilon * catalog.shortest_km[(o, d)] if ok else 0.0
            model.add_constraint(terms, "<=", bound, ("Eq4-detour", o, d))


def _emit_consolidation_rows(model, inst, u_keys, block_pairs, demanded_set, full, yards,
                             with_provided_link: bool = True) -> None:
    """Service-layer rows shared by the integrated and block models:
    Eq6 chain conservation, Eq7 yard capacity, Eq8 track budget,
    Eq9/Eq10 track-count sandwich, Eq11/Eq12 intree, and (for the
    integrated model only) Eq13 provided-only; the block model's
    containment rows already tie u to y."""
    gamma = inst.track_capacity

    u_by_od: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for o, d, p, q in u_keys:
        u_by_od.setdefault((o, d), []).append((p, q))

    # Eq6-chain: each shipment's blocks chain origin -> destination
    od_iter = [(o, d) for o in yards for d in yards] if full else sorted(u_by_od)
    for o, d in od_iter:
        blocks = u_by_od.get((o, d), [])
        if full:
            nodes = list(yards)
        else:
            nodes = sorted({o, d} | {p for p, _ in blocks} | {q for _, q in blocks})
        outgoing: dict[int, list[int]] = {}
        incoming: dict[int, list[int]] = {}
        for p, q in blocks:
            vid = model.var_id(("u", o, d, p, q))
            outgoing.setdefault(p, []).append(vid)
            incoming.setdefault(q, []).append(vid)
        demandedness = (o, d) in demanded_set
        for p in nodes:
            # u[p,p] self-blocks appear on both sides; merge their coefficients
            merged: dict[int, float] = {}
            for vid in outgoing.get(p, []):
                merged[vid] = merged.get(vid, 0.0) + 1.0
            for vid in incoming.get(p, []):
                merged[vid] = merged.get(vid, 0.0) - 1.0
            terms = [(vid, coef) for vid, coef in merged.items() if coef != 0.0]
            rhs = _balance_rhs(p, o, d) if demandedness else 0.0
            model.add_constraint(terms, "=", rhs, ("Eq6-chain", o, d, p))

    # Eq7-yardcap: cars re-sorted at a yard within its usable capacity
    arrivals: dict[int, list[tuple[int, float]]] = {}
    for o, d, p, q in u_keys:
        n = inst.demands.get((o, d), 0)
        if n > 0 and d != q:
            arrivals.setdefault(q, []).append((model.var_id(("u", o, d, p, q)), float(n)))
    yard_iter = yards if full else sorted(arrivals)
    for q in yard_iter:
        yard = inst.yard(q)
        model.add_constraint(arrivals.get(q, []), "<=", yard.class_capacity * yard.capacity_ratio, ("Eq7-yardcap", q))

    # Eq8-trackbudget: sort tracks used at a yard within its stock
    w_by_tail: dict[int, list[int]] = {}
    for p, q in block_pairs:
        w_by_tail.setdefault(p, []).append(model.var_id(("w", p, q)))
    tail_iter = yards if full else sorted(w_by_tail)
    for p in tail_iter:
        terms = [(vid, 1.0) for vid in w_by_tail.get(p, [])]
        model.add_constraint(terms, "<=", float(inst.yard(p).sort_tracks), ("Eq8-trackbudget", p))

    # Eq9/Eq10: track count pinned to ceil(block flow / track capacity)
    flow_terms: dict[tuple[int, int], list[tuple[int, float]]] = {pq: [] for pq in block_pairs}
    for o, d, p, q in u_keys:
        n = inst.demands.get((o, d), 0)
        if n > 0:
            flow_terms[(p, q)].append((model.var_id(("u", o, d, p, q)), float(n)))
    for p, q in block_pairs:
        w_id = model.var_id(("w", p, q))
        lhs = [(w_id, gamma)] + [(vid, -coef) for vid, coef in flow_terms[(p, q)]]
        model.add_constraint(lhs, "<=", gamma - 1.0, ("Eq9-tracklb", p, q))
        lhs = list(flow_terms[(p, q)]) + [(w_id, -gamma)]
        model.add_constraint(lhs, "<=", 0.0, ("Eq10-trackub", p, q))

    # Eq11/Eq12: merged outbound consolidation per destination (intree rule)
    for o, d, p, q in u_keys:
        model.add_constraint(
            [(model.var_id(("u", o, d, p, q)), 1.0), (model.var_id(("v", d, p, q)), -1.0)],
            "<=",
            0.0,
            ("Eq11-merge", o, d, p, q),
        )
    v_by_dp: dict[tuple[int, int], list[int]] = {}
    for tag, vid in model.tag_index.items():
        if tag[0] == "v":
            _, d, p, q = tag
            v_by_dp.setdefault((d, p), []).append(vid)
    dp_iter = [(d, p) for d in yards for p in yards] if full else sorted(v_by_dp)
    for d, p in dp_iter:
        terms = [(vid, 1.0) for vid in sorted(v_by_dp.get((d, p), []))]
        model.add_constraint(terms, "<=", 1.0, ("Eq12-intree", d, p))

    # Eq13-provided: consolidation only into provided blocks
    if with_provided_link:
        for o, d, p, q in u_keys:
            model.add_constraint(
                [(model.var_id(("u", o, d, p, q)), 1.0), (model.var_id(("y", p, q)), -1.0)],
                "<=",
                0.0,
                ("Eq13-provided", o, d, p, q),
            )


# -- path model -------------------------------------------------------------------


def build_path_model(inst: Instance, catalog: PathCatalog, opts: BuildOptions | None = None) -> MilpModel:
    """Stage-one routing model: binary arc choices, car-capacity links.

    Reduced mode keeps only demanded pairs (everything else is irrelevant to
    the objective and the car-capacity rows).  With the detour bound dropped
    the reduced model routes over all links, which keeps the relaxation
    exact.
    """
    opts = opts or BuildOptions()
    _require_serveable(inst, catalog)
    yards = inst.yard_ids()
    links = sorted(inst.link_map)
    demanded = inst.demand_pairs()
    full = opts.reduction == FULL

    def routable(pair: tuple[int, int]) -> bool:
        o, d = pair
        return o != d and bool(catalog.paths(o, d))

    if full:
        x_pairs = [(o, d) for o in yards for d in yards]
        x_arcs = {pair: links for pair in x_pairs}
    else:
        x_pairs = demanded
        if opts.include_detour:
            x_arcs = {pair: sorted(catalog.link_candidates[pair]) for pair in x_pairs}
        else:
            x_arcs = {pair: links for pair in x_pairs}

    model = MilpModel(name=f"path-{opts.reduction}")
    for o, d in x_pairs:
        for i, j in x_arcs[(o, d)]:
            model.add_variable(BINARY, 0, 1, ("x", o, d, i, j))

    for (o, d), n in sorted(inst.demands.items()):
        if n <= 0 or (o, d) not in x_arcs:
            continue
        for i, j in x_arcs[(o, d)]:
            model.add_objective_term(model.var_id(("x", o, d, i, j)), n * inst.link_map[(i, j)].length)

    _emit_routing_rows(model, inst, catalog, x_pairs, x_arcs, routable, opts.include_detour, full)

    # Eq28-carcap: cars on a link within train size * capacity * remaining rate
    terms_by_link: dict[tuple[int, int], list[tuple[int, float]]] = {arc: [] for arc in links}
    for (o, d) in x_pairs:
        n = inst.demands.get((o, d), 0)
        if n <= 0:
            continue
        for arc in x_arcs[(o, d)]:
            terms_by_link[arc].append((model.var_id(("x", o, d, arc[0], arc[1])), float(n)))
    for i, j in links:
        terms = terms_by_link[(i, j)]
        if full or terms:
            link = inst.link_map[(i, j)]
            model.add_constraint(
                terms, "<=", inst.train_size * link.capacity * link.remaining_rate, ("Eq28-carcap", i, j)
            )
    return model


# -- block model ------------------------------------------------------------------


def build_block_model(
    inst: Instance,
    paths: dict[tuple[int, int], Path],
    opts: BuildOptions | None = None,
) -> MilpModel:
    """Stage-two consolidation model over fixed per-pair routes.

    ``paths`` fixes one route per ordered pair (absent entries mean the pair
    has no route); a shipment may ride block (p, q) only when the fixed
    (p, q) route is fully contained in the shipment's fixed route.  Train
    frequencies are not decisions here; they follow from the block flows.
    """
    opts = opts or BuildOptions()
    yards = inst.yard_ids()
    demanded = inst.demand_pairs()
    demanded_set = set(demanded)
    full = opts.reduction == FULL

    for od in demanded:
        if od not in paths:
            raise InfeasibleByConstruction(f"demanded pair {od} has no fixed route")

    def indicator(o: int, d: int, p: int, q: int) -> bool:
        if p == q or (o, d) not in paths or (p, q) not in paths:
            return False
        return containment(paths[(p, q)], paths[(o, d)])

    if full:
        u_keys = [(o, d, p, q) for o in yards for d in yards for p in yards for q in yards]
        v_keys = [(d, p, q) for d in yards for p in yards for q in yards]
        block_pairs = [(p, q) for p in yards for q in yards]
    else:
        u_keys = [
            (o, d, p, q)
            for (o, d) in demanded
            for p in paths[(o, d)].nodes
            for q in paths[(o, d)].nodes
            if indicator(o, d, p, q)
        ]
        block_pairs = sorted({(p, q) for (_, _, p, q) in u_keys})
        v_keys = sorted({(d, p, q) for (_, d, p, q) in u_keys})

    model = MilpModel(name=f"block-{opts.reduction}")
    for p, q in block_pairs:
        model.add_variable(BINARY, 0, 1, ("y", p, q))
    for o, d, p, q in u_keys:
        model.add_variable(BINARY, 0, 1, ("u", o, d, p, q))
    for d, p, q in v_keys:
        model.add_variable(BINARY, 0, 1, ("v", d, p, q))
    for p, q in block_pairs:
        model.add_variable(INTEGER, 0.0, math.inf, ("w", p, q))

    for p, q in block_pairs:
        model.add_objective_term(model.var_id(("y", p, q)), inst.train_size * inst.accumulation(p, q))
    for o, d, p, q in u_keys:
        n = inst.demands.get((o, d), 0)
        if n > 0 and q != d:
            model.add_objective_term(model.var_id(("u", o, d, p, q)), n * inst.yard(q).reclass_delay)

    # Eq30-contain: ride only provided blocks whose route lies on yours
    for o, d, p, q in u_keys:
        terms = [(model.var_id(("u", o, d, p, q)), 1.0)]
        if indicator(o, d, p, q):
            terms.append((model.var_id(("y", p, q)), -1.0))
        model.add_constraint(terms, "<=", 0.0, ("Eq30-contain", o, d, p, q))

    _emit_consolidation_rows(model, inst, u_keys, block_pairs, demanded_set, full, yards,
                             with_provided_link=False)
    return model
