"""Detour-bounded path enumeration and candidate-set construction.

For every ordered yard pair the catalog stores the exact shortest distance,
the complete list of legal paths (simple paths whose length stays within the
detour ratio times the shortest distance), the set of links those paths use
and the set of candidate blocks that can ride on them.  Zero-demand pairs are
covered too: block routes need paths just like shipments do.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

from .instance import Instance

LENGTH_TOL = 1e-9


class PathEnumerationError(Exception):
    """Raised when enumeration would exceed the configured path budget."""


@dataclass(frozen=True)
class Path:
    """A simple directed path with its total length in km."""

    nodes: tuple[int, ...]
    length: float

    @property
    def arcs(self) -> tuple[tuple[int, int], ...]:
        return tuple(zip(self.nodes, self.nodes[1:]))

    @property
    def origin(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]


def path_from_nodes(inst: Instance, nodes: tuple[int, ...] | list[int]) -> Path:
    """Build a Path from a node sequence, checking links exist and no repeats."""
    nodes = tuple(nodes)
    if len(nodes) < 2:
        raise ValueError("a path needs at least two nodes")
    if len(set(nodes)) != len(nodes):
        raise ValueError(f"path {nodes} repeats a node")
    link_map = inst.link_map
    length = 0.0
    for arc in zip(nodes, nodes[1:]):
        if arc not in link_map:
            raise ValueError(f"path {nodes}: no link {arc}")
        length += link_map[arc].length
    return Path(nodes=nodes, length=length)


@dataclass
class PathCatalog:
    """Per-OD shortest distances, legal paths and candidate sets.

    ``legal_paths`` lists paths sorted by (length, node sequence); the first
    entry therefore realizes the shortest distance.  ``link_candidates`` and
    ``block_candidates`` are only populated after :func:`candidate_sets`.
    """

    epsilon: float
    shortest_km: dict[tuple[int, int], float]
    legal_paths: dict[tuple[int, int], list[Path]]
    link_candidates: dict[tuple[int, int], frozenset[tuple[int, int]]] = field(default_factory=dict)
    block_candidates: dict[tuple[int, int], frozenset[tuple[int, int]]] = field(default_factory=dict)

    def shortest(self, o: int, d: int) -> float | None:
        return self.shortest_km.get((o, d))

    def paths(self, o: int, d: int) -> list[Path]:
        return self.legal_paths.get((o, d), [])


# -- shortest distances ----------------------------------------------------------


def _dijkstra(
    adj: dict[int, list[tuple[int, float]]],
    source: int,
    target: int | None = None,
    banned_nodes: frozenset[int] = frozenset(),
    banned_arcs: frozenset[tuple[int, int]] = frozenset(),
) -> tuple[dict[int, float], dict[int, int]]:
    """Distances and parent pointers from ``source``; honors ban lists."""
    dist: dict[int, float] = {source: 0.0}
    parent: dict[int, int] = {}
    done: set[int] = set()
    heap: list[tuple[float, int]] = [(0.0, source)]
    while heap:
        d_u, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if target is not None and u == target:
            break
        for v, w in adj.get(u, ()):
            if v in banned_nodes or (u, v) in banned_arcs or v in done:
                continue
            nd = d_u + w
            if nd < dist.get(v, math.inf) - LENGTH_TOL:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    return dist, parent


def _shortest_path(
    adj: dict[int, list[tuple[int, float]]],
    source: int,
    target: int,
    banned_nodes: frozenset[int] = frozenset(),
    banned_arcs: frozenset[tuple[int, int]] = frozenset(),
) -> tuple[float, tuple[int, ...]] | None:
    if source in banned_nodes:
        return None
    dist, parent = _dijkstra(adj, source, target, banned_nodes, banned_arcs)
    if target not in dist:
        return None
    nodes = [target]
    while nodes[-1] != source:
        nodes.append(parent[nodes[-1]])
    return dist[target], tuple(reversed(nodes))


def shortest_distances(inst: Instance) -> dict[tuple[int, int], float]:
    """Exact directed shortest-path km per ordered pair; unreachable pairs absent."""
    adj = inst.adjacency()
    out: dict[tuple[int, int], float] = {}
    for o in inst.yard_ids():
        dist, _ = _dijkstra(adj, o)
        for d, km in dist.items():
            out[(o, d)] = km
    return out


# -- legal path enumeration (Yen's scheme with a length bound) --------------------


def _yen_paths(
    adj: dict[int, list[tuple[int, float]]],
    o: int,
    d: int,
    bound: float,
    max_paths: int,
    truncate_at: int | None = None,
) -> list[tuple[float, tuple[int, ...]]]:
    """All simple o->d paths with length <= bound, in nondecreasing length.

    Runs Yen's deviation scheme but stops at the first candidate whose length
    exceeds the bound instead of using a fixed K.  ``truncate_at`` stops
    enumeration benignly after that many paths (used when the caller bounds
    candidates by count rather than by length); exceeding ``max_paths`` is an
    error, never a silent truncation.
    """
    weight = {(u, v): w for u, nbrs in adj.items() for v, w in nbrs}
    first = _shortest_path(adj, o, d)
    if first is None or first[0] > bound + LENGTH_TOL:
        return []
    if max_paths < 1:
        raise PathEnumerationError(
            f"more than {max_paths} legal paths for pair ({o},{d}); raise the budget or tighten the detour ratio"
        )
    accepted: list[tuple[float, tuple[int, ...]]] = [first]
    candidates: list[tuple[float, tuple[int, ...]]] = []
    seen: set[tuple[int, ...]] = {first[1]}
    while True:
        if truncate_at is not None and len(accepted) >= truncate_at:
            break
        prev = accepted[-1][1]
        prefix = [0.0]
        for arc in zip(prev, prev[1:]):
            prefix.append(prefix[-1] + weight[arc])
        # deviate from every node of the last accepted path
        for i in range(len(prev) - 1):
            spur = prev[i]
            root = prev[: i + 1]
            banned_arcs = set()
            for _, nodes in accepted:
                if nodes[: i + 1] == root and len(nodes) > i + 1:
                    banned_arcs.add((nodes[i], nodes[i + 1]))
            banned_nodes = frozenset(root[:-1])
            spur_result = _shortest_path(adj, spur, d, banned_nodes, frozenset(banned_arcs))
            if spur_result is None:
                continue
            total = prefix[i] + spur_result[0]
            nodes = root[:-1] + spur_result[1]
            if nodes in seen or total > bound + LENGTH_TOL:
                continue
            seen.add(nodes)
            heapq.heappush(candidates, (total, nodes))
        if not candidates:
            break
        best = heapq.heappop(candidates)
        if best[0] > bound + LENGTH_TOL:
            break
        accepted.append(best)
        if len(accepted) > max_paths:
            raise PathEnumerationError(
                f"more than {max_paths} legal paths for pair ({o},{d}); raise the budget or tighten the detour ratio"
            )
    return accepted


def enumerate_legal_paths(
    inst: Instance,
    o: int,
    d: int,
    epsilon: float | None = None,
    max_paths: int = 10_000,
    shortest: float | None = None,
    truncate_at: int | None = None,
) -> list[Path]:
    """Every simple o->d path within the detour bound, sorted deterministically.

    The bound is epsilon times the shortest o->d distance (epsilon defaults
    to the instance's detour ratio).  Unreachable pairs give an empty list.
    Sorting is by (length, node sequence) so ties are broken reproducibly.
    """
    if o == d:
        return []
    adj = inst.adjacency()
    if shortest is None:
        found = _shortest_path(adj, o, d)
        if found is None:
            return []
        shortest = found[0]
    eps = inst.detour_ratio if epsilon is None else epsilon
    bound = eps * shortest
    raw = _yen_paths(adj, o, d, bound, max_paths, truncate_at)
    raw.sort(key=lambda item: (item[0], item[1]))
    return [Path(nodes=nodes, length=length) for length, nodes in raw]


def build_catalog(
    inst: Instance,
    epsilon: float | None = None,
    max_paths: int = 10_000,
    truncate_at: int | None = None,
    with_candidates: bool = True,
) -> PathCatalog:
    """Enumerate legal paths for all ordered pairs and derive candidate sets."""
    eps = inst.detour_ratio if epsilon is None else epsilon
    dist = shortest_distances(inst)
    legal: dict[tuple[int, int], list[Path]] = {}
    for o in inst.yard_ids():
        for d in inst.yard_ids():
            if o == d or (o, d) not in dist:
                continue
            legal[(o, d)] = enumerate_legal_paths(
                inst, o, d, epsilon=eps, max_paths=max_paths, shortest=dist[(o, d)], truncate_at=truncate_at
            )
    catalog = PathCatalog(epsilon=eps, shortest_km=dist, legal_paths=legal)
    if with_candidates:
        candidate_sets(inst, catalog)
    return catalog


def candidate_sets(inst: Instance, catalog: PathCatalog) -> PathCatalog:
    """Fill the per-pair usable-link and candidate-block sets.

    A block (p, q) is a candidate for pair (o, d) when some legal (o, d)
    path visits p before q and that p..q stretch respects the block's own
    detour bound (block routes are detour-constrained like any other pair).
    """
    eps = catalog.epsilon
    dist = catalog.shortest_km
    for od, paths in catalog.legal_paths.items():
        links: set[tuple[int, int]] = set()
        blocks: set[tuple[int, int]] = set()
        for path in paths:
            links.update(path.arcs)
            prefix = [0.0]
            for arc in path.arcs:
                prefix.append(prefix[-1] + inst.link_map[arc].length)
            nodes = path.nodes
            for i in range(len(nodes) - 1):
                for j in range(i + 1, len(nodes)):
                    p, q = nodes[i], nodes[j]
                    seg = prefix[j] - prefix[i]
                    if seg <= eps * dist[(p, q)] + LENGTH_TOL:
                        blocks.add((p, q))
        catalog.link_candidates[od] = frozenset(links)
        catalog.block_candidates[od] = frozenset(blocks)
    return catalog


# -- block sequences over a fixed path ---------------------------------------------


def enumerate_block_sequences(path: Path) -> list[list[tuple[int, int]]]:
    """All block chains over a path: one per subset of intermediate stops.

    A chain visits the origin, an increasing subsequence of intermediate
    yards and the destination; each consecutive stop pair is one block.  A
    path with k intermediate yards yields exactly 2**k chains, ordered by
    the subset bitmask (empty subset, i.e. the direct block, first).
    """
    nodes = path.nodes
    if len(nodes) < 2:
        raise ValueError("path must have at least one arc")
    inner = nodes[1:-1]
    k = len(inner)
    sequences: list[list[tuple[int, int]]] = []
    for mask in range(1 << k):
        stops = [nodes[0]]
        stops.extend(inner[i] for i in range(k) if mask >> i & 1)
        stops.append(nodes[-1])
        sequences.append(list(zip(stops, stops[1:])))
    return sequences


def reclassification_yards(sequence: list[tuple[int, int]]) -> list[int]:
    """Yards where a chain's cars are handled: every block head, destination included."""
    return [q for _, q in sequence]
