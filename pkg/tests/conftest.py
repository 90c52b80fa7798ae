import itertools

import pytest

from railblock.instance import Instance, instance_from_dict
from railblock.pathgen import build_catalog


def fig1_dict(**param_overrides):
    """The six-yard example network: the only 1->5 routes are 1-2-3-5 and 1-2-4-5."""
    params = {
        "m": 50,
        "gamma": 200,
        "epsilon": 1.2,
        "lambda": 0.1,
        "c_default": 10,
        "c_overrides": [],
    }
    params.update(param_overrides)
    return {
        "yards": [{"id": i, "t": 1.0, "g": 100000, "h": 10, "beta": 1.0} for i in range(1, 7)],
        "links": [
            {"i": a, "j": b, "l": 1.0, "f": 10, "alpha": 1.0}
            for a, b in [(1, 2), (2, 3), (2, 4), (3, 5), (4, 5), (5, 6)]
        ],
        "demands": [{"o": 1, "d": 5, "n": 100}],
        "params": params,
    }


@pytest.fixture(scope="session")
def fig1() -> Instance:
    return instance_from_dict(fig1_dict())


@pytest.fixture(scope="session")
def fig1_catalog(fig1):
    return build_catalog(fig1)


def tiny_instance(v: int, e: int) -> Instance:
    """Hand-built instances at given (yard, link) counts for size checks."""
    if (v, e) == (4, 4):
        links = [(1, 2), (2, 3), (3, 4), (4, 1)]
        demands = [{"o": 1, "d": 3, "n": 50}]
    elif (v, e) == (5, 6):
        links = [(1, 2), (2, 3), (3, 4), (4, 5), (1, 3), (2, 4)]
        demands = [{"o": 1, "d": 5, "n": 60}]
    elif (v, e) == (6, 6):
        return instance_from_dict(fig1_dict())
    else:
        raise ValueError((v, e))
    doc = {
        "yards": [{"id": i, "t": 1.0, "g": 5000, "h": 6, "beta": 1.0} for i in range(1, v + 1)],
        "links": [{"i": a, "j": b, "l": 1.0, "f": 8, "alpha": 1.0} for a, b in links],
        "demands": demands,
        "params": {"m": 40, "gamma": 100, "epsilon": 1.5, "lambda": 0.1, "c_default": 8, "c_overrides": []},
    }
    return instance_from_dict(doc)


def dfs_simple_paths(inst: Instance, o: int, d: int):
    """Brute-force enumeration of every simple directed o->d path (oracle)."""
    adj = {}
    for (i, j), link in inst.link_map.items():
        adj.setdefault(i, []).append((j, link.length))
    out = []

    def recurse(node, trail, km):
        if node == d:
            out.append((tuple(trail), km))
            return
        for nxt, w in adj.get(node, []):
            if nxt not in trail:
                trail.append(nxt)
                recurse(nxt, trail, km + w)
                trail.pop()

    recurse(o, [o], 0.0)
    return out


def all_blockings_brute(path_nodes):
    """Every block chain over a node sequence, by explicit subset enumeration."""
    inner = list(path_nodes[1:-1])
    chains = []
    for r in range(len(inner) + 1):
        for subset in itertools.combinations(inner, r):
            stops = [path_nodes[0], *subset, path_nodes[-1]]
            chains.append(tuple(zip(stops, stops[1:])))
    return chains
