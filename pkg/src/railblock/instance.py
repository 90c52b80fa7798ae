"""Problem data for the train blocking / shipment path optimizer.

An :class:`Instance` bundles the classification yards, the directed physical
links between them, the car demands per origin-destination pair and the
scalar planning parameters.  Instances are immutable after construction and
are validated eagerly, so every downstream module can rely on the invariants
documented on the types below.
"""

from __future__ import annotations

import csv
import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping


class InstanceError(Exception):
    """Base class for instance loading/validation problems."""


class InstanceParseError(InstanceError):
    """Raised when a file cannot be parsed; carries location diagnostics."""


class InstanceValidationError(InstanceError):
    """Raised when parsed data violates a structural invariant."""


@dataclass(frozen=True)
class Yard:
    """A classification yard.

    reclass_delay   hours of handling per car re-sorted here
    class_capacity  cars the yard can re-sort in the planning horizon
    sort_tracks     number of classification tracks
    capacity_ratio  usable fraction of class_capacity, in [0, 1]
    """

    id: int
    reclass_delay: float
    class_capacity: float
    sort_tracks: int
    capacity_ratio: float


@dataclass(frozen=True)
class Link:
    """A directed physical track section from ``tail`` to ``head``.

    A line usable in both directions appears as two Link records; nothing in
    the package ever infers a reverse arc.
    """

    tail: int
    head: int
    length: float
    capacity: float
    remaining_rate: float


@dataclass(frozen=True)
class Instance:
    """Immutable problem instance.

    demands maps ordered yard pairs to car counts; pairs with a positive
    count are the shipments that must be routed.  ``accumulation_default``
    applies to every block unless overridden per ordered pair.
    """

    yards: tuple[Yard, ...]
    links: tuple[Link, ...]
    demands: dict[tuple[int, int], int]
    train_size: int
    track_capacity: float
    detour_ratio: float
    km_factor: float
    accumulation_default: float
    accumulation_overrides: dict[tuple[int, int], float] = field(default_factory=dict)

    # -- convenience accessors -------------------------------------------------

    def yard_ids(self) -> list[int]:
        return [y.id for y in self.yards]

    def yard(self, yard_id: int) -> Yard:
        try:
            return self._yard_map[yard_id]
        except KeyError:
            raise KeyError(f"unknown yard id {yard_id}") from None

    @property
    def _yard_map(self) -> dict[int, Yard]:
        # cached lazily on the instance dict (frozen dataclass workaround)
        cache = object.__getattribute__(self, "__dict__").get("_yard_cache")
        if cache is None:
            cache = {y.id: y for y in self.yards}
            object.__getattribute__(self, "__dict__")["_yard_cache"] = cache
        return cache

    @property
    def link_map(self) -> dict[tuple[int, int], Link]:
        cache = object.__getattribute__(self, "__dict__").get("_link_cache")
        if cache is None:
            cache = {(l.tail, l.head): l for l in self.links}
            object.__getattribute__(self, "__dict__")["_link_cache"] = cache
        return cache

    def accumulation(self, p: int, q: int) -> float:
        return self.accumulation_overrides.get((p, q), self.accumulation_default)

    def demand_pairs(self) -> list[tuple[int, int]]:
        """Ordered pairs with a positive car count, sorted."""
        return sorted(od for od, n in self.demands.items() if n > 0)

    def total_cars(self) -> int:
        return sum(self.demands.values())

    def adjacency(self) -> dict[int, list[tuple[int, float]]]:
        """Outgoing (head, length) lists per yard, deterministic order."""
        adj: dict[int, list[tuple[int, float]]] = {y.id: [] for y in self.yards}
        for link in sorted(self.links, key=lambda l: (l.tail, l.head)):
            adj[link.tail].append((link.head, link.length))
        return adj


@dataclass(frozen=True)
class InstanceSummary:
    yard_count: int
    link_count: int
    demand_pairs: int
    total_cars: int


def summarize(inst: Instance) -> InstanceSummary:
    """Counts of yards, links and demand entries plus total cars."""
    return InstanceSummary(
        yard_count=len(inst.yards),
        link_count=len(inst.links),
        demand_pairs=len(inst.demands),
        total_cars=inst.total_cars(),
    )


# -- validation ----------------------------------------------------------------


def _reachable_from(adj: Mapping[int, list[tuple[int, float]]], origin: int) -> set[int]:
    seen = {origin}
    queue = deque([origin])
    while queue:
        node = queue.popleft()
        for head, _ in adj.get(node, ()):
            if head not in seen:
                seen.add(head)
                queue.append(head)
    return seen


def validate_instance(inst: Instance) -> Instance:
    """Check every structural invariant; returns the instance unchanged.

    Raises InstanceValidationError naming the violated invariant.
    """
    seen_ids: set[int] = set()
    for yard in inst.yards:
        if not isinstance(yard.id, int) or yard.id <= 0:
            raise InstanceValidationError(f"yard id must be a positive integer, got {yard.id!r}")
        if yard.id in seen_ids:
            raise InstanceValidationError(f"duplicate yard id {yard.id}")
        seen_ids.add(yard.id)
        if yard.reclass_delay < 0:
            raise InstanceValidationError(f"yard {yard.id}: reclass_delay must be >= 0")
        if yard.class_capacity < 0:
            raise InstanceValidationError(f"yard {yard.id}: class_capacity must be >= 0")
        if not isinstance(yard.sort_tracks, int) or yard.sort_tracks < 0:
            raise InstanceValidationError(f"yard {yard.id}: sort_tracks must be a non-negative integer")
        if not 0.0 <= yard.capacity_ratio <= 1.0:
            raise InstanceValidationError(f"yard {yard.id}: capacity_ratio out of range [0, 1]")

    seen_arcs: set[tuple[int, int]] = set()
    for link in inst.links:
        if link.tail == link.head:
            raise InstanceValidationError(f"link ({link.tail},{link.head}): self-loops are not allowed")
        for end in (link.tail, link.head):
            if end not in seen_ids:
                raise InstanceValidationError(f"link ({link.tail},{link.head}): unknown yard {end}")
        if (link.tail, link.head) in seen_arcs:
            raise InstanceValidationError(f"duplicate link ({link.tail},{link.head})")
        seen_arcs.add((link.tail, link.head))
        if not link.length > 0:
            raise InstanceValidationError(f"link ({link.tail},{link.head}): length must be > 0")
        if link.capacity < 0:
            raise InstanceValidationError(f"link ({link.tail},{link.head}): capacity must be >= 0")
        if not 0.0 <= link.remaining_rate <= 1.0:
            raise InstanceValidationError(f"link ({link.tail},{link.head}): remaining_rate out of range [0, 1]")

    for (o, d), n in inst.demands.items():
        if o not in seen_ids or d not in seen_ids:
            raise InstanceValidationError(f"demand ({o},{d}): unknown yard")
        if o == d:
            raise InstanceValidationError(f"demand ({o},{d}): origin and destination must differ")
        if n < 0:
            raise InstanceValidationError(f"demand ({o},{d}): car count must be >= 0")

    if not inst.train_size > 0:
        raise InstanceValidationError("train_size must be > 0")
    if not inst.track_capacity > 0:
        raise InstanceValidationError("track_capacity must be > 0")
    if not inst.detour_ratio >= 1.0:
        raise InstanceValidationError("detour_ratio must be >= 1")
    if inst.km_factor < 0:
        raise InstanceValidationError("km_factor must be >= 0")
    if inst.accumulation_default < 0:
        raise InstanceValidationError("accumulation default must be >= 0")
    for (p, q), c in inst.accumulation_overrides.items():
        if p not in seen_ids or q not in seen_ids:
            raise InstanceValidationError(f"accumulation override ({p},{q}): unknown yard")
        if c < 0:
            raise InstanceValidationError(f"accumulation override ({p},{q}): value must be >= 0")

    adj = inst.adjacency()
    reach_cache: dict[int, set[int]] = {}
    for o, d in inst.demand_pairs():
        if o not in reach_cache:
            reach_cache[o] = _reachable_from(adj, o)
        if d not in reach_cache[o]:
            raise InstanceValidationError(f"demand ({o},{d}): destination not reachable from origin")

    return inst


# -- JSON serialization ----------------------------------------------------------

_YARD_FIELDS = ("id", "t", "g", "h", "beta")
_LINK_FIELDS = ("i", "j", "l", "f", "alpha")
_DEMAND_FIELDS = ("o", "d", "n")


def _get(record: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in record:
        raise InstanceParseError(f"{where}: missing field '{key}'")
    return record[key]


def _num(value: Any, where: str, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceParseError(f"{where}: field '{key}' must be a number, got {value!r}")
    return value


def _int(value: Any, where: str, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InstanceParseError(f"{where}: field '{key}' must be an integer, got {value!r}")
    return value


def instance_from_dict(doc: Mapping[str, Any]) -> Instance:
    """Build and validate an Instance from the JSON document layout."""
    if not isinstance(doc, Mapping):
        raise InstanceParseError("instance document must be a JSON object")
    for key in ("yards", "links", "demands", "params"):
        if key not in doc:
            raise InstanceParseError(f"instance document: missing top-level key '{key}'")

    yards = []
    for idx, rec in enumerate(doc["yards"]):
        where = f"yards[{idx}]"
        yards.append(
            Yard(
                id=_int(_get(rec, "id", where), where, "id"),
                reclass_delay=_num(_get(rec, "t", where), where, "t"),
                class_capacity=_num(_get(rec, "g", where), where, "g"),
                sort_tracks=_int(_get(rec, "h", where), where, "h"),
                capacity_ratio=_num(_get(rec, "beta", where), where, "beta"),
            )
        )

    links = []
    for idx, rec in enumerate(doc["links"]):
        where = f"links[{idx}]"
        links.append(
            Link(
                tail=_int(_get(rec, "i", where), where, "i"),
                head=_int(_get(rec, "j", where), where, "j"),
                length=_num(_get(rec, "l", where), where, "l"),
                capacity=_num(_get(rec, "f", where), where, "f"),
                remaining_rate=_num(_get(rec, "alpha", where), where, "alpha"),
            )
        )

    demands: dict[tuple[int, int], int] = {}
    for idx, rec in enumerate(doc["demands"]):
        where = f"demands[{idx}]"
        o = _int(_get(rec, "o", where), where, "o")
        d = _int(_get(rec, "d", where), where, "d")
        n = _int(_get(rec, "n", where), where, "n")
        if (o, d) in demands:
            raise InstanceParseError(f"{where}: duplicate demand pair ({o},{d})")
        demands[(o, d)] = n

    params = doc["params"]
    where = "params"
    overrides: dict[tuple[int, int], float] = {}
    for idx, rec in enumerate(params.get("c_overrides", []) or []):
        o_where = f"params.c_overrides[{idx}]"
        p = _int(_get(rec, "p", o_where), o_where, "p")
        q = _int(_get(rec, "q", o_where), o_where, "q")
        if (p, q) in overrides:
            raise InstanceParseError(f"{o_where}: duplicate override pair ({p},{q})")
        overrides[(p, q)] = _num(_get(rec, "c", o_where), o_where, "c")

    inst = Instance(
        yards=tuple(yards),
        links=tuple(links),
        demands=demands,
        train_size=_int(_get(params, "m", where), where, "m"),
        track_capacity=_num(_get(params, "gamma", where), where, "gamma"),
        detour_ratio=_num(_get(params, "epsilon", where), where, "epsilon"),
        km_factor=_num(_get(params, "lambda", where), where, "lambda"),
        accumulation_default=_num(_get(params, "c_default", where), where, "c_default"),
        accumulation_overrides=overrides,
    )
    return validate_instance(inst)


def instance_to_dict(inst: Instance) -> dict[str, Any]:
    return {
        "yards": [
            {"id": y.id, "t": y.reclass_delay, "g": y.class_capacity, "h": y.sort_tracks, "beta": y.capacity_ratio}
            for y in inst.yards
        ],
        "links": [
            {"i": l.tail, "j": l.head, "l": l.length, "f": l.capacity, "alpha": l.remaining_rate}
            for l in inst.links
        ],
        "demands": [{"o": o, "d": d, "n": n} for (o, d), n in sorted(inst.demands.items())],
        "params": {
            "m": inst.train_size,
            "gamma": inst.track_capacity,
            "epsilon": inst.detour_ratio,
            "lambda": inst.km_factor,
            "c_default": inst.accumulation_default,
            "c_overrides": [
                {"p": p, "q": q, "c": c} for (p, q), c in sorted(inst.accumulation_overrides.items())
            ],
        },
    }


def load_instance(path: str | Path) -> Instance:
    """Load a UTF-8 JSON instance file, or a directory holding the CSV trio."""
    path = Path(path)
    if path.is_dir():
        return load_instance_csv_dir(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return instance_from_dict(doc)


def save_instance(inst: Instance, path: str | Path) -> None:
    """Write the JSON form; ``load_instance`` of the result is value-equal."""
    path = Path(path)
    try:
        path.write_text(json.dumps(instance_to_dict(inst), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise InstanceError(f"cannot write {path}: {exc}") from exc


# -- CSV ingestion ---------------------------------------------------------------


def _read_csv(path: Path, fields: tuple[str, ...]) -> list[dict[str, str]]:
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                raise InstanceParseError(f"{path}: empty file")
            missing = [f for f in fields if f not in reader.fieldnames]
            if missing:
                raise InstanceParseError(f"{path}: missing column(s) {', '.join(missing)}")
            return list(reader)
    except OSError as exc:
        raise InstanceParseError(f"cannot read {path}: {exc}") from exc


def _csv_num(rec: dict[str, str], key: str, where: str) -> float:
    try:
        return float(rec[key])
    except (ValueError, TypeError) as exc:
        raise InstanceParseError(f"{where}: field '{key}' is not a number: {rec.get(key)!r}") from exc


def _csv_int(rec: dict[str, str], key: str, where: str) -> int:
    try:
        return int(rec[key])
    except (ValueError, TypeError) as exc:
        raise InstanceParseError(f"{where}: field '{key}' is not an integer: {rec.get(key)!r}") from exc


def load_instance_csv(
    yards_csv: str | Path,
    links_csv: str | Path,
    demands_csv: str | Path,
    params: Mapping[str, Any],
) -> Instance:
    """Assemble an instance from three CSV tables plus a params mapping.

    The CSV headers match the JSON field names (yards: id,t,g,h,beta;
    links: i,j,l,f,alpha; demands: o,d,n).  ``params`` uses the JSON
    ``params`` layout.
    """
    doc: dict[str, Any] = {"yards": [], "links": [], "demands": [], "params": dict(params)}
    for idx, rec in enumerate(_read_csv(Path(yards_csv), _YARD_FIELDS)):
        where = f"{yards_csv}:row {idx + 2}"
        doc["yards"].append(
            {
                "id": _csv_int(rec, "id", where),
                "t": _csv_num(rec, "t", where),
                "g": _csv_num(rec, "g", where),
                "h": _csv_int(rec, "h", where),
                "beta": _csv_num(rec, "beta", where),
            }
        )
    for idx, rec in enumerate(_read_csv(Path(links_csv), _LINK_FIELDS)):
        where = f"{links_csv}:row {idx + 2}"
        doc["links"].append(
            {
                "i": _csv_int(rec, "i", where),
                "j": _csv_int(rec, "j", where),
                "l": _csv_num(rec, "l", where),
                "f": _csv_num(rec, "f", where),
                "alpha": _csv_num(rec, "alpha", where),
            }
        )
    for idx, rec in enumerate(_read_csv(Path(demands_csv), _DEMAND_FIELDS)):
        where = f"{demands_csv}:row {idx + 2}"
        doc["demands"].append(
            {
                "o": _csv_int(rec, "o", where),
                "d": _csv_int(rec, "d", where),
                "n": _csv_int(rec, "n", where),
            }
        )
    return instance_from_dict(doc)


def load_instance_csv_dir(directory: str | Path) -> Instance:
    """CSV ingestion from a directory with yards.csv/links.csv/demands.csv.

    Scalar parameters are read from params.json in the same directory (the
    CSV trio has no natural home for scalars).
    """
    directory = Path(directory)
    params_path = directory / "params.json"
    if not params_path.exists():
        raise InstanceParseError(f"{directory}: CSV instance needs a params.json next to the tables")
    try:
        params = json.loads(params_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{params_path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return load_instance_csv(
        directory / "yards.csv", directory / "links.csv", directory / "demands.csv", params
    )


def with_detour_ratio(inst: Instance, epsilon: float) -> Instance:
    """Copy of the instance with a different detour ratio (re-validated)."""
    return validate_instance(replace(inst, detour_ratio=epsilon))
