"""Fixed-format MPS export and a tolerant MPS reader.

Column names are the variable's tag symbol followed by its dense id
("u17", "x3", ...), row names are "c" plus the row index: short, unique by
construction and stable across runs.  If a naming scheme ever produces a
clash the writer refuses instead of renaming silently.
"""

from __future__ import annotations

import math
from pathlib import Path

from .milp import BINARY, CONTINUOUS, INTEGER, LinearConstraint, MilpModel, ModelError

_OBJ_ROW = "COST"
_SENSE_TO_ROW = {"<=": "L", "=": "E", ">=": "G"}
_ROW_TO_SENSE = {"L": "<=", "E": "=", "G": ">="}


class MpsError(Exception):
    pass


def _fmt(value: float) -> str:
    text = f"{value:.12g}"
    return text


def column_name(model: MilpModel, vid: int) -> str:
    var = model.variables[vid]
    symbol = str(var.tag[0]) if var.tag else "v"
    head = "".join(ch for ch in symbol if ch.isalnum()) or "v"
    return f"{head[:2]}{vid}"


def row_name(index: int) -> str:
    return f"c{index}"


def export_mps(model: MilpModel, path: str | Path) -> None:
    """Write the model in fixed-format MPS (ROWS/COLUMNS/RHS/RANGES/BOUNDS).

    Integer and binary columns are wrapped in INTORG/INTEND marker pairs and
    always get explicit bound lines, so readers cannot fall back to the
    ambiguous historical defaults for integer columns.
    """
    if not model.variables:
        raise MpsError("refusing to export an empty model")
    names = [column_name(model, v.id) for v in model.variables]
    if len(set(names)) != len(names):
        raise MpsError("column name collision after truncation; refusing to rename silently")

    lines: list[str] = [f"NAME          {model.name[:60]}"]
    lines.append("ROWS")
    lines.append(f" N  {_OBJ_ROW}")
    for idx, con in enumerate(model.constraints):
        lines.append(f" {_SENSE_TO_ROW[con.sense]}  {row_name(idx)}")

    # column-major entries
    per_col: dict[int, list[tuple[str, float]]] = {v.id: [] for v in model.variables}
    for vid, coef in model.objective.items():
        per_col[vid].append((_OBJ_ROW, coef))
    for idx, con in enumerate(model.constraints):
        rname = row_name(idx)
        for vid, coef in con.terms:
            per_col[vid].append((rname, coef))

    lines.append("COLUMNS")
    marker_count = 0
    in_integer = False
    for var in model.variables:
        want_integer = var.is_integral
        if want_integer != in_integer:
            tag = "INTORG" if want_integer else "INTEND"
            lines.append(f"    MARKER{marker_count:<4}              'MARKER'                 '{tag}'")
            marker_count += 1
            in_integer = want_integer
        entries = per_col[var.id] or [(_OBJ_ROW, 0.0)]
        for rname, coef in entries:
            lines.append(f"    {names[var.id]:<10}{rname:<10}{_fmt(coef)}")
    if in_integer:
        lines.append(f"    MARKER{marker_count:<4}              'MARKER'                 'INTEND'")

    lines.append("RHS")
    for idx, con in enumerate(model.constraints):
        if con.rhs != 0.0:
            lines.append(f"    RHS       {row_name(idx):<10}{_fmt(con.rhs)}")
    if model.objective_constant != 0.0:
        lines.append(f"    RHS       {_OBJ_ROW:<10}{_fmt(-model.objective_constant)}")

    lines.append("RANGES")

    lines.append("BOUNDS")
    for var in model.variables:
        name = names[var.id]
        if var.kind == BINARY:
            lines.append(f" BV BND       {name}")
            continue
        if var.kind == INTEGER:
            lines.append(f" LO BND       {name:<10}{_fmt(var.lower)}")
            if math.isfinite(var.upper):
                lines.append(f" UP BND       {name:<10}{_fmt(var.upper)}")
            else:
                lines.append(f" PL BND       {name}")
            continue
        # continuous: emit only deviations from the [0, +inf) default
        if var.lower == var.upper:
            lines.append(f" FX BND       {name:<10}{_fmt(var.lower)}")
            continue
        if var.lower != 0.0:
            if math.isfinite(var.lower):
                lines.append(f" LO BND       {name:<10}{_fmt(var.lower)}")
            else:
                lines.append(f" MI BND       {name}")
        if math.isfinite(var.upper):
            lines.append(f" UP BND       {name:<10}{_fmt(var.upper)}")

    lines.append("ENDATA")
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise MpsError(f"cannot write {path}: {exc}") from exc


def read_mps(path: str | Path) -> MilpModel:
    """Parse an MPS file (fixed or free form) into a MilpModel.

    Handles ROWS/COLUMNS (with integrality markers)/RHS/RANGES/BOUNDS and a
    minimizing objective.  Integer columns default to bounds [0, +inf) when
    no bound line follows; BV means binary.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MpsError(f"cannot read {path}: {exc}") from exc

    section = None
    name = "model"
    obj_row: str | None = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_kind: dict[str, str] = {}
    col_order: list[str] = []
    col_entries: dict[str, list[tuple[str, float]]] = {}
    rhs: dict[str, float] = {}
    ranges: dict[str, float] = {}
    bounds: dict[str, dict[str, float | str]] = {}
    in_integer = False

    for raw in text.splitlines():
        if not raw or raw.startswith("*"):
            continue
        head = raw[:1] not in (" ", "\t")
        tokens = raw.split()
        if head:
            keyword = tokens[0].upper()
            if keyword == "NAME":
                name = tokens[1] if len(tokens) > 1 else "model"
                continue
            if keyword in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA", "OBJSENSE"):
                section = keyword
                if keyword == "ENDATA":
                    break
                continue
            raise MpsError(f"unknown section line: {raw!r}")
        if section == "OBJSENSE":
            if tokens[0].upper().startswith("MAX"):
                raise MpsError("maximization MPS files are not supported")
            continue
        if section == "ROWS":
            kind, rname = tokens[0].upper(), tokens[1]
            if kind == "N":
                if obj_row is None:
                    obj_row = rname
                continue
            if kind not in _ROW_TO_SENSE:
                raise MpsError(f"unknown row type {kind!r}")
            row_sense[rname] = _ROW_TO_SENSE[kind]
            row_order.append(rname)
            continue
        if section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1].strip("'").upper() == "MARKER":
                marker = tokens[-1].strip("'").upper()
                if marker == "INTORG":
                    in_integer = True
                elif marker == "INTEND":
                    in_integer = False
                continue
            cname = tokens[0]
            if cname not in col_kind:
                col_kind[cname] = INTEGER if in_integer else CONTINUOUS
                col_order.append(cname)
                col_entries[cname] = []
            pairs = tokens[1:]
            if len(pairs) % 2 != 0:
                raise MpsError(f"odd column entry line: {raw!r}")
            for rname, value in zip(pairs[::2], pairs[1::2]):
                col_entries[cname].append((rname, float(value)))
            continue
        if section == "RHS":
            pairs = tokens[1:] if len(tokens) % 2 == 1 else tokens
            for rname, value in zip(pairs[::2], pairs[1::2]):
                rhs[rname] = float(value)
            continue
        if section == "RANGES":
            pairs = tokens[1:] if len(tokens) % 2 == 1 else tokens
            for rname, value in zip(pairs[::2], pairs[1::2]):
                ranges[rname] = float(value)
            continue
        if section == "BOUNDS":
            btype = tokens[0].upper()
            cname = tokens[2] if len(tokens) >= 3 else tokens[1]
            value = float(tokens[3]) if len(tokens) >= 4 else None
            entry = bounds.setdefault(cname, {})
            entry[btype] = value if value is not None else ""
            continue

    if obj_row is None:
        raise MpsError("no objective (N) row found")

    model = MilpModel(name=name)
    for cname in col_order:
        kind = col_kind[cname]
        lower, upper = 0.0, math.inf
        spec = bounds.get(cname, {})
        if "BV" in spec:
            model.add_variable(BINARY, 0.0, 1.0, ("col", cname))
            continue
        if "FR" in spec:
            lower, upper = -math.inf, math.inf
        if "MI" in spec:
            lower = -math.inf
        if "PL" in spec:
            upper = math.inf
        for key in ("LO", "LI"):
            if key in spec:
                lower = float(spec[key])
        for key in ("UP", "UI"):
            if key in spec:
                upper = float(spec[key])
        if "FX" in spec:
            lower = upper = float(spec["FX"])
        if kind == INTEGER and ("UP" in spec or "UI" in spec) and lower == 0.0 and upper == 1.0:
            kind = BINARY
        model.add_variable(kind, lower, upper, ("col", cname))

    by_row: dict[str, list[tuple[int, float]]] = {rname: [] for rname in row_order}
    for cname in col_order:
        vid = model.var_id(("col", cname))
        for rname, coef in col_entries[cname]:
            if rname == obj_row:
                model.add_objective_term(vid, coef)
            elif rname in by_row:
                by_row[rname].append((vid, coef))
            else:
                raise MpsError(f"column {cname} references unknown row {rname}")
    model.objective_constant = -rhs.get(obj_row, 0.0)

    for rname in row_order:
        sense = row_sense[rname]
        r = rhs.get(rname, 0.0)
        terms = by_row[rname]
        if rname in ranges:
            g = ranges[rname]
            if sense == "<=":
                lo, hi = r - abs(g), r
            elif sense == ">=":
                lo, hi = r, r + abs(g)
            else:
                lo, hi = (r, r + g) if g >= 0 else (r + g, r)
            model.add_constraint(list(terms), ">=", lo, ("row", rname, "lo"))
            model.add_constraint(list(terms), "<=", hi, ("row", rname, "hi"))
        else:
            model.add_constraint(list(terms), sense, r, ("row", rname))
    return model
