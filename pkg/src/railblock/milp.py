"""Solver-neutral MILP container plus model-size bookkeeping.

Variables carry a symbolic tag (symbol letter plus index tuple, e.g.
``("u", 1, 5, 2, 5)``) so solutions, warm starts and tests can address them
without knowing dense indices.  Constraints carry a family label plus index
for the same reason.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

BINARY = "binary"
INTEGER = "integer"
CONTINUOUS = "continuous"

_KINDS = (BINARY, INTEGER, CONTINUOUS)


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class Variable:
    id: int
    kind: str
    lower: float
    upper: float
    tag: tuple

    @property
    def is_integral(self) -> bool:
        return self.kind != CONTINUOUS

    @property
    def symbol(self) -> str:
        return str(self.tag[0])


@dataclass(frozen=True)
class LinearConstraint:
    terms: tuple[tuple[int, float], ...]
    sense: str  # one of "<=", "=", ">="
    rhs: float
    label: tuple


@dataclass
class MilpModel:
    """Variables, linear constraints and a minimization objective.

    Treat a finished model as immutable: builders construct it, everything
    downstream only reads.
    """

    name: str = "model"
    variables: list[Variable] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    sense: str = "min"
    tag_index: dict[tuple, int] = field(default_factory=dict, repr=False)

    def add_variable(self, kind: str, lower: float, upper: float, tag: tuple) -> int:
        if kind not in _KINDS:
            raise ModelError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lower, upper = 0.0, 1.0
        if lower > upper:
            raise ModelError(f"variable {tag}: lower bound {lower} above upper bound {upper}")
        if tag in self.tag_index:
            raise ModelError(f"duplicate variable tag {tag}")
        vid = len(self.variables)
        self.variables.append(Variable(id=vid, kind=kind, lower=float(lower), upper=float(upper), tag=tag))
        self.tag_index[tag] = vid
        return vid

    def add_constraint(self, terms: list[tuple[int, float]], sense: str, rhs: float, label: tuple) -> None:
        if sense not in ("<=", "=", ">="):
            raise ModelError(f"constraint {label}: unknown sense {sense!r}")
        seen: set[int] = set()
        clean: list[tuple[int, float]] = []
        for vid, coef in terms:
            if vid in seen:
                raise ModelError(f"constraint {label}: duplicate variable id {vid}")
            seen.add(vid)
            if not (0 <= vid < len(self.variables)):
                raise ModelError(f"constraint {label}: unknown variable id {vid}")
            if not math.isfinite(coef):
                raise ModelError(f"constraint {label}: non-finite coefficient on variable {vid}")
            if coef != 0.0:
                clean.append((vid, float(coef)))
        self.constraints.append(LinearConstraint(terms=tuple(clean), sense=sense, rhs=float(rhs), label=label))

    def add_objective_term(self, vid: int, coef: float) -> None:
        if not (0 <= vid < len(self.variables)):
            raise ModelError(f"objective: unknown variable id {vid}")
        if coef != 0.0:
            self.objective[vid] = self.objective.get(vid, 0.0) + float(coef)

    def var_id(self, tag: tuple) -> int:
        try:
            return self.tag_index[tag]
        except KeyError:
            raise KeyError(f"no variable tagged {tag}") from None

    def has_tag(self, tag: tuple) -> bool:
        return tag in self.tag_index

    def var(self, tag: tuple) -> Variable:
        return self.variables[self.var_id(tag)]

    def integer_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.is_integral]


@dataclass(frozen=True)
class ModelStats:
    """Exact counts of a built model (constraint-matrix nonzeros only)."""

    variables: int
    constraints: int
    nonzeros: int
    family_rows: tuple[tuple[str, int], ...] = ()

    def rows_for(self, family: str) -> int:
        for name, count in self.family_rows:
            if name == family:
                return count
        return 0


def stats(model: MilpModel) -> ModelStats:
    """Count variables, constraint rows and structural nonzeros."""
    families: dict[str, int] = {}
    nonzeros = 0
    for con in model.constraints:
        nonzeros += len(con.terms)
        fam = str(con.label[0]) if con.label else ""
        families[fam] = families.get(fam, 0) + 1
    return ModelStats(
        variables=len(model.variables),
        constraints=len(model.constraints),
        nonzeros=nonzeros,
        family_rows=tuple(sorted(families.items())),
    )


_FAMILIES = ("integrated", "path", "block")


def predicted_size(v: int, e: int, which: str) -> tuple[int, int]:
    """Closed-form size estimate (variables, constraints) per model family.

    These are the documented full-enumeration estimates; ``stats`` on a
    full-mode build matches them exactly, except that the integrated
    estimate omits the per-link capacity rows (family ``Eq26-linkcap``,
    one row per link) and, for every family, bound/integrality
    declarations live on the variables rather than as rows.
    """
    if which not in _FAMILIES:
        raise ValueError(f"unknown model family {which!r}; expected one of {_FAMILIES}")
    if v < 1 or e < 0:
        raise ValueError("need v >= 1 and e >= 0")
    if which == "integrated":
        variables = v**4 + v**3 + 2 * v * v * e + 3 * v * v
        constraints = v**4 * e + 2 * v**4 + 3 * v * v * e + 2 * v**3 + 5 * v * v + 2 * v
    elif which == "path":
        variables = v * v * e
        constraints = v**3 + v * v + e
    else:  # block
        variables = v**4 + v**3 + 2 * v * v
        constraints = 2 * v**4 + v**3 + 3 * v * v + 2 * v
    return variables, constraints
