import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from railblock.builders import BuildOptions, build_integrated, build_path_model
from railblock.milp import BINARY, CONTINUOUS, INTEGER, MilpModel, ModelError, predicted_size, stats
from railblock.mps import MpsError, export_mps, read_mps
from railblock.pathgen import build_catalog
from railblock.solver import SolveOptions, solve_milp

from conftest import tiny_instance


def _toy_model():
    m = MilpModel(name="toy")
    a = m.add_variable(BINARY, 0, 1, ("x", 1))
    b = m.add_variable(INTEGER, 0.0, 7.0, ("w", 1))
    c = m.add_variable(CONTINUOUS, 0.0, math.inf, ("z", 1))
    m.add_constraint([(a, 2.0), (b, 1.0)], "<=", 5.0, ("cap", 1))
    m.add_constraint([(b, 1.0), (c, -3.0)], "=", 0.0, ("tie", 1))
    m.add_objective_term(a, -1.0)
    m.add_objective_term(c, 0.5)
    return m


def test_stats_counts():
    counted = stats(_toy_model())
    assert (counted.variables, counted.constraints, counted.nonzeros) == (3, 2, 4)


def test_stats_empty_model():
    counted = stats(MilpModel())
    assert (counted.variables, counted.constraints, counted.nonzeros) == (0, 0, 0)


def test_duplicate_tag_rejected():
    m = MilpModel()
    m.add_variable(BINARY, 0, 1, ("x", 1))
    with pytest.raises(ModelError, match="duplicate variable tag"):
        m.add_variable(BINARY, 0, 1, ("x", 1))


def test_duplicate_term_rejected():
    m = MilpModel()
    a = m.add_variable(BINARY, 0, 1, ("x", 1))
    with pytest.raises(ModelError, match="duplicate variable id"):
        m.add_constraint([(a, 1.0), (a, 2.0)], "<=", 1.0, ("bad",))


def test_predicted_size_values():
    assert predicted_size(6, 6, "integrated") == (2052, 11640)
    assert predicted_size(6, 6, "path") == (216, 258)
    assert predicted_size(6, 6, "block") == (1584, 2928)
    with pytest.raises(ValueError):
        predicted_size(6, 6, "nonsense")
    with pytest.raises(ValueError):
        predicted_size(0, 3, "path")


def test_stats_deterministic_across_builds():
    inst = tiny_instance(5, 6)
    catalog = build_catalog(inst)
    first = stats(build_integrated(inst, catalog, BuildOptions(reduction="full")))
    second = stats(build_integrated(inst, catalog, BuildOptions(reduction="full")))
    assert first == second


# -- MPS writer/reader ------------------------------------------------------------


def test_export_single_binary(tmp_path):
    m = MilpModel(name="onebv")
    x = m.add_variable(BINARY, 0, 1, ("x", 0))
    m.add_objective_term(x, 1.0)
    target = tmp_path / "one.mps"
    export_mps(m, target)
    text = target.read_text()
    assert "ROWS" in text and "COLUMNS" in text and "RHS" in text
    assert "RANGES" in text and "BOUNDS" in text and "ENDATA" in text
    bv_lines = [line for line in text.splitlines() if line.startswith(" BV")]
    assert len(bv_lines) == 1
    assert "INTORG" in text and "INTEND" in text


def test_export_empty_model_refused(tmp_path):
    with pytest.raises(MpsError):
        export_mps(MilpModel(), tmp_path / "empty.mps")


def test_round_trip_toy(tmp_path):
    m = _toy_model()
    target = tmp_path / "toy.mps"
    export_mps(m, target)
    back = read_mps(target)
    assert stats(back).variables == 3
    direct = solve_milp(m, SolveOptions(time_limit=10))
    reparsed = solve_milp(back, SolveOptions(time_limit=10))
    assert direct.status == reparsed.status == "optimal"
    assert reparsed.objective == pytest.approx(direct.objective, rel=1e-9, abs=1e-12)


def test_round_trip_zero_rhs_omitted(tmp_path):
    m = MilpModel()
    x = m.add_variable(CONTINUOUS, 0.0, 10.0, ("z", 0))
    y = m.add_variable(CONTINUOUS, 0.0, 10.0, ("z", 1))
    m.add_constraint([(x, 1.0), (y, -1.0)], "<=", 0.0, ("bal",))
    m.add_constraint([(x, 1.0)], ">=", 2.0, ("lo",))
    m.add_objective_term(x, 1.0)
    m.add_objective_term(y, 1.0)
    target = tmp_path / "z.mps"
    export_mps(m, target)
    assert " bal " not in target.read_text()  # zero rhs entries may be omitted
    back = read_mps(target)
    direct = solve_milp(m, SolveOptions(time_limit=10))
    reparsed = solve_milp(back, SolveOptions(time_limit=10))
    assert reparsed.objective == pytest.approx(direct.objective, rel=1e-9)


def test_round_trip_objective_constant(tmp_path):
    m = MilpModel()
    x = m.add_variable(CONTINUOUS, 0.0, 5.0, ("z", 0))
    m.add_constraint([(x, 1.0)], ">=", 1.0, ("lo",))
    m.add_objective_term(x, 2.0)
    m.objective_constant = 7.25
    target = tmp_path / "const.mps"
    export_mps(m, target)
    back = read_mps(target)
    assert back.objective_constant == pytest.approx(7.25)


def test_round_trip_fig1_models(tmp_path, fig1, fig1_catalog):
    for name, model in (
        ("reduced", build_integrated(fig1, fig1_catalog, BuildOptions(reduction="reduced"))),
        ("path", build_path_model(fig1, fig1_catalog, BuildOptions(reduction="reduced"))),
    ):
        target = tmp_path / f"{name}.mps"
        export_mps(model, target)
        back = read_mps(target)
        direct = solve_milp(model, SolveOptions(time_limit=60))
        reparsed = solve_milp(back, SolveOptions(time_limit=60))
        assert direct.status == reparsed.status == "optimal"
        assert reparsed.objective == pytest.approx(direct.objective, rel=1e-9)


def test_ranges_section_roundtrip(tmp_path):
    text = """NAME          ranged
ROWS
 N  COST
 L  lim
COLUMNS
    a         COST      1.0
    a         lim       1.0
RHS
    RHS       lim       4.0
RANGES
    RNG       lim       2.0
BOUNDS
 UP BND       a         9.0
ENDATA
"""
    target = tmp_path / "ranged.mps"
    target.write_text(text)
    model = read_mps(target)
    # L row with range 2 means 2 <= a <= 4
    res = solve_milp(model, SolveOptions(time_limit=10))
    assert res.objective == pytest.approx(2.0)


@settings(max_examples=20, deadline=None)
@given(
    coefs=st.lists(st.integers(min_value=-9, max_value=9), min_size=2, max_size=5),
    rhs=st.integers(min_value=1, max_value=20),
)
def test_round_trip_random_knapsacks(tmp_path_factory, coefs, rhs):
    m = MilpModel()
    ids = [m.add_variable(BINARY, 0, 1, ("x", i)) for i in range(len(coefs))]
    m.add_constraint([(vid, float(abs(c) + 1)) for vid, c in zip(ids, coefs)], "<=", float(rhs), ("cap",))
    for vid, c in zip(ids, coefs):
        m.add_objective_term(vid, float(c))
    target = tmp_path_factory.mktemp("mps") / "k.mps"
    export_mps(m, target)
    back = read_mps(target)
    direct = solve_milp(m, SolveOptions(time_limit=10))
    reparsed = solve_milp(back, SolveOptions(time_limit=10))
    assert direct.objective == pytest.approx(reparsed.objective, abs=1e-9)
