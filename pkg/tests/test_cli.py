import json

import pytest

from railblock.cli import main
from railblock.instance import instance_from_dict, save_instance

from conftest import fig1_dict


@pytest.fixture()
def fig1_file(tmp_path):
    target = tmp_path / "fig1.json"
    save_instance(instance_from_dict(fig1_dict()), target)
    return target


def test_unknown_flag_exits_3(fig1_file, capsys):
    assert main(["solve", "--instance", str(fig1_file), "--bogus"]) == 3


def test_missing_instance_exits_3(tmp_path, capsys):
    assert main(["solve", "--instance", str(tmp_path / "missing.json")]) == 3


def test_solve_reduced_writes_solution_and_manifest(fig1_file, tmp_path, capsys):
    out = tmp_path / "sol.json"
    code = main(
        ["solve", "--instance", str(fig1_file), "--mode", "reduced", "--solution", str(out)]
    )
    assert code == 0
    captured = capsys.readouterr().out
    assert "status: optimal" in captured
    assert "530" in captured
    doc = json.loads(out.read_text())
    assert doc["costs"]["total"] == pytest.approx(530.0)
    manifest = json.loads((tmp_path / "sol.json.manifest.json").read_text())
    assert manifest["mode"] == "reduced"
    assert manifest["result"]["status"] == "optimal"
    assert manifest["result"]["upper_bound"] == pytest.approx(530.0)
    assert len(manifest["instance_digest"]) == 64


def test_manifest_reproducible_modulo_timings(fig1_file, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.json"
        main(["solve", "--instance", str(fig1_file), "--mode", "reduced", "--seed", "3",
              "--solution", str(out)])
        doc = json.loads((tmp_path / f"{name}.json.manifest.json").read_text())
        doc.pop("timings")
        doc["command"] = doc["command"].replace(str(out), "OUT")
        outs.append(doc)
    assert outs[0] == outs[1]


def test_solve_sequential_emits_solution(fig1_file, tmp_path, capsys):
    out = tmp_path / "seq.json"
    code = main(
        ["solve", "--instance", str(fig1_file), "--mode", "sequential", "--solution", str(out)]
    )
    assert code == 0
    captured = capsys.readouterr().out
    assert "total (car-hour): 530" in captured
    assert "no lower bound supplied" in captured
    doc = json.loads(out.read_text())
    assert {"paths", "blocks", "sequences", "costs"} <= set(doc)
    # validate the emitted file through the CLI
    assert main(["validate", "--instance", str(fig1_file), "--solution", str(out)]) == 0


def test_sequential_gap_with_external_lb(fig1_file, tmp_path, capsys):
    out = tmp_path / "seq.json"
    code = main(
        ["solve", "--instance", str(fig1_file), "--mode", "sequential",
         "--lb", "530", "--lb-source", "reduced-milp", "--solution", str(out)]
    )
    assert code == 0
    assert "gap: 0.00%" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "seq.json.manifest.json").read_text())
    assert manifest["result"]["lb_source"] == "reduced-milp"
    assert manifest["result"]["gap"] == pytest.approx(0.0)


def test_solve_infeasible_exits_2(tmp_path, capsys):
    doc = fig1_dict()
    for rec in doc["links"]:
        rec["alpha"] = 0.0
    target = tmp_path / "dead.json"
    save_instance(instance_from_dict(doc), target)
    assert main(["solve", "--instance", str(target), "--mode", "reduced"]) == 2


def test_paths_od_listing(fig1_file, capsys):
    assert main(["paths", "--instance", str(fig1_file), "--od", "1,5"]) == 0
    out = capsys.readouterr().out
    assert "1 -> 2 -> 3 -> 5" in out and "1 -> 2 -> 4 -> 5" in out


def test_paths_all_dumps_catalog(fig1_file, capsys):
    assert main(["paths", "--instance", str(fig1_file), "--all"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["1,5"]["shortest_km"] == 3
    assert [[1, 2, 3, 5], [1, 2, 4, 5]] == [rec["nodes"] for rec in doc["1,5"]["paths"]]
    assert [1, 5] in doc["1,5"]["blocks"]


def test_paths_bad_od_exits_3(fig1_file, capsys):
    assert main(["paths", "--instance", str(fig1_file), "--od", "nope"]) == 3


def test_stats_modes(fig1_file, capsys):
    for mode, expect_vars in [("integrated", 2052), ("path", 216), ("block", 1584)]:
        assert main(["stats", "--instance", str(fig1_file), "--mode", mode]) == 0
        out = capsys.readouterr().out
        assert f"{expect_vars:,}" in out
    assert main(["stats", "--instance", str(fig1_file), "--mode", "reduced"]) == 0
    assert "# of variables" in capsys.readouterr().out


def test_oracle_command(fig1_file, tmp_path, capsys):
    out = tmp_path / "oracle.json"
    assert main(["oracle", "--instance", str(fig1_file), "--solution", str(out)]) == 0
    assert "530" in capsys.readouterr().out
    assert json.loads(out.read_text())["costs"]["total"] == pytest.approx(530.0)


def test_validate_rejects_bad_solution(fig1_file, tmp_path, capsys):
    out = tmp_path / "sol.json"
    main(["solve", "--instance", str(fig1_file), "--mode", "reduced", "--solution", str(out)])
    capsys.readouterr()
    doc = json.loads(out.read_text())
    doc["blocks"][0]["w"] = 0  # break the track-count law
    out.write_text(json.dumps(doc))
    code = main(["validate", "--instance", str(fig1_file), "--solution", str(out), "--json"])
    assert code == 2
    report = json.loads(capsys.readouterr().out)
    assert any(v["family"] == "Eq10-trackub" for v in report["violations"])


def test_report_single_and_comparison(fig1_file, tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    main(["solve", "--instance", str(fig1_file), "--mode", "reduced", "--solution", str(a)])
    main(["solve", "--instance", str(fig1_file), "--mode", "sequential", "--solution", str(b)])
    capsys.readouterr()
    assert main(["report", "--solution", str(a), "--instance", str(fig1_file)]) == 0
    out = capsys.readouterr().out
    assert "Car mile (car-km)" in out
    assert main(["report", "--a", str(a), "--b", str(b), "--instance", str(fig1_file)]) == 0
    out = capsys.readouterr().out
    assert "Relative deviation" in out and "0.00%" in out


def test_export_mps_writes_files(fig1_file, tmp_path):
    mps_dir = tmp_path / "mps"
    main(["solve", "--instance", str(fig1_file), "--mode", "reduced", "--export-mps", str(mps_dir)])
    assert (mps_dir / "reduced.mps").exists()
    main(["solve", "--instance", str(fig1_file), "--mode", "sequential", "--export-mps", str(mps_dir)])
    assert (mps_dir / "path.mps").exists() and (mps_dir / "block.mps").exists()


def test_generate_round_trips(tmp_path):
    out = tmp_path / "gen.json"
    assert main(["generate", "--seed", "11", "--out", str(out)]) == 0
    assert main(["paths", "--instance", str(out), "--all"]) == 0


def test_warm_start_flag(fig1_file, tmp_path, capsys):
    seq = tmp_path / "seq.json"
    main(["solve", "--instance", str(fig1_file), "--mode", "sequential", "--solution", str(seq)])
    capsys.readouterr()
    code = main(["solve", "--instance", str(fig1_file), "--mode", "reduced", "--warm-start", str(seq)])
    assert code == 0
    assert "status: optimal" in capsys.readouterr().out
