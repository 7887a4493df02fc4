import csv
import json

import pytest

from conftest import small_street
from locfree.cli import main
from locfree.netgen import spec_to_json
from locfree.plotting import C2_GID, FOLD_GID, count_svg_pairs

PIPELINES = ("adhoc_positioning", "robust_positioning", "nhop_multilateration", "afl")


def small_config(tmp_path, **extra):
    cfg = {
        "format": "locfree.experiment/1",
        "deployment": spec_to_json(small_street(2)),
        "noise_fraction": 0.01,
        "pipelines": ["robust_positioning", "afl"],
        "seeds": [2, 3],
        "routing": {"pairs": 20},
        "output_dir": "out",
        **extra,
    }
    p = tmp_path / "small.json"
    p.write_text(json.dumps(cfg, indent=2))
    return p


@pytest.fixture(scope="module")
def bundled_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundled")
    assert main(["run", "experiment_paper_streets", "--out", str(out)]) == 0
    return out


def test_bundled_run_writes_every_figure(bundled_run):
    out = bundled_run
    for name in PIPELINES:
        assert (out / "seed_1" / name / "placement.svg").exists()
    assert (out / "seed_1" / "cluster_graph.svg").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["figures"]) == len(PIPELINES) + 2
    assert all((out / f).exists() for f in manifest["figures"])
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert [r["pipeline"] for r in rows] == list(PIPELINES)


def test_svg_pairs_match_the_report(bundled_run):
    for name in PIPELINES:
        d = bundled_run / "seed_1" / name
        report = json.loads((d / "report.json").read_text())
        svg = (d / "placement.svg").read_text()
        assert count_svg_pairs(svg, FOLD_GID) == report["fold_pairs"]
        assert count_svg_pairs(svg, C2_GID) == report["c2_violations"]


def test_small_run_is_byte_identical(tmp_path, capsys):
    cfg = small_config(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    a_files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*")
                     if p.suffix in (".csv", ".json", ".jsonl", ".svg", ".dot"))
    assert a_files
    for rel in a_files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
    assert "robust_positioning" in capsys.readouterr().out


def test_seed_and_pipeline_overrides(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "o"
    assert main(["run", str(cfg), "--seed", "5", "--pipelines", "afl", "--no-plots", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "summary.csv").open()))
    assert [(r["seed"], r["pipeline"]) for r in rows] == [("5", "afl")]
    assert not list(out.rglob("*.svg"))


def test_empty_pipeline_list_gives_clustering_only(tmp_path):
    cfg = small_config(tmp_path)
    out = tmp_path / "c"
    assert main(["run", str(cfg), "--pipelines", "", "--out", str(out)]) == 0
    assert (out / "clustering.csv").exists() and not (out / "summary.csv").exists()
    assert (out / "seed_2" / "cluster_graph.json").exists()
    assert not list(out.rglob("placement.json"))


def test_invalid_config_reports_the_line(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "format": "locfree.experiment/1",\n  "deployment": "paper_streets",\n'
                 '  "noise_fraction": -0.5\n}\n')
    assert main(["run", str(p)]) == 2
    err = capsys.readouterr().err
    assert f"{p}:4" in err and "noise_fraction" in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.json")]) != 0
    assert "error" in capsys.readouterr().err


def test_unknown_pipeline_is_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", str(small_config(tmp_path)), "--pipelines", "magic"])


def test_generate_plot_and_route(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert main(["generate", "paper_streets", "--seed", "4", "--out", str(inst)]) == 0
    assert "200 anchors" in capsys.readouterr().out

    run_dir = tmp_path / "run"
    cfg = small_config(tmp_path, seeds=[2], plots=False)
    assert main(["run", str(cfg), "--out", str(run_dir)]) == 0
    capsys.readouterr()
    placement = run_dir / "seed_2" / "robust_positioning" / "placement.json"
    small_inst = run_dir / "seed_2" / "instance.json"
    assert main(["plot", str(placement), str(small_inst), "--out", str(tmp_path / "p.svg")]) == 0
    info = json.loads(capsys.readouterr().out)
    report = json.loads((placement.parent / "report.json").read_text())
    assert info["fold_pairs"] == report["fold_pairs"] and not info["empty"]
    assert (tmp_path / "p.svg").read_text().startswith("<?xml")

    assert main(["route", str(small_inst), "--pairs", "15", "--placement", str(placement),
                 "--out", str(tmp_path / "r")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["pairs"] == 15
    assert len((tmp_path / "r" / "routes.jsonl").read_text().splitlines()) == 30


def test_plot_of_an_empty_placement_warns(tmp_path, capsys):
    from locfree.localization.types import Placement
    from locfree.netgen import generate_network

    inst = generate_network(small_street(2))
    (tmp_path / "i.json").write_text(inst.dumps())
    (tmp_path / "e.json").write_text(Placement.empty(inst.n).dumps())
    assert main(["plot", str(tmp_path / "e.json"), str(tmp_path / "i.json"), "--out", str(tmp_path / "e.svg")]) == 0
    assert json.loads(capsys.readouterr().out)["empty"]
    assert "no positioned nodes" in (tmp_path / "e.svg").read_text()


def test_plot_rejects_mismatched_sizes(tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["run", str(small_config(tmp_path, seeds=[2], plots=False)), "--out", str(run_dir)]) == 0
    other = tmp_path / "other.json"
    assert main(["generate", "paper_streets", "--seed", "1", "--out", str(other)]) == 0
    placement = run_dir / "seed_2" / "afl" / "placement.json"
    assert main(["plot", str(placement), str(other)]) == 2
