import json
import math
from pathlib import Path

import pytest

from hopfrig.cli import main

SPECS = Path(__file__).resolve().parents[1] / "specs"


def _report(out, command):
    return json.loads((Path(out) / (command.replace("-", "_") + ".json")).read_text())


def test_theorem1_flat_plane(tmp_path):
    code = main(["theorem1", "--spec", str(SPECS / "flat_plane.spec"), "--out", str(tmp_path),
                 "--rmax", "4", "--grid", "64"])
    assert code == 0
    assert _report(tmp_path, "theorem1")["verdict"] == "consistent-flat"
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == 0
    assert "theorem1.json" in manifest["outputs"]
    assert len(manifest["inputs"]["spec_sha256"]) == 64


def test_ode_lemma_flat_csv(tmp_path):
    path = tmp_path / "flat.csv"
    with open(path, "w") as fh:
        fh.write("r,A,F,R\n")
        for i in range(201):
            x = 0.05 * i
            fh.write(f"{x!r},{math.pi * x * x!r},0.0,{2 * math.pi!r}\n")
    out = tmp_path / "out"
    code = main(["ode-lemma", "--csv", str(path), "--out", str(out)])
    assert code == 0
    rep = _report(out, "ode-lemma")
    assert abs(rep["margin"]) <= 1e-9
    assert rep["a"] == pytest.approx(2 * math.pi)
    assert rep["c"] == pytest.approx(-4 * math.pi ** 2)


@pytest.mark.slow
def test_theorem2_flaring_end_is_a_finding(tmp_path, capsys):
    code = main(["theorem2", "--spec", str(SPECS / "cusp_flare.spec"), "--out", str(tmp_path),
                 "--rmax", "4", "--grid", "400"])
    assert code == 2
    assert "premise violated at end 1" in capsys.readouterr().out
    assert _report(tmp_path, "theorem2")["verdict"] == "premise-violated"


@pytest.mark.parametrize("argv", [
    ["no-such-command"],
    ["hopf-balance", "--spec", str(SPECS / "flat_plane.spec")],
    ["riccati"],
    ["theorem1", "--spec", str(SPECS / "flat_plane.spec"), "--tail", "1.5"],
])
def test_operational_errors_exit_one(tmp_path, capsys, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error [")


def test_missing_spec_file_exits_one(tmp_path):
    assert main(["check-metric", "--spec", str(tmp_path / "nope.spec"), "--out", str(tmp_path)]) == 1


def test_scenario_run(tmp_path):
    scen = tmp_path / "scen.json"
    scen.write_text(json.dumps({"command": "check-metric", "spec": str(SPECS / "hyperbolic.spec"),
                                "out": "res", "params": {}}))
    assert main(["run", str(scen)]) == 0
    assert (tmp_path / "res" / "check_metric.json").exists()
    assert (tmp_path / "res" / "manifest.json").exists()


def test_outputs_are_deterministic(tmp_path):
    args = ["ball-growth", "--spec", str(SPECS / "hyperbolic.spec"), "--rmax", "1.5", "--grid", "32"]
    for d in ("a", "b"):
        assert main(args + ["--out", str(tmp_path / d)]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        a = (tmp_path / "a" / name).read_text()
        b = (tmp_path / "b" / name).read_text()
        if name == "manifest.json":
            ma, mb = json.loads(a), json.loads(b)
            ma.pop("wall_time_s"), mb.pop("wall_time_s")
            # output paths differ only by the directory name
            assert ma["outputs"] == mb["outputs"] and ma["versions"] == mb["versions"]
        else:
            assert a == b, name
