import json
import subprocess
import sys

import pytest

from treedp.cli import main
from treedp.io import dump_json, fmt, read_csv, write_csv

TREE = {"n_x": 3, "subsystems": [
    {"id": 1, "indices": [1, 2], "objective": {"Q": [[2, 0], [0, 2]], "q": [0, 0]},
     "constraints": {"Ain": [[1, 0], [-1, 0]], "bin": [1, 1], "Aeq": [[1, 1]], "beq": [0.5]}},
    {"id": 2, "indices": [2, 3], "objective": {"Q": [[0, 0], [0, 2]], "q": [0, -1]},
     "constraints": {"Ain": [[1, 0], [-1, 0], [0, 1], [0, -1]], "bin": [0.4, 0.4, 1, 1]}}]}
CYCLE = {"n_x": 3, "subsystems": [{"id": 1, "indices": [1, 2]}, {"id": 2, "indices": [2, 3]},
                                  {"id": 3, "indices": [3, 1]}]}
INFEASIBLE = {"n_x": 2, "subsystems": [
    {"id": 1, "indices": [1, 2], "constraints": {"Aeq": [[1, 0]], "beq": [5]}},
    {"id": 2, "indices": [2], "constraints": {"Ain": [[1], [-1]], "bin": [1, 1]}},
    {"id": 3, "indices": [1], "constraints": {"Ain": [[1], [-1]], "bin": [1, 1]}}]}
SQUARE = {"dim": 2, "Ain": [[1, 0], [-1, 0], [0, 1], [0, -1]], "bin": [1, 0, 1, 0]}


@pytest.fixture
def files(tmp_path):
    out = {}
    for name, data in (("tree", TREE), ("cycle", CYCLE), ("inf", INFEASIBLE), ("sq", SQUARE)):
        out[name] = tmp_path / f"{name}.json"
        out[name].write_text(json.dumps(data))
    return out


def read(path):
    return json.loads(path.read_text())


@pytest.mark.parametrize("variant", ["exact", "box", "ellipsoid", "ball"])
def test_solve(files, tmp_path, variant):
    out = tmp_path / variant
    assert main(["solve", "--in", str(files["tree"]), "--variant", variant, "--out", str(out)]) == 0
    sol = read(out / "solution.json")
    assert sol["feasible"] and sol["seed"] == 42
    assert len(read(out / "trace.json")) == 2
    assert (out / "runtimes.json").exists()


def test_exit_codes(files, tmp_path, capsys):
    assert main(["solve", "--in", str(files["cycle"]), "--out", str(tmp_path / "c")]) == 2
    assert "cycle" in capsys.readouterr().err
    assert main(["solve", "--in", str(files["inf"]), "--out", str(tmp_path / "i")]) == 1
    assert main(["solve", "--in", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "m")]) == 2
    assert main(["project", "--in", str(files["sq"]), "--keep", "7",
                 "--out", str(tmp_path / "p")]) == 2


def test_project_center_sample(files, tmp_path):
    assert main(["project", "--in", str(files["sq"]), "--keep", "2", "--out", str(tmp_path)]) == 0
    proj = read(tmp_path / "projection.json")
    assert proj["dim"] == 1 and sorted(proj["bin"]) == [0.0, 1.0]
    assert main(["center", "--in", str(files["sq"]), "--out", str(tmp_path)]) == 0
    ell = read(tmp_path / "ellipsoid.json")
    assert ell["c"] == pytest.approx([0.5, 0.5]) and ell["certificate"] <= 1e-9
    assert main(["sample", "--in", str(files["sq"]), "--grid", "3", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "samples.csv")
    assert header[:3] == ["z1", "z2", "provenance"] and len(rows) >= 8


def test_value_fn(files, tmp_path):
    assert main(["value-fn", "--in", str(files["tree"]), "--subsystem", "2", "--points", "5",
                 "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "value_function.csv")
    assert header == ["x2", "value"] and len(rows) == 5


def test_ocp_demo_outputs_are_reproducible(tmp_path):
    for run in ("a", "b"):
        assert main(["ocp-demo", "--variant", "ellipsoid", "--out", str(tmp_path / run)]) == 0
    names = ["report.json", "ellipsoid.json", "trajectory_fpadp.csv",
             "trajectory_monolithic.csv", "stage_sets/P_1.json", "stage_sets/Z_3.json"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert read(tmp_path / "a" / "report.json")["feasible"]


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "treedp.cli", "--help"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and "ocp-demo" in r.stdout


def test_io_formatting(tmp_path):
    assert fmt(-0.0) == "0" and fmt(1 / 3) == "0.333333333333"
    dump_json({"a": float("nan"), "b": -0.0, "c": [1.0, float("inf")]}, tmp_path / "x.json")
    assert read(tmp_path / "x.json") == {"a": None, "b": 0.0, "c": [1.0, None]}
    write_csv(tmp_path / "x.csv", ["u", "v"], [[1.5, None], [-0.0, 2]])
    assert read_csv(tmp_path / "x.csv") == (["u", "v"], [[1.5, None], [0.0, 2.0]])


def test_outputs_round_trip_through_loaders(files, tmp_path):
    import numpy as np

    from treedp.centering import Box, Ellipsoid
    from treedp.model import TreeProblem
    from treedp.polyhedra import HPolyhedron
    from treedp.sampling import SampleSet

    assert main(["project", "--in", str(files["sq"]), "--keep", "1", "--out", str(tmp_path)]) == 0
    P = HPolyhedron.from_dict(read(tmp_path / "projection.json"))
    assert P.contains([0.0]) and P.contains([1.0]) and not P.contains([1.1])
    assert main(["center", "--in", str(files["sq"]), "--out", str(tmp_path)]) == 0
    E = Ellipsoid.from_dict(read(tmp_path / "ellipsoid.json"))
    assert np.allclose(E.A, 0.5 * np.eye(2), atol=1e-8)
    assert main(["center", "--in", str(files["sq"]), "--variant", "box",
                 "--out", str(tmp_path)]) == 0
    B = Box.from_dict(read(tmp_path / "box.json"))
    assert np.allclose(B.upper - B.lower, 1.0, atol=1e-6)
    assert main(["sample", "--in", str(files["sq"]), "--grid", "3", "--out", str(tmp_path)]) == 0
    S = SampleSet.read_csv(tmp_path / "samples.csv")
    H = HPolyhedron.from_dict(read(tmp_path / "hull.json"))
    assert H.contains_many(S.Z, 1e-9).all()
    assert main(["ocp-demo", "--out", str(tmp_path / "ocp")]) == 0
    for name in ("P_1", "P_2", "P_3", "Z_3"):
        HPolyhedron.from_dict(read(tmp_path / "ocp" / "stage_sets" / f"{name}.json"))
    TreeProblem.load(files["tree"])
