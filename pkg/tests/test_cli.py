import copy
import json
import subprocess
import sys

import numpy as np
import pytest

from hiersim.cli import main, reproduce
from hiersim.errors import ScenarioError
from hiersim.scenario import Scenario, build_certificate, corridor_experiment, load_scenario, preset, preset_names
from hiersim.synthesis import RobustCertificate


def scalar_doc(**extra):
    doc = {
        "schema": "hiersim-scenario-1",
        "name": "scalar",
        "concrete": {"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]]},
        "abstract": {"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]]},
        "u_max": 0.5,
        "sim": {"dt": 0.01, "T": 3.0},
        "input": {"type": "constant", "value": [0.5]},
    }
    doc.update(extra)
    return doc


def write(tmp_path, doc, name="scn.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# ---------------------------------------------------------------- scenario parsing

@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.update(schema="other"), "schema"),
    (lambda d: d["abstract"].update(C=[[1.0], [1.0]]), "output dimensions"),
    (lambda d: d.update(u_max=-1), "u_max"),
    (lambda d: d.pop("u_max"), "u_max"),
    (lambda d: d.update(disturbance={"kind": "bounded", "B_d": [[1.0], [2.0]]}), "rows"),
    (lambda d: d.update(disturbance={"kind": "gusts"}), "kind"),
    (lambda d: d.update(bound_regime="worst"), "bound_regime"),
    (lambda d: d.update(sim={"dt": 0.01}), "sim.T"),
    (lambda d: d.update(workspace={"bounds": [0, 0, 1, 1], "start": [0.5, 0.5], "goal": [0.6, 0.6]}), "2-D"),
    (lambda d: d["concrete"].update(A=[[1.0, 2.0]]), "concrete"),
])
def test_scenario_errors(mutate, message):
    doc = scalar_doc()
    mutate(doc)
    with pytest.raises(ScenarioError, match=message):
        Scenario.from_dict(doc)


def test_presets_available():
    names = preset_names()
    assert "corridor" in names
    for name in ("nominal", "bounded_corrected", "impulse_naive"):
        assert load_scenario(f"preset:{name}").name == f"corridor_{name}"
    with pytest.raises(ScenarioError, match="unknown preset"):
        load_scenario("preset:nope")


def test_corridor_scenario_bounds():
    scn = load_scenario("preset:corridor")
    cert, report = build_certificate(scn)
    assert report.passed
    eps = scn.all_eps(cert)
    assert eps["none"] == pytest.approx(cert.c_input * 0.1, rel=1e-12)
    assert eps["bounded"] == pytest.approx(cert.c_input * 0.1 + cert.c_dist, rel=1e-12)
    assert eps["none"] < eps["bounded"] < eps["impulse"]


def test_with_seed_is_pure():
    scn = load_scenario("preset:corridor")
    other = scn.with_seed(7)
    assert (scn.seed, scn.planner["seed"]) == (0, 0)
    assert (other.seed, other.planner["seed"]) == (7, 7)


# ---------------------------------------------------------------- exit codes

def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["synthesize", "--scenario", "x", "--bogus"])
    assert exc.value.code == 1
    assert main(["synthesize", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["synthesize", "--scenario", str(bad), "--out", str(tmp_path)]) == 1
    assert main(["synthesize", "--scenario", write(tmp_path, {"schema": "x"}), "--out", str(tmp_path)]) == 1


def test_identical_systems_eps_is_V0(tmp_path, capsys):
    doc = scalar_doc(initial={"x1": [1.0], "x2": [0.0]})
    scn = Scenario.from_dict(doc)
    cert, _ = build_certificate(scn)
    assert cert.c_input == pytest.approx(0.0, abs=1e-12)
    V0 = scn.V0(cert)
    assert V0 == pytest.approx(np.sqrt(cert.M[0, 0]), rel=1e-12)
    assert scn.eps(cert) == pytest.approx(V0, rel=1e-12)
    assert main(["simulate", "--scenario", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_violations"] == 0
    assert report["max_error"] == pytest.approx(1.0, rel=1e-9)


def test_no_exact_embedding_exit_2(tmp_path, capsys):
    doc = scalar_doc()
    doc["concrete"] = {"A": [[-1.0, 0.0], [0.0, -2.0]], "B": [[1.0], [1.0]], "C": [[0.0, 0.0]]}
    assert main(["synthesize", "--scenario", write(tmp_path, doc), "--out", str(tmp_path)]) == 2
    assert "hint" in capsys.readouterr().err


def test_no_path_exit_3(tmp_path, capsys):
    doc = corridor_experiment("bounded_corrected")
    doc["disturbance"]["d_max"] = 2.0  # eps beyond the passage half-width
    assert main(["plan", "--scenario", write(tmp_path, doc), "--out", str(tmp_path)]) == 3
    assert "hint" in capsys.readouterr().err


def test_naive_simulate_exit_4(tmp_path, capsys):
    assert main(["simulate", "--scenario", "preset:bounded_naive", "--out", str(tmp_path)]) == 4
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_violations"] > 0
    assert report["violations"][0]["error"] > report["eps"]
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")


def test_empty_workspace_straight_path(tmp_path, capsys):
    doc = preset("corridor")
    doc["workspace"]["obstacles"] = []
    assert main(["plan", "--scenario", write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    path = json.loads((tmp_path / "path.json").read_text())
    assert path["waypoints"] == [[20.0, 3.5], [4.0, 3.5]]
    assert path["u2"]["duration"] == pytest.approx(16.0 / 0.1 + 0.1)
    assert (tmp_path / "path.csv").read_text().splitlines()[0] == "x,y"


def test_certificate_round_trip(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synthesize", "--scenario", "preset:corridor", "--out", str(a)]) == 0
    assert "eps[none]" in capsys.readouterr().out
    cert = RobustCertificate.load(a / "cert.json")
    assert cert.lam == 1.1
    assert main(["verify", "--scenario", "preset:corridor", "--cert", str(a / "cert.json"), "--out", str(b)]) == 0
    assert json.loads((b / "verify.json").read_text())["passed"] is True
    assert main(["plan", "--scenario", "preset:corridor", "--cert", str(a / "cert.json"), "--out", str(a)]) == 0
    assert main(["plan", "--scenario", "preset:corridor", "--out", str(b)]) == 0
    assert (a / "path.json").read_bytes() == (b / "path.json").read_bytes()


def test_simulate_with_saved_path(tmp_path, capsys):
    assert main(["plan", "--scenario", "preset:nominal", "--out", str(tmp_path)]) == 0
    assert main(["simulate", "--scenario", "preset:nominal", "--path", str(tmp_path / "path.json"),
                 "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["goal_reached"] and report["collision_samples"] == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hiersim", "synthesize", "--scenario", "preset:corridor",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "cert.json").is_file()


# ---------------------------------------------------------------- reproduce

def _strip_runtime(doc):
    doc = copy.deepcopy(doc)
    doc.pop("runtime_s", None)
    return doc


def test_reproduce_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    reproduce(a)
    reproduce(b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert len(files) == 2 + 5 * 7
    for rel in files:
        if rel.name == "report.json":
            ra = json.loads((a / rel).read_text())
            rb = json.loads((b / rel).read_text())
            assert _strip_runtime(ra) == _strip_runtime(rb)
        else:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
