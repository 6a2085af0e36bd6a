import csv
import json
import os
import subprocess
import sys

import pytest

from archdeploy.cli import main

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIG1 = os.path.join(ROOT, "configs", "fig1.json")
GEANT = os.path.join(ROOT, "configs", "geant_like.json")


def write_cfg(tmp_path, d, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_report_fig1(tmp_path):
    out = tmp_path / "o"
    assert main(["report", "--config", FIG1, "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["gamma"] == pytest.approx(3.0)
    assert rep["profitable"] is True and rep["necessary_condition"] is False
    man = json.loads((out / "manifest.json").read_text())
    assert man["verb"] == "report" and man["seed"] == 0
    assert len(man["config_sha256"]) == 64
    assert "numpy" in man["versions"]


def test_sweep_price_fig1(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep-price", "--config", FIG1, "--out", str(out)]) == 0
    rows = read_csv(out / "sweep_price.csv")
    robust = {float(r["price"]): int(r["robust"]) for r in rows}
    # B = p / 3 covers the total cost 9 from p = 27 on
    assert robust[24.0] == 0 and robust[27.0] == 3 and robust[36.0] == 3
    assert all(r["heuristic"] == "0" for r in rows)


def test_sweeps_byte_identical_and_parallel(tmp_path):
    cfg = json.loads(open(GEANT).read())
    cfg["grid"] = {"price": [5, 14], "alpha": [2, "inf"], "flatten": [3]}
    p = write_cfg(tmp_path, cfg)
    blobs = []
    for k, jobs in enumerate(["1", "1", "2"]):
        out = tmp_path / f"o{k}"
        assert main(["sweep-alpha", "--config", p, "--out", str(out), "--jobs", jobs]) == 0
        blobs.append((out / "sweep_alpha.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_sweep_flatten(tmp_path):
    cfg = json.loads(open(GEANT).read())
    cfg["grid"] = {"flatten": [2, 4]}
    out = tmp_path / "o"
    assert main(["sweep-flatten", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "sweep_flatten.csv")
    assert [r["flatten"] for r in rows] == ["2", "4"]


def test_logit_and_mechanism(tmp_path):
    cfg = json.loads(open(FIG1).read())
    cfg["unit_price"] = 30.0
    cfg["logit"] = {"beta": 0.5, "steps": 200}
    cfg["replicas"] = 2
    p = write_cfg(tmp_path, cfg)
    out = tmp_path / "o"
    assert main(["logit", "--config", p, "--out", str(out), "--seed", "4"]) == 0
    rows = read_csv(out / "logit.csv")
    assert len(rows) == 201 and set(rows[0]) == {"step", "deployer_count", "potential"}
    assert main(["mechanism", "--config", p, "--out", str(out)]) == 0
    rows = read_csv(out / "tipping.csv")
    assert rows[-1]["cumulative_deployers"] == "3"


def test_induction_line(tmp_path):
    cfg = {
        "flows": [{"weight": 1.0, "paths": [[0, 1, 2]]}],
        "costs": {"0": 1 / 3, "1": 1 / 3, "2": 1 / 3},
        "unit_price": 1.0,
        "logit": {"induction": {"rounds": 40}},
    }
    out = tmp_path / "o"
    assert main(["induction", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == 0
    rows = read_csv(out / "induction.csv")
    last = [r for r in rows if r["round"] == "40"]
    assert len(last) == 3
    assert float(last[0]["upper"]) - float(last[0]["lower"]) < 1e-3


def test_validate_ok(tmp_path):
    out = tmp_path / "o"
    assert main(["validate", "--config", FIG1, "--out", str(out)]) == 0
    assert json.loads((out / "diagnostics.json").read_text()) == []


def codes(out):
    return {d["code"] for d in json.loads((out / "diagnostics.json").read_text())}


def test_validate_weight_sum(tmp_path):
    cfg = {"flows": [{"weight": 0.6, "paths": [[1, 2]]}], "costs": {"1": 1, "2": 1}}
    out = tmp_path / "o"
    assert main(["validate", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == 1
    assert codes(out) == {"WEIGHT_SUM"}


def test_validate_unreachable(tmp_path):
    cfg = {
        "topology": {"source": "inline", "edges": [[1, 2], [3, 4]]},
        "traffic": {"source": "inline", "entries": [[1, 2, 1.0], [1, 4, 1.0]]},
    }
    out = tmp_path / "o"
    assert main(["validate", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == 1
    diags = json.loads((out / "diagnostics.json").read_text())
    assert diags == [{"code": "UNREACHABLE", "detail": [1, 4]}]


def test_validate_bad_edge_and_costs(tmp_path):
    cfg = {
        "topology": {"source": "inline", "edges": [[1, 2]]},
        "flows": [{"weight": 1.0, "paths": [[1, 3]]}],
        "costs": {"1": -1},
    }
    out = tmp_path / "o"
    assert main(["validate", "--config", write_cfg(tmp_path, cfg), "--out", str(out)]) == 1
    assert codes(out) == {"BAD_EDGE", "COST_MISSING", "COST_INVALID"}


def test_bad_config(tmp_path):
    p = write_cfg(tmp_path, {"nonsense": True})
    assert main(["report", "--config", p, "--out", str(tmp_path / "o")]) == 1


def test_dataset_missing_exit(tmp_path, monkeypatch):
    monkeypatch.delenv("ARCHDEPLOY_DATA", raising=False)
    p = write_cfg(tmp_path, {"topology": {"source": "file", "path": "geant/topology.txt"}})
    assert main(["report", "--config", p, "--out", str(tmp_path / "o")]) == 2


def test_cap_exceeded_exit(tmp_path):
    assert main(["induction", "--config", GEANT, "--out", str(tmp_path / "o")]) == 3


def test_console_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "archdeploy", "report", "--config", FIG1, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0
    assert json.loads(r.stdout)["gamma"] == pytest.approx(3.0)
