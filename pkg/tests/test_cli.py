import json
import os

import pytest

from semidecay.cli import main
from semidecay.verify import ExperimentSpec, FamilySpec, build_family, paper_suite


def _read(path):
    with open(path, "rb") as fh:
        return fh.read()


def _small_suite(path):
    specs = paper_suite(N=256, t_max=1e3)
    with open(path, "w") as fh:
        json.dump([s.to_json() for s in specs], fh)
    return [s.name for s in specs]


def test_catalog_probe(tmp_path):
    assert main(["catalog", "--probe", "-o", str(tmp_path)]) == 0
    listing = json.loads(_read(tmp_path / "catalog.json"))
    assert len(listing) == 6
    rows = _read(tmp_path / "catalog_probe.csv").decode().splitlines()
    assert rows[0].startswith("name,lambda")
    assert len(rows) == 1 + 6 * 7
    assert max(float(r.split(",")[-1]) for r in rows[1:]) <= 1e-6


def test_unknown_flag(capsys):
    assert main(["catalog", "--bogus"]) == 2
    assert "input schemas" in capsys.readouterr().err


def test_missing_subcommand():
    assert main([]) == 2


def test_bad_inputs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["calc", "-i", str(bad), "-o", str(tmp_path)]) == 2
    assert main(["calc", "-i", str(tmp_path / "missing.json"), "-o", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"task": "dunford"}))
    assert main(["calc", "-i", str(bad), "-o", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"experiments": []}))
    assert main(["verify", "-i", str(bad), "-o", str(tmp_path)]) == 2
    assert main(["catalog", "--workers", "0", "-o", str(tmp_path)]) == 2
    assert main(["profile", "-i", str(bad), "--window-inf", "5:1"]) == 2


def test_calc_and_decay(tmp_path):
    op = {"kind": "diagonal", "dim": 2, "data": [[1.0, 0.0], [3.0, 0.0]]}
    spec = tmp_path / "calc.json"
    spec.write_text(json.dumps({"operator": op, "task": "frac_power_inv", "tau": 1}))
    assert main(["calc", "-i", str(spec), "-o", str(tmp_path)]) == 0
    out = json.loads(_read(tmp_path / "calc.json"))
    assert out["result"]["data"] == [[0.5, 0.0], [0.25, 0.0]]
    dec = tmp_path / "decay_in.json"
    dec.write_text(json.dumps({"operator": op, "weight": None, "t_grid": [1, 10, 5]}))
    assert main(["decay", "-i", str(dec), "-o", str(tmp_path)]) == 0
    rows = _read(tmp_path / "decay.csv").decode().splitlines()
    assert rows[0] == "t,norm" and len(rows) == 7
    t, v = map(float, rows[1].split(","))
    assert t == 1.0 and v == pytest.approx(0.36787944117144233)


def test_profile(tmp_path):
    op = FamilySpec("DiagInf", (1, 0), 256)
    path = tmp_path / "op.json"
    path.write_text(json.dumps(build_family(op).to_json()))
    assert main(["profile", "-i", str(path), "-o", str(tmp_path), "--window-inf", "1e1:1e2"]) == 0
    data = json.loads(_read(tmp_path / "profile.json"))
    assert abs(data["fit_inf"]["exponent"] - 1) <= 0.1


def test_predict(tmp_path):
    rc = main(["predict", "--theorem", "CorHilbertInf", "--params", '{"beta": 1, "b": 1, "tau": 2}',
               "-o", str(tmp_path)])
    assert rc == 0
    pred = json.loads(_read(tmp_path / "prediction.json"))
    assert pred["poly"] == -1 and pred["logexp"] == 2
    assert main(["predict", "--theorem", "CorHilbertInf", "--params", '{"beta": 1, "tau": 0.5}',
                 "-o", str(tmp_path)]) == 2


def test_verify_suite_and_determinism(tmp_path, capsys):
    suite = tmp_path / "suite.json"
    names = _small_suite(suite)
    outs = []
    for tag, workers in (("a", "1"), ("b", "8"), ("c", "1")):
        d = tmp_path / tag
        assert main(["verify", "-i", str(suite), "-o", str(d), "--workers", workers, "--seed", "0"]) == 0
        outs.append({n: _read(d / f"{n}.json") for n in names} | {"summary": _read(d / "summary.csv")})
    assert outs[0] == outs[1] == outs[2]
    assert "verdict" in capsys.readouterr().out


def test_verify_fail_exit(tmp_path):
    spec = ExperimentSpec("bad", FamilySpec("DiagInf", (1, 0), 256), "CorHilbertInf",
                          {"beta": 1, "b": 0, "tau": 2}, t_grid=(1, 1e3, 25), witness_sup_norm=5.0)
    suite = tmp_path / "suite.json"
    suite.write_text(json.dumps([spec.to_json()]))
    assert main(["verify", "-i", str(suite), "-o", str(tmp_path)]) == 1
    # outputs are written even when the verdict fails
    assert os.path.exists(tmp_path / "bad.json") and os.path.exists(tmp_path / "summary.csv")


def test_verify_predict_flag(tmp_path, capsys):
    suite = tmp_path / "suite.json"
    spec = paper_suite(N=256, t_max=1e3)[0]
    suite.write_text(json.dumps([spec.to_json()]))
    assert main(["verify", "-i", str(suite), "--predict", "-o", str(tmp_path)]) == 0
    preds = json.loads(_read(tmp_path / "predictions.json"))
    entry = preds[spec.name]
    assert (entry["poly"], entry["logexp"], entry["form"]) == (-1.0, 0.0, "t^(-1) * log(1+t)^(0)")
    assert '"form"' in capsys.readouterr().out
