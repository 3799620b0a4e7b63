import json

import numpy as np
import pytest
from scipy import special

from collide.cli import run
from collide.config import ConfigError, bundled_path, field_from_config, load_json, rbm_from_config
from collide.core import RankDiagonalField


def _run(capsys, *argv):
    code = run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_kappa_command(capsys):
    code, out, _ = _run(capsys, "kappa", "--T", "1", "--y", "1", "--delta", "0.5", "--convention", "paper")
    assert code == 0
    data = json.loads(out)
    assert data["convention"] == "paper_delta"
    assert data["kappa"] == pytest.approx(special.gammainc(0.5, 0.5), abs=1e-12)


def test_diagnose_bundled_remark23(capsys):
    code, out, _ = _run(capsys, "diagnose", "--field", "remark23.json", "--samples", "300")
    assert code == 0
    assert json.loads(out)["classification"] == "NoTripleCollision"


def test_missing_file_is_config_error(capsys, tmp_path):
    missing = tmp_path / "nope.json"
    code, _, err = _run(capsys, "diagnose", "--field", str(missing))
    assert code == 2
    msg = json.loads(err)
    assert str(missing) in msg["message"]


def test_bad_arguments_are_config_errors(capsys):
    code, _, err = _run(capsys, "kappa", "--T", "1", "--y", "-1", "--delta", "0.5")
    assert code == 2 and json.loads(err)["error"] == "ParameterOutOfRange"
    code, _, err = _run(capsys, "simulate")
    assert code == 2 and json.loads(err)["exit_code"] == 2


def test_numeric_failure_exit_code(capsys, tmp_path):
    spec = {"kind": "rbm", "h": [0, 0], "R": [[1, 0], [0, 1]], "A": [[1, 2], [2, 1]]}
    p = tmp_path / "rbm.json"
    p.write_text(json.dumps(spec))
    code, _, err = _run(capsys, "rbm", "classify", "--spec", str(p))
    assert code == 3
    assert json.loads(err)["error"] == "NotPositiveDefinite"


def test_simulate_rerun_is_byte_identical(capsys, tmp_path):
    outs = []
    for run_id, threads in (("a", "1"), ("b", "3")):
        target = tmp_path / run_id / "ens.csv"
        code, out, _ = _run(
            capsys, "simulate", "--field", "identity.json", "--paths", "1100", "--T", "0.05", "--dt", "0.01",
            "--seed", "7", "--threads", threads, "--out", str(target), "--no-bound",
        )
        assert code == 0
        outs.append(target)
        manifest = json.loads((target.parent / "manifest.json").read_text())
        assert manifest["seed"] == 7 and sorted(manifest["outputs"]) == ["ens.csv", "ens.summary.json"]
    assert outs[0].read_bytes() == outs[1].read_bytes()
    header = outs[0].read_text().splitlines()[0]
    assert header == "path_id,t,x_1,x_2,x_3"


def test_simulate_reports_origin_bound(capsys):
    code, out, _ = _run(
        capsys, "simulate", "--field", "bass_pardoux.json", "--paths", "50", "--T", "0.5", "--eps", "0.1,0.05",
        "--bound-samples", "300",
    )
    assert code == 0
    data = json.loads(out)
    assert data["metric"] == "origin"
    assert set(data["bound_comparison"]["bound"]) == {"paper_delta", "classical_index"}
    assert [c["eps"] for c in data["curve"]] == [0.1, 0.05]


def test_rbm_classify_and_simulate(capsys, tmp_path):
    code, out, _ = _run(capsys, "rbm", "classify", "--spec", "atlas_violating.json")
    data = json.loads(out)
    assert code == 0 and data["verdict"] == "HitsCorner"
    assert set(data["wedge"]) >= {"xi", "theta1", "theta2", "beta"}
    code, out, _ = _run(capsys, "rbm", "--spec", "atlas_equal.json", "--paths", "5", "--T", "0.05", "--out", str(tmp_path / "p.csv"))
    assert code == 0
    assert (tmp_path / "p.csv").read_text().startswith("path_id,t,z_1,z_2,L_1,L_2")


def test_atlas_out_dir(capsys, tmp_path):
    code, _, _ = _run(capsys, "atlas", "--spec", "atlas_linear.json", "--paths", "10", "--T", "0.1", "--out-dir", str(tmp_path))
    assert code == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"ranked.csv", "gaps.csv", "recovered.csv", "zeta_summary.json", "classification.json", "manifest.json"}
    cls = json.loads((tmp_path / "classification.json").read_text())
    assert cls["corners"]["verdict"] == "NeverHitsAnyIntersection"


def test_bessel_tail_command(capsys):
    code, out, _ = _run(capsys, "bessel-tail", "--delta", "0.5", "--paths", "200", "--dt", "0.01", "--compare")
    data = json.loads(out)
    assert code == 0 and {"tail", "stderr", "paths", "match"} <= set(data)


def test_json_path_format(capsys, tmp_path):
    target = tmp_path / "e.json"
    code, _, _ = _run(capsys, "simulate", "--field", "identity.json", "--paths", "2", "--T", "0.02", "--dt", "0.01",
                      "--format", "json", "--out", str(target), "--no-bound")
    assert code == 0
    recs = json.loads(target.read_text())
    assert recs[0]["path_id"] == 0 and len(recs) == 6


def test_config_loader():
    for name in ("identity", "remark23", "bass_pardoux", "atlas_linear", "atlas_equal", "atlas_violating"):
        assert bundled_path(name).exists()
    assert isinstance(field_from_config(load_json("atlas_equal.json")), RankDiagonalField)
    assert rbm_from_config(load_json("atlas_equal.json")).dim == 2
    with pytest.raises(ConfigError):
        field_from_config({"kind": "mystery"})
    piecewise = {
        "kind": "piecewise", "n": 2,
        "regions": [
            {"label": "right", "sigma": [[1, 0], [0, 1]], "pieces": [[{"normal": [1, 0], "strict": True}]]},
            {"label": "left", "sigma": [[2, 0], [0, 1]], "mu": [0.5, 0], "pieces": [[{"normal": [-1, 0]}]]},
        ],
    }
    f = field_from_config(piecewise)
    assert f.locate(np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])).tolist() == [0, 1, 1]
    assert f.eig_floor == 1.0 and f.eig_ceiling == 4.0
