import json
import os
import subprocess
import sys

import pytest

from relaxbc import __version__
from relaxbc.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, Context, RunConfig, main

QUICK = {
    "problem": "P1_GEN_CZERO",
    "gkc": {"n_re": 12, "n_im": 24},
    "asymptotic": {"eps": 0.05, "times": [0.5], "N": 100},
    "grid": {"eps": 0.1, "ratio": 4.0, "times": [0.5, 1.0]},
    "experiment": {"eps": [0.2, 0.1], "grid": {"kind": "ratio", "ratio": 4.0}, "n_times": 2,
                   "bands": {"L2_vs_u0bar": [0.0, 5.0]}, "norms": ["L2", "L2_vs_u0bar"]},
}


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_preset_list(capsys):
    assert main(["preset-list"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 7 and lines[0].split()[0] == "L_EQ_N"


def test_usage_errors(capsys):
    assert main([]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_verify_gkc_pass_and_fail(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["verify-gkc", write_config(tmp_path, {"problem": "P1_GEN_CZERO"}), "--out", str(out)]) == EXIT_OK
    doc = json.load(open(out / "gkc.json"))
    assert doc["certificate"]["verdict"] == "PASS"
    assert doc["version"] == __version__ and len(doc["config_hash"]) == 64
    assert "GKC PASS" in capsys.readouterr().out
    bad = write_config(tmp_path, {"problem": "N1_POS_COUNTER"}, "bad.json")
    assert main(["verify-gkc", bad, "--out", str(out)]) == EXIT_FAIL


def test_config_errors(tmp_path, capsys):
    assert main(["verify-gkc", write_config(tmp_path, {"problem": "P1_GEN_CZERO", "colour": 1})]) == EXIT_CONFIG
    assert "colour" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text('{"problem": "P1_GEN_CZERO",\n  oops}')
    assert main(["verify-gkc", str(broken)]) == EXIT_CONFIG
    assert "line 2, column 3" in capsys.readouterr().err
    assert main(["verify-gkc", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["verify-gkc", write_config(tmp_path, {"gkc": {"n_re": 4}}, "nomodel.json")]) == EXIT_CONFIG


def test_inline_problem(tmp_path):
    doc = {
        "model": {"T": [[1]], "lambda": [-1], "a": [4]},
        "given": {"Bhat": []},
        "bc": {"family": "N1_NEG", "params": {"Ctilde": -1}},
        "u0": {"components": [[{"poly": [1.0], "center": 3.0, "width": 0.5}]]},
    }
    out = tmp_path / "o"
    assert main(["construct-bc", write_config(tmp_path, doc), "--out", str(out)]) == EXIT_OK
    bc = json.load(open(out / "construct_bc.json"))["bc"]
    assert bc["B_u"] == [[1.0]] and bc["B_p"] == [[0.0]]


def test_single_stages(tmp_path):
    cfg = write_config(tmp_path, QUICK)
    out = str(tmp_path / "o")
    for stage in ("compat-check", "build-data", "run-asymptotic", "run-stiff"):
        assert main([stage, cfg, "--out", out]) == EXIT_OK
    data = json.load(open(os.path.join(out, "data.json")))
    assert data["compat_passed"] is True
    asym = json.load(open(os.path.join(out, "asymptotic.json")))
    assert asym["residual"][0]["mismatch_max"] <= 1e-8
    header = open(os.path.join(out, "stiff.csv")).readline().strip()
    assert header == "t,x,u1,u2,p1,p2"


def test_pipeline_resume_and_determinism(tmp_path, capsys):
    cfg = write_config(tmp_path, QUICK)
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["pipeline", cfg, "--out", out1]) == EXIT_OK
    names = sorted(os.listdir(out1))
    assert {"construct_bc.json", "gkc.json", "compat.json", "asymptotic.json", "stiff.json", "rates.json"} <= set(names)
    assert "rates.csv" in names and "rates.svg" in names
    capsys.readouterr()
    assert main(["pipeline", cfg, "--out", out1]) == EXIT_OK
    assert capsys.readouterr().out.count("reused") == 6
    assert main(["pipeline", cfg, "--out", out2, "--jobs", "2"]) == EXIT_OK
    for name in names:
        assert open(os.path.join(out1, name), "rb").read() == open(os.path.join(out2, name), "rb").read(), name


def test_stale_artifacts_are_not_reused(tmp_path):
    out = str(tmp_path / "o")
    assert main(["construct-bc", write_config(tmp_path, QUICK), "--out", out]) == EXIT_OK
    same = Context(RunConfig(QUICK), out, 0, 1)
    assert same.completed("construct_bc.json", "construct-bc") is not None
    changed = Context(RunConfig(dict(QUICK, gkc={"n_re": 10})), out, 0, 1)
    assert changed.completed("construct_bc.json", "construct-bc") is None
    assert same.completed("construct_bc.json", "verify-gkc") is None


def test_pipeline_stops_at_gkc_fail(tmp_path, capsys):
    out = str(tmp_path / "o")
    assert main(["pipeline", write_config(tmp_path, {"problem": "N1_POS_COUNTER"}), "--out", out]) == EXIT_FAIL
    assert sorted(os.listdir(out)) == ["construct_bc.json", "gkc.json"]


def test_console_script_module_entry(tmp_path):
    res = subprocess.run([sys.executable, "-m", "relaxbc.cli", "preset-list"], capture_output=True, text=True)
    assert res.returncode == 0 and "GEN_CZERO" in res.stdout


@pytest.mark.parametrize("flag", ["--version"])
def test_version_flag(flag, capsys):
    assert main([flag]) == EXIT_OK
    assert __version__ in capsys.readouterr().out
