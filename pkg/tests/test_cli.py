import io
import json
import shutil
import subprocess
import sys

import pytest

from starindex import suites
from starindex.cli import REPORT_SCHEMA, REPORT_VERSION, bundled_geometries, load_geometry, main, parse_geometry
from starindex.errors import InconsistentRules, ParseError


def run(argv):
    out = io.StringIO()
    code = main(argv, out=out)
    return code, out.getvalue()


def test_bundled_geometries():
    assert bundled_geometries() == ["cp1", "flat"]
    cp1 = load_geometry("cp1")
    assert cp1.name == "cp1" and cp1.alg.atom_names == ["u", "L"]


def test_geometry_grammar_errors():
    with pytest.raises(InconsistentRules):
        parse_geometry("[atoms]\nv = zb1 | z1*z1\n[potential]\n-1 = z1*zb1\n")
    with pytest.raises(ParseError):
        parse_geometry("[atoms]\nv = zb1\n[potential]\n-1 = z1*zb1\n")
    with pytest.raises(ParseError):
        parse_geometry("[chart]\ndim = 1\n")
    with pytest.raises(ParseError):
        parse_geometry("[potential]\nminus1 = z1*zb1\n")


def test_verify_flat_json_is_deterministic():
    argv = ["verify", "--geometry", "flat", "--deg-max", "6", "--suite", "star,trace", "--suite", "super",
            "--report", "json", "--seed", "7"]
    code1, out1 = run(argv)
    code2, out2 = run(argv)
    assert code1 == code2 == 0
    assert out1 == out2
    rep = json.loads(out1)
    assert rep["schema"] == REPORT_SCHEMA and rep["version"] == REPORT_VERSION
    assert rep["config"]["seed"] == 7 and rep["config"]["suites"] == ["star", "trace", "super"]
    assert rep["status"] == "pass"
    for rec in rep["checks"]:
        assert set(rec) >= {"id", "topic", "window", "status", "residual"}
        assert "wall_time" not in rec
        if rec["status"] == "pass":
            assert rec["residual"] == ""


def test_timing_is_opt_in():
    code, out = run(["verify", "--geometry", "flat", "--deg-max", "4", "--suite", "star", "--report", "json",
                     "--timing"])
    assert code == 0
    assert all("wall_time" in r for r in json.loads(out)["checks"])


def test_text_report_and_skips():
    code, out = run(["verify", "--geometry", "flat", "--deg-max", "4", "--suite", "index"])
    assert code == 0
    assert "SKIP  index.chain" in out
    assert out.strip().splitlines()[-1].startswith("PASS:")


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.geom"
    bad.write_text("[atoms]\nv = zb1 | z1*z1\n[potential]\n-1 = z1*zb1\n")
    assert run(["verify", "--geometry", str(bad)])[0] == 2
    assert run(["verify", "--geometry", "missing-geometry"])[0] == 2
    assert run(["verify", "--geometry", "flat", "--suite", "nonsense"])[0] == 2
    assert run(["verify", "--geometry", "flat", "--nu-order", "-1"])[0] == 2
    sing = tmp_path / "sing.geom"
    sing.write_text("[potential]\n0 = z1*zb1\n")
    assert run(["index", "--geometry", str(sing)])[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["verify", "--report", "xml"])
    assert exc.value.code == 2
    assert "configuration error" in capsys.readouterr().err


def test_failing_check_exits_1(monkeypatch):
    def broken(ctx):
        yield "star.broken", "a check that fails", lambda: False
    monkeypatch.setitem(suites.SUITE_FUNCS, "star", broken)
    code, out = run(["verify", "--geometry", "flat", "--suite", "star"])
    assert code == 1
    assert "FAIL  star.broken" in out


def test_star_verb():
    code, out = run(["star", "zb1", "z1", "--geometry", "flat"])
    assert code == 0
    assert "f*g = nu^0*(z*zb) + nu^1*(1)" in out


def test_index_verb_cp1_json():
    code, out = run(["index", "--geometry", "cp1", "--deg-max", "4", "--report", "json"])
    assert code == 0
    rep = json.loads(out)
    tau = rep["values"]["tau"]
    assert tau["unit"] == "pi"
    assert [(t["nu"], t["re"], t["im"]) for t in tau["terms"]] == [(-1, "0", "-2"), (0, "0", "-2")]


def test_epsilon_and_evolve_verbs():
    assert run(["epsilon", "--geometry", "cp1", "--deg-max", "4"])[0] == 0
    code, out = run(["evolve", "--geometry", "flat", "--deg-max", "4"])
    assert code == 0 and "F = e^{K} * ((1)*1)" in out


def test_console_script():
    exe = shutil.which("starindex")
    cmd = [exe] if exe else [sys.executable, "-m", "starindex.cli"]
    res = subprocess.run(cmd + ["star", "z1", "zb1", "--geometry", "flat"], capture_output=True, text=True)
    assert res.returncode == 0 and "z*zb" in res.stdout
