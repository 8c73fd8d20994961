import csv
import json

import numpy as np
import pytest

from kdvnf import nfmap
from kdvnf.cli import dispatch

PNG = b"\x89PNG\r\n\x1a\n"


def run(capsys, *args):
    code = dispatch(list(args))
    return code, capsys.readouterr()


def test_spectrum_lame(tmp_path, capsys):
    code, _ = run(capsys, "spectrum", "--potential", "lame:0.5", "--nmax", "8", "--out", str(tmp_path))
    assert code == 0
    rows = list(csv.DictReader(open(tmp_path / "spectrum.csv")))
    assert float(rows[2]["gamma"]) < 1e-6
    assert float(rows[1]["gamma"]) > 1
    rep = json.loads((tmp_path / "spectrum.json").read_text())
    assert rep["schema"] == 1 and rep["config"]["nmax"] == 8 and rep["results"]["open_gaps"] == [1]
    assert (tmp_path / "gaps.png").read_bytes()[:8] == PNG
    assert np.loadtxt(tmp_path / "gaps.dat").shape == (8, 2)


def test_trig_file_and_config(tmp_path, capsys):
    qf = tmp_path / "q.json"
    qf.write_text(json.dumps({"n_pot": 1, "coeffs": [[1, 1.0, 0.0], [-1, 1.0, 0.0]]}))
    cf = tmp_path / "c.json"
    cf.write_text(json.dumps({"potential": f"trig:{qf}", "nmax": 4}))
    code, _ = run(capsys, "spectrum", "--config", str(cf), "--out", str(tmp_path / "o"))
    assert code == 0
    rep = json.loads((tmp_path / "o" / "spectrum.json").read_text())
    assert rep["results"]["table"]["n_max"] == 4


def test_deterministic_report(tmp_path, capsys):
    for d in ("a", "b"):
        assert run(capsys, "floquet", "--nset", "3,5,8", "--out", str(tmp_path / d))[0] == 0
    assert (tmp_path / "a" / "floquet.json").read_bytes() == (tmp_path / "b" / "floquet.json").read_bytes()


def test_floquet_records(tmp_path, capsys):
    assert run(capsys, "floquet", "--nset", "2,3,4", "--out", str(tmp_path))[0] == 0
    rec = json.loads((tmp_path / "floquet.json").read_text())["results"]["records"]
    assert [r["n"] for r in rec] == [2, 3, 4]
    assert len(rec[0]["W_samples"]) == 512
    # gap 1 of the Lame potential is open: Floquet data are not defined there
    code, out = run(capsys, "floquet", "--nset", "1,2,3", "--out", str(tmp_path))
    assert code == 2 and "kdvnf.floquet" in out.err


def test_expand(tmp_path, capsys):
    code, _ = run(capsys, "expand", "--family", "W", "--N", "2", "--out", str(tmp_path))
    assert code == 0
    res = json.loads((tmp_path / "expand.json").read_text())["results"]
    assert res["n_set"] == [8, 11, 16, 23, 32, 45]
    assert len(res["remainder_sup"]) == 6 and res["bounded"]
    assert (tmp_path / "remainder_W.png").exists()


def test_freqs_and_paracalc(tmp_path, capsys):
    assert run(capsys, "freqs", "--nset", "4,8,16", "--out", str(tmp_path))[0] == 0
    res = json.loads((tmp_path / "freqs.json").read_text())["results"]
    assert list(res["actions"]) == ["1"]
    assert run(capsys, "paracalc", "--out", str(tmp_path))[0] == 0
    header = open(tmp_path / "paracalc.csv").readline().strip()
    assert header == "k,j,i,C_i,fit_residual"


def test_chart_commands(tmp_path, capsys):
    code, _ = run(capsys, "corrector", "--nmax", "8", "--export-matrices", "--out", str(tmp_path))
    assert code == 0
    res = json.loads((tmp_path / "corrector.json").read_text())["results"]
    assert res["base_fixed"] < 1e-10 and res["inverse"] < 1e-8
    L = nfmap.import_matrix(tmp_path / "L.bin")
    assert L.shape == (16, 16)
    assert run(capsys, "normalform", "--nmax", "8", "--out", str(tmp_path))[0] == 0


def test_verify_quick(tmp_path, capsys):
    code, out = run(capsys, "verify", "--quick", "--out", str(tmp_path))
    assert code == 0
    lines = [l for l in out.out.splitlines() if l.startswith("[")]
    assert len(lines) == 2 and all(l.startswith("[PASS]") for l in lines)
    res = json.loads((tmp_path / "verify.json").read_text())["results"]
    assert res["all_passed"]


@pytest.mark.parametrize("args", [
    ["spectrum", "--potential", "bogus"],
    ["spectrum", "--nmax", "x"],
    ["spectrum", "--nmax", "0"],
    ["floquet", "--nset", "3,4"],
    ["corrector", "--potential", "zero"],
    ["nosuch"],
])
def test_config_errors(tmp_path, capsys, args):
    assert run(capsys, *args, *([] if args == ["nosuch"] else ["--out", str(tmp_path)]))[0] == 1


def test_unknown_config_key(tmp_path, capsys):
    cf = tmp_path / "c.json"
    cf.write_text(json.dumps({"bad": 1}))
    assert run(capsys, "spectrum", "--config", str(cf))[0] == 1


def test_computation_error(tmp_path, capsys):
    # five fitted powers cannot be extracted from three n values
    code, out = run(capsys, "expand", "--family", "W", "--N", "5", "--nset", "8,11,16",
                    "--out", str(tmp_path))
    assert code == 2
    assert "kdvnf.asympt" in out.err
