import csv
import json
import subprocess
import sys

import pytest

from nlcap.cli import fmt, main, parse_radii
from nlcap.errors import ConfigParse

FRAC = {"family": "fractional", "s": 0.25, "order": 2, "d": 1, "p": 2}


@pytest.fixture
def kfile(tmp_path):
    path = tmp_path / "frac.json"
    path.write_text(json.dumps(FRAC))
    return path


def read_rows(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def test_fmt_and_radii():
    assert fmt(0.1) == "0.1" and fmt(1 / 3) == repr(1 / 3) and fmt(True) == "true" and fmt(7) == "7"
    assert parse_radii("0.1, 0.5,1") == (0.1, 0.5, 1.0)
    assert parse_radii("") == ()
    with pytest.raises(ConfigParse):
        parse_radii("a,b")


def test_kernel_info(tmp_path, kfile):
    out = tmp_path / "ki"
    assert main(["kernel-info", "--kernel", str(kfile), "--radii", "0.1,0.5,1,2", "--out", str(out)]) == 0
    rows = read_rows(out / "kernel_info.csv")
    assert [float(r["r"]) for r in rows] == [0.1, 0.5, 1.0, 2.0]
    for r in rows:
        assert float(r["h_p/L"]) == pytest.approx(4.0 / 3.0, rel=1e-6)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 42 and manifest["command"] == "kernel-info"
    assert set(manifest) >= {"kernel", "geometry", "tolerances", "wall_time_s", "p"}
    raw = (out / "kernel_info.csv").read_bytes()
    assert b"\r" not in raw and raw.startswith(b"r,L,h_p,h_p/L\n")


def test_capacity_empty_table(tmp_path, kfile):
    out = tmp_path / "cap"
    assert main(["capacity", "--kernel", str(kfile), "--radii", "", "--out", str(out)]) == 0
    assert (out / "capacity.csv").read_text() == "r,cap_value,bump_upper,reference,ratio,n,iters\n"


def test_capacity_rows_and_snapshots(tmp_path, kfile):
    out = tmp_path / "cap"
    args = ["capacity", "--kernel", str(kfile), "--radii", "0.25,0.5", "--extent", "4", "--n", "128",
            "--out", str(out), "--snapshots"]
    assert main(args) == 0
    rows = read_rows(out / "capacity.csv")
    assert len(rows) == 2
    for r in rows:
        assert float(r["cap_value"]) <= float(r["bump_upper"])
        assert int(r["n"]) == 128
    assert (out / "minimizer_r0.25_n128.csv").exists()


def test_determinism(tmp_path, kfile):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        args = ["capacity", "--kernel", str(kfile), "--radii", "0.5", "--extent", "4", "--n", "64", "--out", str(out)]
        assert main(args) == 0
        outs.append((out / "capacity.csv").read_bytes())
    assert outs[0] == outs[1]


def test_coarea_command(tmp_path):
    k = tmp_path / "k.json"
    k.write_text(json.dumps({"family": "fractional", "s": 0.5, "order": 1, "d": 1, "p": 1}))
    out = tmp_path / "co"
    assert main(["coarea-check", "--kernel", str(k), "--n", "512", "--out", str(out)]) == 0
    rows = read_rows(out / "coarea.csv")
    assert rows and all(float(r["relerr"]) < 1e-2 for r in rows)


def test_hardy_and_property_commands(tmp_path, kfile):
    out = tmp_path / "h"
    assert main(["hardy-check", "--kernel", str(kfile), "--n", "128", "--out", str(out)]) == 0
    rows = read_rows(out / "hardy.csv")
    assert {r["variant"] for r in rows} == {"fullspace", "halfspace", "embedding"}
    assert all(r["pass"] == "true" for r in rows)
    out = tmp_path / "ps"
    assert main(["property-suite", "--kernel", str(kfile), "--n", "128", "--out", str(out)]) == 0
    assert all(r["pass"] == "true" for r in read_rows(out / "properties.csv"))


def test_run_config_file(tmp_path, kfile):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"kernel": kfile.name, "radii": [0.5, 1.0], "out": str(tmp_path / "o")}))
    assert main(["kernel-info", "--config", str(cfg)]) == 0
    assert len(read_rows(tmp_path / "o" / "kernel_info.csv")) == 2
    cfg.write_text(json.dumps({"kernel": kfile.name, "bogus": 1}))
    assert main(["kernel-info", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2


def test_exit_codes(tmp_path, kfile, capsys):
    out = str(tmp_path / "e")
    assert main(["capacity", "--kernel", str(kfile), "--n", "100", "--out", out]) == 2
    assert main(["capacity", "--kernel", str(tmp_path / "missing.json"), "--out", out]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["kernel-info", "--kernel", str(bad), "--out", out]) == 2
    # A ball too large for the box is a numerical-domain error.
    assert main(["capacity", "--kernel", str(kfile), "--radii", "3", "--extent", "4", "--n", "64", "--out", out]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert err and all(line.startswith("nlcap:") for line in err)


def test_console_script(tmp_path, kfile):
    out = tmp_path / "s"
    proc = subprocess.run([sys.executable, "-m", "nlcap.cli", "kernel-info", "--kernel", str(kfile),
                           "--radii", "1", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(out / "kernel_info.csv")) == 1
