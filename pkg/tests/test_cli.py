import csv
import io
import shutil
import subprocess
import sys

import pytest

from coalloc import cli
from coalloc.errors import SolverError

from published import PTDF


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def results(tmp_path_factory):
    base = tmp_path_factory.mktemp("results")
    dirs = {}
    for mode in ("decoupled", "balanced", "overprocure"):
        code, _, err = run("clear", "paper-4zone", "--mode", mode, "--out", str(base / mode))
        assert code == 0, err
        dirs[mode] = base / mode
    return dirs


def test_ptdf_table():
    code, out, _ = run("ptdf", "paper-4zone")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "zone,1,2,3,4"
    table = {row.split(",")[0]: [float(v) for v in row.split(",")[1:]] for row in lines[1:]}
    assert table["A"] == [0, 0, 0, 0]
    for zone, row in PTDF.items():
        assert table[zone] == row


def test_ptdf_two_zone(tmp_path):
    path = tmp_path / "two.yaml"
    path.write_text("format: coalloc-instance\nversion: 1\nzones: [A, B]\nslack: A\n"
                    "lines:\n  - {id: 7, from: A, to: B, capacity: 1}\nbids: []\n")
    code, out, _ = run("ptdf", str(path))
    assert code == 0 and out.splitlines() == ["zone,7", "A,0", "B,1"]


def test_ptdf_unknown_zone_exit_2(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("format: coalloc-instance\nversion: 1\nzones: [A, B]\nslack: A\n"
                    "lines:\n  - {id: 1, from: A, to: Q, capacity: 1}\nbids: []\n")
    code, _, err = run("ptdf", str(path))
    assert code == 2 and "'Q'" in err


def test_parse_error_exit_2_with_position(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("format: coalloc-instance\nzones: [A\n")
    code, _, err = run("ptdf", str(path))
    assert code == 2 and "line" in err and "column" in err


@pytest.mark.parametrize("mode,tsw", [("decoupled", "24"), ("balanced", "76"), ("overprocure", "80")])
def test_clear_summary_tsw(results, mode, tsw):
    summary = {r["key"]: r["value"] for r in _rows(results[mode] / "summary.csv")}
    assert summary["tsw"] == tsw and summary["mode"] == mode
    assert {"acceptances.csv", "prices.csv", "worst_case.csv", "flows.csv", "recourse.csv"} <= {
        p.name for p in results[mode].iterdir()}


def test_clear_worst_case_table(results):
    rows = _rows(results["overprocure"] / "worst_case.csv")
    line4 = {r["recourse"]: r for r in rows if r["line"] == "4" and r["direction"] == "+"}
    assert line4["no"]["load"] == "3" and line4["yes"]["load"] == "2"
    assert line4["yes"]["vertex"] == "B+"


def test_settle_external_reproduces_cash_flows(results, tmp_path):
    code, out, err = run("settle", "paper-4zone", str(results["balanced"]), "--prices", "external",
                         "--out", str(tmp_path))
    assert code == 0 and err == ""
    flows = {(r["zone"], r["product"]): r["cash_flow"] for r in _rows(tmp_path / "cash_flows.csv")}
    assert flows == {("A", "E"): "-48", ("B", "E"): "72", ("A", "R+"): "-4", ("B", "R+"): "32",
                     ("B", "R-"): "24", ("C", "R-"): "-16"}
    assert {r["product"]: r["rent"] for r in _rows(tmp_path / "rents.csv")} == {"E": "24", "R+": "28", "R-": "8"}
    assert "rent,60" in out and "surplus,16" in out


def test_settle_overprocure_warns_about_published_surplus(results):
    code, out, err = run("settle", "paper-4zone", str(results["overprocure"]), "--prices", "external")
    assert code == 0
    assert "rent,48" in out and "surplus,32" in out
    assert err.count("warning W102") == 2


def test_settle_missing_prices_exit_2(results, tmp_path):
    src = "paper-4zone"
    code, _, err = run("settle", src, str(results["decoupled"]), "--prices", "external")
    assert code == 2 and "no price overrides" in err
    inst = tmp_path / "partial.yaml"
    text = cli.load_instance(src).path.read_text().replace(
        "    - {zone: C, product: R-, price: 4}    # zone C negative reserve: 4\n  overprocure", "  overprocure")
    inst.write_text(text)
    code, _, err = run("settle", str(inst), str(results["balanced"]), "--prices", "external")
    assert code == 2 and "(C, R-)" in err


def test_settle_round_trip_is_bit_identical(results, book, topo):
    from coalloc.clearing import clear
    from coalloc.pricing import price_intervals
    from coalloc.settlement import settle

    from coalloc.formats import read_results

    for mode in ("balanced", "overprocure"):
        direct = clear(book, topo, mode)
        reread = read_results(results[mode])
        assert reread.acceptance == direct.acceptance
        a = settle(book, direct.acceptance, price_intervals(direct))
        b = settle(book, reread.acceptance, reread.prices)
        assert a == b


def test_verify_balanced_passes_with_one_price_warning(results):
    code, out, err = run("verify", "paper-4zone", str(results["balanced"]))
    assert code == 0
    assert "deliverability: pass" in out and "oracle: pass - grid optimum 76" in out
    warnings = [line for line in err.splitlines() if line.startswith("warning W101")]
    assert len(warnings) == 1 and "RP-B-sup-6" in warnings[0] and "price 8" in warnings[0]


def test_verify_overprocure_passes(results):
    code, out, err = run("verify", "paper-4zone", str(results["overprocure"]))
    assert code == 0
    assert "oracle: pass - grid optimum 80" in out
    assert "W101" not in err and err.count("W102") == 2


def test_verify_own_prices(results):
    for mode in ("decoupled", "balanced", "overprocure"):
        code, out, err = run("verify", "paper-4zone", str(results[mode]), "--prices", "dual")
        assert code == 0, out + err
        assert "W10" not in err


def test_verify_tampered_dispatch_fails_on_line4(results, tmp_path):
    tampered = tmp_path / "tampered"
    shutil.copytree(results["overprocure"], tampered)
    path = tampered / "acceptances.csv"
    text = path.read_text().replace("RP-B-sup-6,R+,B,-4,6,0.5", "RP-B-sup-6,R+,B,-4,6,0")
    path.write_text(text)
    code, out, _ = run("verify", "paper-4zone", str(tampered))
    assert code == 1
    assert "deliverability: FAIL" in out and "line 4 load 3 > 2" in out


def test_results_for_other_instance_rejected(results, tmp_path):
    broken = tmp_path / "r"
    shutil.copytree(results["balanced"], broken)
    path = broken / "acceptances.csv"
    path.write_text(path.read_text().replace("E-A-sup-12", "someone-else"))
    code, _, err = run("verify", "paper-4zone", str(broken))
    assert code == 2 and "do not match" in err


def test_vertex_cap_exit_3(monkeypatch, tmp_path):
    monkeypatch.setenv("COALLOC_VERTEX_CAP", "2")
    code, _, err = run("clear", "paper-4zone", "--mode", "balanced", "--out", str(tmp_path))
    assert code == 3 and "cap" in err


def test_solver_failure_exit_4(monkeypatch, tmp_path):
    def broken(*args, **kwargs):
        raise SolverError("numerical trouble")

    monkeypatch.setattr(cli, "clear", broken)
    code, _, err = run("clear", "paper-4zone", "--mode", "balanced")
    assert code == 4 and "numerical trouble" in err


def test_zero_trade_instance_settles_to_zero(tmp_path):
    inst = tmp_path / "flat.yaml"
    inst.write_text("format: coalloc-instance\nversion: 1\nzones: [A, B]\nslack: A\n"
                    "lines:\n  - {id: 1, from: A, to: B, capacity: 1}\n"
                    "bids:\n  - {id: d, product: E, zone: A, quantity: 1, price: 1}\n"
                    "  - {id: s, product: E, zone: B, quantity: -1, price: 9}\n")
    assert run("clear", str(inst), "--mode", "balanced", "--out", str(tmp_path / "r"))[0] == 0
    code, out, _ = run("settle", str(inst), str(tmp_path / "r"), "--out", str(tmp_path / "s"))
    assert code == 0 and "tsw,0" in out and "rent,0" in out
    assert _rows(tmp_path / "s" / "cash_flows.csv") == []
    assert {r["surplus"] for r in _rows(tmp_path / "s" / "surplus.csv")} == {"0"}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coalloc", "ptdf", "paper-4zone"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("zone,1,2,3,4")
