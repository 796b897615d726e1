import io
import subprocess
import sys

import numpy as np
import pytest

from dgint import charts
from dgint.cli import RunConfig, run
from dgint.mc import kuranishi_inverse
from dgint.polyform import face, to_table
from dgint.sampling import random_closed_form


def call(*argv):
    out = io.StringIO()
    status = run(list(argv), out)
    return status, out.getvalue()


def values(text):
    out = {}
    for line in text.splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out.setdefault(k, v)
    return out


def csv_block(text, name):
    lines = text.splitlines()
    start = lines.index(f"[csv {name}]")
    end = lines.index("[/csv]", start)
    return lines[start + 1], lines[start + 2 : end]


def test_check_q2_pass_and_fail():
    status, text = call("check-q2", "so3")
    assert status == 0 and "Q^2 = 0: PASS" in text
    status, text = call("check-q2", "broken_jacobi")
    assert status == 1 and "Q^2 = 0: FAIL" in text
    assert values(text)["residual.e2"] == "-e1*e2*e3"


def test_check_q2_accepts_paths(tmp_path):
    p = tmp_path / "mine.dg"
    p.write_text(charts.chart_text("heisenberg"))
    status, text = call("check-q2", str(p))
    assert status == 0


def test_mc_solve_writes_table(tmp_path):
    out = tmp_path / "A.txt"
    status, text = call("mc-solve", "so3", "--n", "2", "-o", str(out))
    v = values(text)
    assert status == 0
    assert float(v["mc_residual"]) < 1e-10 and float(v["kuranishi_roundtrip"]) < 1e-10
    assert out.read_text().startswith("# polyform n=2 D=8")


@pytest.mark.parametrize("mode", ["big", "ks"])
def test_horn_fill_from_tables(tmp_path, mode):
    dg = charts.load("so3")
    A = kuranishi_inverse(dg, random_closed_form(dg, 2, 8, np.random.default_rng(0))).form
    paths = []
    for j in range(3):
        if j == 1:
            paths.append("-")
            continue
        p = tmp_path / f"face{j}.txt"
        p.write_text(to_table(face(A, j)))
        paths.append(str(p))
    status, text = call("horn-fill", "so3", "--faces", ",".join(paths), "--k", "1", "--mode", mode)
    assert status == 0, text
    v = values(text)
    assert float(v["mc_residual"]) < 1e-10
    if mode == "big":
        assert float(v["restriction_error"]) < 1e-10


def test_multiply_heisenberg():
    status, text = call("multiply", "heisenberg", "--a", "0.1,0,0", "--b", "0,0.1,0")
    v = values(text)
    assert status == 0
    assert [float(t) for t in v["product"].split(";")] == pytest.approx([0.1, 0.1, 0.005], abs=1e-12)
    assert float(v["deviation"]) < 1e-12


def test_groupoid_table_csv():
    status, text = call("groupoid-table", "so3", "--grid", "3", "--radius", "0.1")
    assert status == 0
    header, rows = csv_block(text, "products")
    assert header == "a,b,product,residual,oracle_product,deviation"
    assert len(rows) == 9
    assert float(values(text)["max_deviation"]) < 1e-3


def test_retract_report():
    status, text = call("retract", "heisenberg", "--n", "2")
    v = values(text)
    assert status == 0
    assert v["monotone"] == "true"
    assert float(v["final_gauge_defect"]) < 1e-8
    assert float(v["flow_time"]) <= 20.0 + 1e-12


def test_symplectic_report():
    status, text = call("symplectic-report", "poisson_const", "--samples", "2")
    v = values(text)
    assert status == 0
    assert v["omega_s.nondegenerate"] == "true"
    assert v["grassmann.kernel_law"] == "true"
    assert float(v["delta_omega_s"]) < 1e-10


def test_error_blocks():
    status, text = call("check-q2", "no_such_chart")
    assert status == 2
    assert "[error]" in text and "type = " in text
    status, text = call("mc-solve", "so3", "--D", "1")
    assert status == 2 and "degree cap" in text


def test_parse_error_block(tmp_path):
    p = tmp_path / "bad.dg"
    p.write_text("[coords]\na 1\n[Q]\na = a*\n")
    status, text = call("check-q2", str(p))
    v = values(text)
    assert status == 2
    assert v["type"] == "ChartParseError" and v["line"] == "4" and v["col"] == "7"


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig("x", picard_tol=0.0)
    with pytest.raises(ValueError):
        RunConfig("x", steps=0)


def test_selftest_is_deterministic():
    cmd = [sys.executable, "-m", "dgint.cli", "selftest", "--seed", "0"]
    a = subprocess.run(cmd, capture_output=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, check=True).stdout
    assert a == b
    assert b.decode().rstrip().endswith("selftest = PASS")
