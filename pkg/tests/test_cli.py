import json
import subprocess
import sys

from hypothesis import given, settings
from hypothesis import strategies as st

from neqm_well import selfcheck
from neqm_well.basis import make_Qe
from neqm_well.cli import (
    EXIT_DOMAIN,
    EXIT_OK,
    EXIT_SELFCHECK,
    EXIT_USAGE,
    Table,
    format_number,
    main,
    parse_csv,
    spectrum_table,
)
from neqm_well.core import Params
from neqm_well.qm_oracle import qm_spectrum
from neqm_well.solver import ScanConfig, spectrum


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_format_number():
    assert format_number(0.5153333) == "5.15333e-1"
    assert format_number(24.482) == "2.44820e1"
    assert format_number(-1.209e-16) == "-1.20900e-16"
    assert format_number(None) == ""
    assert format_number(3) == "3"
    assert format_number(0.1, full_precision=True) == "0.1"


def test_qm_command(capsys):
    code, out, _ = run(capsys, "qm", "--v0", "0")
    assert code == EXIT_OK
    assert out == "v0,state_index,parity,k,kappa,energy\n"
    code, out, _ = run(capsys, "qm", "--v0", "0.01")
    rows = parse_csv(out).rows
    assert len(rows) == 1 and rows[0][2] == "even"


def test_usage_errors(capsys):
    assert run(capsys, "qm")[0] == EXIT_USAGE
    assert run(capsys, "qm", "--v0", "-1")[0] == EXIT_USAGE
    assert run(capsys, "spectrum", "--beta", "0", "--v0", "1", "--L", "1")[0] == EXIT_USAGE
    assert run(capsys, "spectrum", "--beta", "1", "--v0", "1", "--L", "1", "--precision-bits", "8")[0] == EXIT_USAGE
    assert run(capsys, "sweep-beta", "--v0", "1", "--beta-min", "2", "--beta-max", "1", "--steps", "3",
               "--L", "0")[0] == EXIT_USAGE
    code, _, err = run(capsys, "converge", "--beta", "1", "--v0", "10", "--L-min", "3", "--L-max", "1")
    assert code == EXIT_USAGE and "--L-min" in err
    assert run(capsys, "nonsense")[0] == EXIT_USAGE


def test_domain_error_exit(capsys):
    code, out, err = run(capsys, "wavefunction", "--beta", "1", "--v0", "0.5", "--L", "0", "--state", "3")
    assert code == EXIT_DOMAIN and out == "" and "bound state" in err


def test_spectrum_matches_library(capsys):
    code, out, _ = run(capsys, "spectrum", "--beta", "0.71", "--v0", "200", "--L", "1")
    assert code == EXIT_OK
    lib = spectrum(Params(0.71, 200.0), ScanConfig(L=1))
    assert out == spectrum_table(lib).emit_csv()
    code, full, _ = run(capsys, "spectrum", "--beta", "0.71", "--v0", "200", "--L", "1", "--full-precision")
    energies = [r[7] for r in parse_csv(full).rows]
    assert energies == lib.energies


def test_json_format(capsys):
    code, out, _ = run(capsys, "qm", "--v0", "50", "--format", "json")
    data = json.loads(out)
    assert data["table"]["columns"][0] == "v0"
    assert len(data["table"]["rows"]) == len(qm_spectrum(50.0))


def test_out_files_and_manifest(tmp_path, capsys):
    out = tmp_path / "wf.csv"
    code, stdout, _ = run(capsys, "wavefunction", "--beta", "0.71", "--v0", "200", "--L", "1",
                          "--grid", "11", "--out", str(out))
    assert code == EXIT_OK and stdout == ""
    psi = parse_csv(out.read_text())
    assert psi.columns == ["x", "psi"] and len(psi.rows) == 11
    coeffs = parse_csv((tmp_path / "wf.coefficients.csv").read_text())
    assert [r[0] for r in coeffs.rows] == ["A1", "A2", "A3", "B1", "B2", "B3"]
    res = parse_csv((tmp_path / "wf.residuals.csv").read_text())
    assert [r[0] for r in res.rows] == list(range(7))
    man = json.loads((tmp_path / "wf.csv.manifest.json").read_text())
    assert man["command"] == "wavefunction" and man["L"] == 1 and man["mantissa_bits"] == 256
    assert man["files"] == ["wf.csv", "wf.coefficients.csv", "wf.residuals.csv"]
    assert set(man) >= {"params", "samples", "version", "wall_time_s"}
    assert b"\r\n" not in out.read_bytes()


def test_output_is_deterministic(tmp_path, capsys):
    files = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        run(capsys, "spectrum", "--beta", "1.01", "--v0", "50", "--L", "1", "--out", str(path))
        files.append(path.read_bytes())
    assert files[0] == files[1]


def test_converge_blank_cells(capsys):
    code, out, _ = run(capsys, "converge", "--beta", "5.01", "--v0", "5000", "--L-max", "1", "--states", "0,1")
    assert code == EXIT_OK
    cells = {(r[0], r[2]): r[3] for r in parse_csv(out).rows}
    assert cells[(0, 1)] is None
    assert cells[(1, 1)] is not None
    assert ",," not in out.splitlines()[0]


def test_sweep_includes_qm_rows(capsys):
    code, out, _ = run(capsys, "sweep-beta", "--v0", "10", "--beta-min", "0.5", "--beta-max", "1",
                       "--steps", "2", "--L", "0")
    rows = parse_csv(out).rows
    qm = [r for r in rows if r[0] == 0.0]
    assert len(qm) == 3 and all(r[4] == 10.0 for r in qm)
    assert all(r[3] < r[4] for r in rows)


def test_selfcheck_pass_and_fail(capsys, monkeypatch):
    code, out, err = run(capsys, "selfcheck", "--check", "reflection")
    assert code == EXIT_OK and "[PASS] reflection" in err

    orig = selfcheck.check_reflection
    monkeypatch.setitem(selfcheck.CHECKS, "reflection", lambda bits: orig(bits, make_qo=make_Qe))
    code, out, err = run(capsys, "selfcheck", "--check", "reflection")
    assert code == EXIT_SELFCHECK and "[FAIL] reflection" in err


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "neqm_well", "qm", "--v0", "1"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("v0,")


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=5))
@settings(max_examples=100)
def test_csv_round_trip(values):
    t = Table(["x", "psi"], [(v, -v) for v in values])
    assert parse_csv(t.emit_csv(full_precision=True)).rows == t.rows
    once = parse_csv(t.emit_csv())
    assert once.emit_csv() == t.emit_csv()
