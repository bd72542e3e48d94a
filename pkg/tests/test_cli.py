import json
import subprocess
import sys

import pytest

from resurgence.cli import RunConfig, UsageError, read_config, run


@pytest.fixture
def cli(tmp_path, capsys):
    cache = tmp_path / "cache"

    def call(*argv):
        code = run(["--cache-dir", str(cache), *argv])
        out, err = capsys.readouterr()
        return code, out, err
    return call


def test_coeffs_cache_hit_is_byte_identical(cli, tmp_path):
    code, first, err1 = cli("coeffs", "--order", "20")
    assert code == 0 and "computed" in err1
    code, second, err2 = cli("coeffs", "--order", "20")
    assert code == 0 and "cache hit" in err2
    assert first == second
    assert first.splitlines()[3] == "3\t-89/2"
    assert (tmp_path / "cache" / "coefficients.txt").exists()


def test_coeffs_to_file(cli, tmp_path):
    out = tmp_path / "eps.txt"
    assert cli("coeffs", "--order", "5", "--out", str(out))[0] == 0
    assert out.read_text().splitlines()[5] == "5\t-88251/8"


def test_borel_branches_conjugate(cli):
    code, up, _ = cli("borel", "--g", "0.02", "--K", "30", "--digits", "40")
    assert code == 0
    _, lo, _ = cli("borel", "--g", "0.02", "--K", "30", "--digits", "40", "--branch", "lower")
    up, lo = json.loads(up), json.loads(lo)
    assert up["re"] == lo["re"]
    assert up["im"].startswith("-") and up["im"][1:] == lo["im"].lstrip("+")
    assert up["digits"] == 40 and up["K"] == 30 and up["g"] == "1/50"


def test_poles(cli):
    code, out, _ = cli("poles", "--K", "20", "--digits", "20")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "re,im,residue_re,residue_im,spurious,digits"
    assert len(lines) == 11
    assert all(ln.endswith(",20") for ln in lines[1:])


def test_fock(cli):
    code, out, _ = cli("fock", "--g", "1/20", "--M", "40", "--digits", "20")
    d = json.loads(out)
    assert code == 0 and d["M"] == 40 and d["digits"] == 20 and d["g"] == "1/20"
    code, out, _ = cli("fock", "--g", "1/20", "--digits", "15")
    assert code == 0 and json.loads(out)["M"] >= 64


def test_scan_with_barrier(cli):
    code, out, _ = cli("scan", "--g", "0.002", "--M-list", "150,300", "--count", "3",
                       "--digits", "20", "--barrier")
    assert code == 0
    table, counts = out.split("\n\n")
    assert table.splitlines()[0] == "M,e0,e1,e2,e3,e4,e5,digits"
    rows = counts.splitlines()
    assert rows[0] == "M,below_barrier,barrier,digits"
    assert [r.split(",")[1] for r in rows[1:]] == ["38", "38"]


def test_delta_fit_round_trip(cli, tmp_path):
    deltas = tmp_path / "deltas.csv"
    args = ["delta", "--order", "40", "--digits", "60", "--g-min", "0.02", "--g-max", "0.05",
            "--points", "4", "--K-list", "0,1", "--no-fock"]
    code, _, err = cli(*args, "--out", str(deltas))
    assert code == 0, err
    text = deltas.read_text()
    assert text.splitlines()[0] == "g,K,delta_I,delta_R,borel_digits,fock_M,fock_digits"
    assert len(text.splitlines()) == 9
    again = tmp_path / "again.csv"
    cli(*args, "--out", str(again))
    assert again.read_text() == text
    code, out, _ = cli("fit", "--input", str(deltas), "--K", "0")
    fit = json.loads(out)
    assert code == 0 and fit["K"] == 0 and fit["points"] == 4 and fit["digits"] == 60
    assert 0.5 < fit["slope"] < 2


def test_extract(cli):
    code, out, err = cli("extract", "--order", "40", "--digits", "60", "--g-min", "0.02",
                         "--g-max", "0.03", "--points", "6", "--K", "2", "--k-max", "4")
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0] == "l,k,value,error,digits"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["1", "3"], ["1", "4"]]


def test_pipeline_small(cli, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("\n".join([
        "# reduced run", "order = 40", "digits = 50", "fock_digits = 20", "target_digits = 10",
        "g_min = 0.02", "g_max = 0.05", "points = 4", "K_list = 0,1,2",
        "extract_g_max = 0.04", "extract_points = 8", "extract_k_max = 4",
        "extract_window_max = 0.04", "pole_digits = 20", "seed = 0"]) + "\n")
    report = tmp_path / "report"
    code, _, err = cli("pipeline", "--config", str(cfg), "--out", str(report))
    assert code == 0, err
    names = {p.name for p in report.iterdir()}
    assert {"poles.csv", "energies.csv", "deltas.csv", "fits.json", "estimates.csv",
            "summary.json"} <= names
    summary = json.loads((report / "summary.json").read_text())
    assert summary["order"] == 40 and summary["digits"] == 50 and len(summary["grid"]) == 4
    fits = json.loads((report / "fits.json").read_text())["fits"]
    assert {(f["K"], f["channel"]) for f in fits} >= {(0, "imaginary"), (0, "real")}


# -- exit codes -------------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [], ["nonsense"], ["coeffs"], ["borel", "--g", "abc"], ["borel", "--g", "1/0"],
    ["borel", "--g", "0.01", "--branch", "middle"],
])
def test_usage_errors_exit_1(cli, argv):
    code, _, err = cli(*argv)
    assert code == 1
    assert "usage error" in err


def test_numerical_errors_exit_2(cli):
    code, _, err = cli("borel", "--g", "0.01", "--K", "20", "--digits", "10")
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "DomainError"
    code, _, err = cli("fock", "--g", "-1", "--M", "10")
    assert code == 2


def test_missing_input_file_exit_2(cli, tmp_path):
    code, _, err = cli("fit", "--input", str(tmp_path / "absent.csv"), "--K", "0")
    assert code == 2 and json.loads(err)["error"] == "FileNotFoundError"


# -- configuration ----------------------------------------------------------------------

def test_read_config(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# comment\norder = 100   # trailing\n\ng_min=0.01\n")
    assert read_config(p) == {"order": "100", "g_min": "0.01"}
    p.write_text("order 100\n")
    with pytest.raises(UsageError, match=":1:"):
        read_config(p)


def test_config_validation():
    cfg = RunConfig.from_mapping({"g_min": "0.01", "theta": "pi/6", "K_list": "0,2"})
    assert cfg.K_list == (0, 2) and cfg.g_min.denominator == 100
    for bad in ({"colour": "red"}, {"order": "many"}, {"g_min": "0.1", "g_max": "0.05"},
                {"g_min": "0.001"}, {"g_max": "1/0"}):
        with pytest.raises(UsageError):
            RunConfig.from_mapping(bad)


def test_desk_config_is_valid():
    from pathlib import Path
    from resurgence.cli import read_config as rc
    cfg = RunConfig.from_mapping(rc(Path(__file__).parent.parent / "desk.cfg"))
    assert cfg.order == 200 and cfg.points == 12


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "resurgence", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
