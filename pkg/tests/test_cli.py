import csv
import subprocess
import sys

import pytest

from twdm_sched.cli import CSV_COLUMNS, main, parse_int_list, parse_pct_list


@pytest.fixture(autouse=True)
def out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("TWDM_SCHED_OUT_DIR", str(tmp_path))
    return tmp_path


def read(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_list_syntax():
    assert parse_int_list("1..5") == [1, 2, 3, 4, 5]
    assert parse_int_list("1..2,9") == [1, 2, 9]
    assert parse_pct_list("10..100:10")[-1] == 1.0 and len(parse_pct_list("10..100:10")) == 10
    assert parse_pct_list("20,50") == [0.2, 0.5]


def test_run_single_scenario(out_dir):
    rc = main(["run", "--channels", "8x25", "--tuning", "0", "--load", "80", "--sla-share", "60",
               "--frames", "100", "--seed", "1", "--out", "r.csv"])
    assert rc == 0
    rows = read(out_dir / "r.csv")
    assert len(rows) == 1 and tuple(rows[0]) == CSV_COLUMNS
    assert rows[0]["seed"] == "1" and rows[0]["load_pct"] == "80" and rows[0]["compliance_pct"] == "100.00"


def test_load_above_capacity_rejected(capsys):
    assert main(["run", "--channels", "1x200", "--load", "120"]) != 0
    assert "load exceeds capacity" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "twdm_sched", "run", "--channels", "1x200", "--load", "120"],
        capture_output=True, text=True,
    )
    assert proc.returncode != 0 and "load exceeds capacity" in proc.stderr


def test_bad_channel_syntax(capsys):
    assert main(["run", "--channels", "eight"]) != 0
    assert "bad channel config" in capsys.readouterr().err


def test_sweep_is_byte_identical_across_jobs(out_dir):
    args = ["run", "--channels", "8x25,1x200", "--tuning", "0,15000", "--load", "80",
            "--sla-share", "70,100", "--frames", "40", "--seeds", "1..2"]
    assert main(args + ["--out", "a.csv"]) == 0
    assert main(args + ["--out", "b.csv", "--jobs", "3"]) == 0
    assert main(args + ["--out", "c.csv", "--summary", "s.csv"]) == 0
    a, b, c = ((out_dir / n).read_bytes() for n in ("a.csv", "b.csv", "c.csv"))
    assert a == b == c
    assert len(read(out_dir / "a.csv")) == 16
    assert len(read(out_dir / "s.csv")) == 8


def test_config_file_with_flag_override(out_dir):
    ini = out_dir / "sweep.ini"
    ini.write_text(
        "[scenario]\nframes = 30\nonus_per_vno = 2\n\n[channels]\nvalues = 4x50\n\n"
        "[tuning]\nvalues = 0, 250\n\n[load]\nvalues = 20\n\n[sla_share]\nvalues = 10..30:10\n\n[seeds]\nvalues = 3\n"
    )
    assert main(["run", "--config", str(ini), "--out", "f.csv"]) == 0
    rows = read(out_dir / "f.csv")
    assert len(rows) == 6 and {r["num_channels"] for r in rows} == {"4"}
    assert main(["run", "--config", str(ini), "--load", "50", "--out", "g.csv"]) == 0
    assert {r["load_pct"] for r in read(out_dir / "g.csv")} == {"50"}
    ini.write_text("[bogus]\nvalues = 1\n")
    assert main(["run", "--config", str(ini)]) != 0


def test_full_sweep_grid_size(monkeypatch, out_dir):
    import twdm_sched.cli as cli

    seen = {}

    def fake_sweep(grid, jobs):
        seen["n"] = len(grid)
        return []

    monkeypatch.setattr(cli, "run_sweep", fake_sweep)
    assert main(["run", "--sweep", "full", "--seeds", "1..5", "--out", "sweep.csv"]) == 0
    assert seen["n"] == 1800


def test_figure(out_dir, capsys):
    assert main(["run", "--channels", "8x25,4x50,1x200", "--tuning", "0", "--load", "20,50,80",
                 "--sla-share", "50,100", "--frames", "20", "--out", "sweep.csv"]) == 0
    assert main(["figure", "--tuning", "0", "--in", str(out_dir / "sweep.csv")]) == 0
    rows = read(out_dir / "figure_tuning_0ns.csv")
    assert len({(r["channel_config"], r["load_pct"]) for r in rows}) == 9
    dat = (out_dir / "figure_tuning_0ns.dat").read_text()
    assert dat.count("# series") == 9
    capsys.readouterr()
    assert main(["figure", "--tuning", "15000", "--in", str(out_dir / "sweep.csv")]) != 0
    assert "no results for tuning time 15000" in capsys.readouterr().err


def test_verify_passes_and_is_deterministic(capsys):
    assert main(["verify", "--instances", "30", "--seed", "7", "--frames", "40"]) == 0
    first = capsys.readouterr().out
    assert main(["verify", "--instances", "30", "--seed", "7", "--frames", "40"]) == 0
    assert capsys.readouterr().out == first
    assert "all checks passed" in first


def test_verify_detects_injected_overlap(capsys):
    assert main(["verify", "--instances", "5", "--frames", "20", "--inject-fault", "overlap"]) != 0
    out = capsys.readouterr().out
    assert "channel exclusivity violated" in out and "FAIL" in out
