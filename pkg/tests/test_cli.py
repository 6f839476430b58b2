import csv
import json

import pytest

from edgesched.cli import main

from conftest import HOMOGENEOUS, TABLE2


def test_run_zero_rounds_ok(tmp_path, capsys):
    rc = main(["run", TABLE2, "--rounds", "0", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "trace.jsonl").read_text() == ""
    assert "rounds=0" in capsys.readouterr().out


def test_run_bad_path_exits_nonzero(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "nope.json"), "--rounds", "1", "--out", str(tmp_path)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_run_smoke_produces_finite_summary(tmp_path, capsys):
    rc = main(["run", TABLE2, "--policy", "lyapunov", "--rounds", "3", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "avg_tau=" in out and "nan" not in out and "inf" not in out
    lines = (tmp_path / "trace.jsonl").read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[0])
    assert rec["t"] == 1
    rows = (tmp_path / "summary.csv").read_text().splitlines()
    assert rows[0] == "metric,value"
    assert any(r.startswith("avg_tau_s,") for r in rows)


def test_run_byte_identical(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", TABLE2, "--rounds", "2", "--out", str(out1)]) == 0
    assert main(["run", TABLE2, "--rounds", "2", "--out", str(out2)]) == 0
    assert (out1 / "trace.jsonl").read_bytes() == (out2 / "trace.jsonl").read_bytes()
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_compare_duplicate_policy_rejected(tmp_path, capsys):
    rc = main(["compare", TABLE2, "--policies", "loss,loss", "--rounds", "1", "--out", str(tmp_path)])
    assert rc == 2
    assert "duplicate" in capsys.readouterr().err


def test_compare_unknown_policy_rejected(tmp_path):
    rc = main(["compare", TABLE2, "--policies", "lyapunov,bogus", "--rounds", "1", "--out", str(tmp_path)])
    assert rc == 2


def test_compare_rows_ordered_and_complete(tmp_path):
    rc = main(
        [
            "compare",
            TABLE2,
            "--policies",
            "lyapunov,loss",
            "--rounds",
            "3",
            "--seeds",
            "1,2",
            "--out",
            str(tmp_path),
        ]
    )
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "compare.csv").open()))
    assert len(rows) == 2 * 2 * 3
    keys = [(r["policy"], int(r["seed"]), int(r["round"])) for r in rows]
    assert keys == sorted(keys, key=lambda x: (["lyapunov", "loss"].index(x[0]), x[1], x[2]))
    for r in rows:
        assert float(r["tau_cum_s"]) >= float(r["tau_s"]) - 1e-12


def test_compare_single_policy_matches_run(tmp_path):
    assert main(["run", TABLE2, "--rounds", "2", "--seed", "3", "--out", str(tmp_path / "r")]) == 0
    assert (
        main(
            [
                "compare",
                TABLE2,
                "--policies",
                "lyapunov",
                "--rounds",
                "2",
                "--seeds",
                "3",
                "--out",
                str(tmp_path / "c"),
            ]
        )
        == 0
    )
    trace = [json.loads(l) for l in (tmp_path / "r" / "trace.jsonl").read_text().splitlines()]
    rows = list(csv.DictReader((tmp_path / "c" / "compare.csv").open()))
    for rec, row in zip(trace, rows):
        assert float(row["tau_s"]) == pytest.approx(rec["tau_round_s"], rel=1e-12)


def test_sweep_malformed_grid(tmp_path, capsys):
    assert main(["sweep", TABLE2, "--grid", "Q=1..3", "--out", str(tmp_path)]) == 2
    assert main(["sweep", TABLE2, "--grid", "S=3..1,m=1..2", "--out", str(tmp_path)]) == 2
    assert main(["sweep", TABLE2, "--grid", "S=1..2", "--out", str(tmp_path)]) == 2
    assert main(["sweep", TABLE2, "--grid", "", "--out", str(tmp_path)]) == 2


def test_sweep_one_by_one_grid(tmp_path):
    rc = main(["sweep", HOMOGENEOUS, "--grid", "S=1..1,m=1..1", "--out", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "S\\m,1"
    assert len(rows) == 2
    assert float(rows[1].split(",")[1]) > 0


def test_sweep_interior_argmin_on_homogeneous(tmp_path):
    rc = main(["sweep", HOMOGENEOUS, "--grid", "S=1..6,m=1..16", "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.reader((tmp_path / "sweep.csv").open()))
    m_vals = [int(x) for x in rows[0][1:]]
    best = None
    for r in rows[1:]:
        s = int(r[0])
        for j, cell in enumerate(r[1:]):
            if cell:
                v = float(cell)
                if best is None or v < best[0]:
                    best = (v, s, m_vals[j])
    _, s_star, m_star = best
    assert s_star not in (1, 6)
    assert m_star not in (1, 64)


def test_sweep_control_factor_mode(tmp_path):
    rc = main(["sweep", TABLE2, "--grid", "V=0.01,10,100", "--rounds", "3", "--out", str(tmp_path)])
    assert rc == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert [float(r["V"]) for r in rows] == [0.01, 10.0, 100.0]
    taus = [float(r["avg_tau_s"]) for r in rows]
    assert taus[0] >= taus[1] - 1e-12 >= taus[2] - 2e-12


def test_out_dir_env_default(tmp_path, monkeypatch):
    monkeypatch.setenv("EDGESCHED_OUT_DIR", str(tmp_path / "envout"))
    from edgesched.cli import build_parser

    args = build_parser().parse_args(["run", TABLE2])
    assert args.out == str(tmp_path / "envout")
