import json

import pytest

from fracprony.cli import fmt, main, parse_list, parse_number, parse_refinements, read_csv, resolve
from fracprony.prony import PronySeries


def test_parsers():
    assert parse_number("2/3") == pytest.approx(2 / 3)
    assert parse_number(" 1e-3 ") == 1e-3
    assert parse_list("0.1, 1/2,") == [0.1, 0.5]
    assert parse_refinements("10..160") == [10, 20, 40, 80, 160]
    assert parse_refinements("5,7") == [5, 7]
    with pytest.raises(ValueError):
        parse_refinements("0..10")


def test_fmt():
    assert fmt(0.000123456789) == "1.23457e-04"
    assert fmt(12) == "12"
    assert fmt(None) == ""
    assert fmt(float("nan")) == "nan"


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# study\nalphas = 0.4\ndts = 1e-2  # coarse\nT = 0.5\nseed = 7\n")
    c = resolve(["poly", "--config", str(cfg), "--T", "0.25"])
    assert c.params["alphas"] == "0.4" and c.params["dts"] == "1e-2"
    assert c.params["T"] == 0.25 and c.seed == 7
    assert c.params["terms"] == "3,6,9,12"


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("alpahs = 0.4\n")
    with pytest.raises(SystemExit):
        resolve(["poly", "--config", str(cfg)])


def test_missing_required():
    with pytest.raises(SystemExit):
        resolve(["optimize", "--terms", "3"])


def test_hash_depends_on_params():
    a = resolve(["poly", "--alphas", "0.4"])
    b = resolve(["poly", "--alphas", "0.8"])
    assert a.hash != b.hash and a.hash == resolve(["poly", "--alphas", "0.4"]).hash


def _check_csv(path, sub, columns):
    header, cols, rows = read_csv(path)
    assert header.startswith(f"# fracprony {sub} config_hash=")
    assert cols == columns
    assert rows and all(len(r) == len(columns) for r in rows)
    return rows


def test_optimize_json(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["optimize", "--alpha", "0.5", "--terms", "3", "--out", str(out)]) == 0
    s = PronySeries.load(out)
    assert s.n_terms == 3 and s.alpha == 0.5
    assert "residual_rms=" in capsys.readouterr().err
    d = json.loads(out.read_text())
    assert set(d) == {"alpha", "N", "omega_star", "scale", "beta0", "beta", "tau", "normalized"}


def test_poly_csv_deterministic(tmp_path):
    args = ["poly", "--alphas", "0.4", "--dts", "1e-2", "--terms", "3", "--continuous", "0"]
    main(args + ["--out", str(tmp_path / "a.csv")])
    main(args + ["--out", str(tmp_path / "b.csv")])
    rows = _check_csv(tmp_path / "a.csv", "poly", ["alpha", "method", "terms", "dt", "error", "seconds", "ops"])
    assert {r[1] for r in rows} == {"mp", "mp-lagged", "gl", "prony"}
    strip = lambda p: [r[:5] for r in read_csv(p)[2]]
    assert strip(tmp_path / "a.csv") == strip(tmp_path / "b.csv")


def test_poly_with_series_file(tmp_path, table):
    p = tmp_path / "s.json"
    table.lookup(0.4, 6).save(p)
    assert main(["poly", "--alphas", "0.4", "--dts", "1e-2", "--terms", "6", "--methods", "prony",
                 "--continuous", "0", "--params", str(p), "--out", str(tmp_path / "o.csv")]) == 0
    with pytest.raises(ValueError):
        main(["poly", "--alphas", "0.4", "--dts", "1e-2", "--terms", "3", "--methods", "prony",
              "--params", str(p), "--out", str(tmp_path / "o.csv")])


def test_fde_csv(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["fde", "--alpha", "1/2", "--nx", "10,20", "--nt", "50", "--terms", "6",
                 "--norm", "l2", "--out", str(out)]) == 0
    rows = _check_csv(out, "fde", ["alpha", "method", "terms", "nx", "nt", "error", "rate"])
    assert [r[3] for r in rows] == ["10", "20"] and rows[-1][6] == ""


def test_fde_axis_validation(tmp_path):
    with pytest.raises(SystemExit):
        main(["fde", "--nx", "10..20", "--nt", "10..20"])
    with pytest.raises(SystemExit):
        main(["fde", "--nx", "10", "--nt", "10"])


def test_long_gate(tmp_path):
    with pytest.raises(SystemExit):
        main(["fde", "--method", "gao", "--nx", "10..160", "--nt", "20000", "--out", str(tmp_path / "g.csv")])


def test_liver_csv(tmp_path):
    out = tmp_path / "l.csv"
    assert main(["liver", "--dt", "1e-2", "--out", str(out)]) == 0
    rows = _check_csv(out, "liver", ["t", "sigma13", "sigma23", "torque", "normal_force"])
    assert len(rows) == 201


def test_stability_cli(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["stability", "--trials", "3", "--stiff-probes", "1", "--out", str(out)]) == 0
    assert "violations=0" in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# fracprony stability config_hash=")
    assert lines[1] == "trial,step,lhs,rhs,margin,violated"


def test_stability_nonzero_exit_on_violation(tmp_path, monkeypatch):
    import fracprony.stability as stab

    real = stab.check_lemma3

    def broken(ledger, *a, **k):
        rep = real(ledger, *a, **k)
        rep.holds[-1] = False
        rep.violations = 1
        return rep
    monkeypatch.setattr(stab, "check_lemma3", broken)
    assert main(["stability", "--trials", "1", "--stiff-probes", "0"]) == 1


def test_bench_liver(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--mode", "liver-timing", "--dts", "1e-2", "--terms", "3", "--out", str(out)]) == 0
    _check_csv(out, "bench", ["engine", "terms", "dt", "seconds", "ops"])


def test_bench_threshold(tmp_path):
    # at a coarse step the history methods are not yet slower by the required factor
    assert main(["bench", "--dts", "1e-1", "--terms", "3", "--min-ratio", "1e9",
                 "--out", str(tmp_path / "t.csv")]) == 1


def test_table_cli(tmp_path):
    out = tmp_path / "t.json"
    assert main(["table", "--alpha-min", "0.3", "--alpha-max", "0.4", "--alpha-step", "0.1",
                 "--terms-min", "3", "--terms-max", "4", "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["header"]["alpha_grid"] == [0.3, 0.4] and len(d["series"]) == 4


def test_console_entry_point():
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "fracprony.cli", "poly", "--alphas", "0.4", "--dts", "1e-1",
                        "--terms", "3", "--continuous", "no"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("# fracprony poly")
