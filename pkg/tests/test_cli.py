import csv
import json
from pathlib import Path

import numpy as np
import pytest

from robust_gplm import BetaSearchSpec, Dataset, KernelSpec, fit_beta, make_loss
from robust_gplm.cli import build_parser, main, read_data, read_fit_csv, resolve_options, write_fit_csv
from robust_gplm.families import Binomial

DATA = Path(__file__).parent / "data"


def golden():
    out = {}
    with open(DATA / "golden5_fit.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            out.setdefault(r["field"], []).append(float(r["value"]))
    return out


def write_rows(path, header, rows):
    path.write_text("\n".join([header] + [",".join(str(v) for v in r) for r in rows]) + "\n")
    return path


def test_golden_fit(tmp_path, capsys):
    out = tmp_path / "fit.csv"
    rc = main(["fit", str(DATA / "golden5.csv"), "--loss", "qal", "--h", "0.4", "--refine", "--out", str(out)])
    assert rc == 0
    fit, ref = read_fit_csv(out), golden()
    assert fit.beta_hat[0] == pytest.approx(ref["beta_hat"][0], abs=2e-4)
    np.testing.assert_allclose(fit.t, ref["t"], atol=0)
    np.testing.assert_allclose(fit.eta, ref["eta"], atol=1e-3)
    assert fit.objective == pytest.approx(ref["objective"][0], abs=1e-7)
    assert "x1" in capsys.readouterr().out


def test_fit_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=30)
    t = rng.uniform(size=30)
    y = rng.binomial(10, 1 / (1 + np.exp(-x))).astype(float)
    d = Dataset(y, x, t, Binomial(10))
    fit = fit_beta(d, make_loss("rql", d.family), KernelSpec(h=0.3), BetaSearchSpec(step=0.05), warn=False)
    write_fit_csv(fit, tmp_path / "f.csv")
    back = read_fit_csv(tmp_path / "f.csv")
    np.testing.assert_array_equal(back.beta_hat, fit.beta_hat)
    np.testing.assert_array_equal(back.cov_beta, fit.cov_beta)
    np.testing.assert_array_equal(back.eta, fit.eta)
    np.testing.assert_array_equal(back.t, fit.t)
    assert (back.objective, back.score_norm, back.h) == (fit.objective, fit.score_norm, fit.h)
    assert back.loss == fit.loss and back.diagnostics == fit.diagnostics


def test_empty_file_exit_2(tmp_path, capsys):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert main(["fit", str(p)]) == 2
    assert "no observations" in capsys.readouterr().err


def test_out_of_support_names_row(tmp_path, capsys):
    p = write_rows(tmp_path / "d.csv", "y,x1,t", [(3, 0.1, 0.2), (11, 0.5, 0.4), (2, -0.3, 0.6)])
    assert main(["fit", str(p), "--trials", "10"]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "row 2" in err and "y=11" in err


def test_malformed_rows(tmp_path):
    bad = write_rows(tmp_path / "a.csv", "y,x1,t", [(1, 0.1, 0.2), (0, "abc", 0.4)])
    with pytest.raises(Exception, match="line 3: non-numeric"):
        read_data(bad, Binomial(1))
    short = write_rows(tmp_path / "b.csv", "y,x1,t", [(1, 0.1)])
    with pytest.raises(Exception, match="line 2: expected 3 fields"):
        read_data(short, Binomial(1))
    header = write_rows(tmp_path / "c.csv", "x1,y,t", [(1, 0.1, 0.2)])
    assert main(["fit", str(header)]) == 2


def test_usage_errors_exit_2(tmp_path):
    for argv in (["fit", "x.csv", "--loss", "huber"], ["fit", "x.csv", "--h", "-1"],
                 ["simulate", "--study", "4"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    assert main(["simulate", "--study", "1", "--contamination", "C1", "--reps", "1"]) == 2
    assert main(["simulate", "--study", "3", "--outliers", "2", "--reps", "1"]) == 2


def test_config_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"loss": "rql", "grid-step": 0.1, "seed": 4, "h": 0.3}))
    ns = build_parser().parse_args(["fit", "d.csv", "--config", str(cfg), "--loss", "qal"])
    opts = resolve_options(ns)
    assert opts["loss"] == "qal" and opts["grid_step"] == 0.1 and opts["seed"] == 4 and opts["h"] == 0.3
    monkeypatch.setenv("GPLM_SEED", "17")
    assert resolve_options(build_parser().parse_args(["fit", "d.csv"]))["seed"] == 17
    assert resolve_options(build_parser().parse_args(["fit", "d.csv", "--seed", "2"]))["seed"] == 2
    monkeypatch.setenv("GPLM_SEED", "abc")
    assert main(["fit", str(DATA / "golden5.csv")]) == 2


def test_simulate_study2_layout_and_determinism(tmp_path, capsys):
    outs = []
    for k in range(2):
        out, raw = tmp_path / f"s{k}.csv", tmp_path / f"r{k}.csv"
        rc = main(["simulate", "--study", "2", "--outliers", "3", "--h", "0.1", "--seed", "7",
                   "--out", str(out), "--raw", str(raw)])
        assert rc == 0
        outs.append((out.read_bytes(), raw.read_bytes()))
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(outs[0][0].decode().splitlines()))
    assert [r["estimator"] for r in rows] == ["QAL", "RQL", "MOD"]
    assert all(r["reps"] == "1" and r["contamination"] == "outliers=3" for r in rows)
    beta = {r["estimator"]: float(r["mean_beta"]) for r in rows}
    assert beta["QAL"] < 0.5 and 1.7 <= beta["RQL"] <= 2.3 and 1.7 <= beta["MOD"] <= 2.3
    assert "study 2" in capsys.readouterr().out


def test_simulate_rows_per_bandwidth(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--study", "1", "--reps", "2", "--h", "0.2", "0.3", "--grid-step", "0.1",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert len(rows) == 6
    assert {(r["estimator"], r["h"]) for r in rows} == {(e, h) for e in ("QAL", "RQL", "MOD") for h in ("0.20000000000000001", "0.29999999999999999")}


def test_cv_and_test_commands(tmp_path, capsys):
    rng = np.random.default_rng(5)
    x = rng.normal(size=80)
    t = rng.uniform(size=80)
    y = rng.binomial(10, 1 / (1 + np.exp(-(1.5 * x + np.sin(2 * np.pi * t)))))
    p = write_rows(tmp_path / "d.csv", "y,x1,t", zip(y, x, t))
    cv_out = tmp_path / "cv.csv"
    assert main(["cv", str(p), "--trials", "10", "--h", "0.2", "0.3", "--grid-step", "0.1",
                 "--out", str(cv_out)]) == 0
    rows = list(csv.DictReader(cv_out.read_text().splitlines()))
    assert len(rows) == 2 and sum(int(r["selected"]) for r in rows) == 1
    assert (tmp_path / "cv_fit.csv").exists()
    t_out = tmp_path / "t.csv"
    assert main(["test", str(p), "--trials", "10", "--h", "0.3", "--grid-step", "0.1", "--out", str(t_out)]) == 0
    res = {r["method"]: r for r in csv.DictReader(t_out.read_text().splitlines())}
    assert set(res) == {"Wald", "Lambda"}
    assert float(res["Wald"]["p_value"]) < 0.01 and float(res["Lambda"]["p_value"]) < 0.01
