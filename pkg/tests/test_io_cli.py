import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from wvcal import cli, io
from wvcal.errors import DomainError, InputFormatError
from wvcal.model import CompositeModel, ScaleGrid, model_wv
from wvcal.units import table_i_model
from wvcal.wv import Signal, WvEstimate

FIX = Path(__file__).parent / "fixtures"


def run(*argv):
    return cli.run_cli([str(a) for a in argv])


# -- io ----------------------------------------------------------------------


def test_three_line_file(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("0.5\n-1\n2e-3\n")
    sig = io.read_signal(p, 100)
    assert sig.T == 3
    assert sig.sample_rate_hz == 100.0
    assert list(sig.values) == [0.5, -1.0, 0.002]


def test_header_skipped_and_bad_line_cited(tmp_path):
    assert list(io.parse_signal_values("value\n1\n2\n")) == [1.0, 2.0]
    with pytest.raises(InputFormatError, match="line 2"):
        io.parse_signal_values("1\nabc\n3\n")
    with pytest.raises(InputFormatError, match="line 1"):
        io.parse_signal_values("1,2\n")
    with pytest.raises(InputFormatError, match="line 3"):
        io.parse_signal_values("1\n2\nnan\n")
    with pytest.raises(InputFormatError):
        io.parse_signal_values("\n\n")


def test_missing_sample_rate(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("1\n2\n")
    with pytest.raises(DomainError, match="--fs"):
        io.read_signal(p)
    io.write_json(io.sidecar_path(p), {"sample_rate_hz": 8})
    assert io.read_signal(p).sample_rate_hz == 8.0
    assert io.read_signal(p, 4).sample_rate_hz == 4.0


def test_signal_round_trip(tmp_path, rng):
    sig = Signal(rng.standard_normal(50) * 1e-7, 125.0)
    p = tmp_path / "x.csv"
    io.write_signal(p, sig, {"seed": 3})
    back = io.read_signal(p)
    assert np.array_equal(back.values, sig.values)
    assert back.sample_rate_hz == 125.0
    assert io.read_json(tmp_path / "x.json")["seed"] == 3


def test_wv_round_trip(tmp_path, rng):
    grid = ScaleGrid((1, 2, 3), 64)
    cov = np.diag(rng.random(3))
    est = WvEstimate(grid, rng.random(3), "wv", cov_hat=cov, sample_rate_hz=10.0)
    p = tmp_path / "w.csv"
    io.write_wv(p, est)
    back = io.read_wv(p)
    assert back.grid == grid
    assert np.array_equal(back.nu_hat, est.nu_hat)
    assert np.array_equal(back.cov_hat, cov)
    assert back.convention is est.convention
    assert back.sample_rate_hz == 10.0


def test_wv_without_sidecar(tmp_path):
    p = tmp_path / "w.csv"
    p.write_text((FIX / "tiny_wv_golden.csv").read_text())
    est = io.read_wv(p)
    assert est.grid.T == 8
    assert est.sample_rate_hz == 2.0
    assert est.nu_hat[0] == 2.1


def test_malformed_json(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(InputFormatError, match="line 1"):
        io.read_json(p)


# -- cli ---------------------------------------------------------------------


def test_wv_golden(tmp_path):
    # level 1: gaps 1.5, 2, 1.5, 2.5, 2.5 -> mean of half-squares 2.1
    # level 2: single gap (25 - 11) / 4 = 3.5 -> 6.125
    out = tmp_path / "w.csv"
    assert run("wv", "--in", FIX / "tiny.csv", "--levels", "1-2", "--cov", "none", "--out", out) == 0
    assert out.read_bytes() == (FIX / "tiny_wv_golden.csv").read_bytes()
    side = json.loads((tmp_path / "w.json").read_text())
    assert side["sample_rate_hz"] == 2.0 and side["T"] == 8 and side["convention"] == "av"


def test_wv_level_too_deep(tmp_path, capsys):
    p = tmp_path / "s.csv"
    p.write_text("1\n2\n3\n4\n")
    assert run("wv", "--in", p, "--fs", 1, "--levels", 3, "--out", tmp_path / "w.csv") == 3
    assert "3" in capsys.readouterr().err


def test_exit_codes(tmp_path):
    assert run() == 1
    assert run("wv") == 1
    assert run("fit", "--in", "x.csv", "--wv", "y.csv", "--model-template", "t", "--out", "o") == 1
    assert run("wv", "--in", tmp_path / "missing.csv", "--fs", 1, "--out", tmp_path / "w.csv") == 4
    bad = tmp_path / "b.csv"
    bad.write_text("1\nabc\n")
    assert run("wv", "--in", bad, "--fs", 1, "--out", tmp_path / "w.csv") == 4
    assert run("wv", "--in", FIX / "tiny.csv", "--fs", -1, "--out", tmp_path / "w.csv") == 1


def _exact_wv(tmp_path, model, T=2**16):
    grid = ScaleGrid.default(T)
    est = WvEstimate(grid, model_wv(model, "av", grid), "av", sample_rate_hz=250.0)
    p = tmp_path / "exact.csv"
    io.write_wv(p, est)
    return p


def test_fit_noiseless_recovers_truth(tmp_path):
    truth = table_i_model("gyro")
    wv = _exact_wv(tmp_path, truth)
    out = tmp_path / "fit.json"
    plot = tmp_path / "plot.csv"
    rc = run("fit", "--wv", wv, "--model-template", FIX / "gyro_template.json", "--out", out, "--plot-data", plot)
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["converged"] is True
    assert rep["theta_hat"]["WN"]["sigma2"] == pytest.approx(truth["WN"], rel=1e-10)
    assert rep["theta_hat"]["RW"]["gamma2"] == pytest.approx(truth["RW"], rel=1e-8)
    lines = plot.read_text().splitlines()
    assert lines[0] == ",".join(io.PLOT_COLUMNS)
    assert len(lines) == 1 + len(rep["scales"])


def test_fit_not_converged_exit_2(tmp_path, monkeypatch):
    real = cli.FITTERS["gmwm"]
    monkeypatch.setitem(cli.FITTERS, "gmwm", lambda est, active: replace(real(est, active), converged=False))
    wv = _exact_wv(tmp_path, table_i_model("gyro"))
    out = tmp_path / "fit.json"
    assert run("fit", "--wv", wv, "--model-template", FIX / "gyro_template.json", "--out", out) == 2
    assert json.loads(out.read_text())["converged"] is False


def test_fit_avsm_failure_exit_3(tmp_path):
    # random walk far below white noise at every level: no slope to read
    wv = _exact_wv(tmp_path, CompositeModel({"WN": 1.0, "RW": 1e-14}), T=2**12)
    out = tmp_path / "fit.json"
    rc = run("fit", "--wv", wv, "--model-template", FIX / "gyro_template.json", "--method", "avsm", "--out", out)
    assert rc == 3
    rep = json.loads(out.read_text())
    assert "RW" in rep["failures"]
    assert rep["theta_hat"]["WN"]["sigma2"] == pytest.approx(1.0, rel=1e-2)


def test_simulate_wv_fit_pipeline(tmp_path):
    sig = tmp_path / "sig.csv"
    assert run("simulate", "--model", FIX / "gyro_physical.json", "--T", 2**12, "--seed", 5, "--out", sig) == 0
    side = json.loads((tmp_path / "sig.json").read_text())
    assert side["sample_rate_hz"] == 250.0 and side["T"] == 2**12 and side["seed"] == 5
    first = sig.read_bytes()
    assert run("simulate", "--model", FIX / "gyro_physical.json", "--T", 2**12, "--seed", 5, "--out", sig) == 0
    assert sig.read_bytes() == first
    wv = tmp_path / "wv.csv"
    assert run("wv", "--in", sig, "--out", wv) == 0
    est = io.read_wv(wv)
    assert est.cov_hat is not None and est.ci_lo is not None
    out = tmp_path / "fit.json"
    assert run("fit", "--wv", wv, "--model-template", FIX / "gyro_template.json", "--out", out) == 0
    assert "WN" in json.loads(out.read_text())["theta_hat"]


def test_simulate_components(tmp_path):
    sig = tmp_path / "sig.csv"
    assert run("simulate", "--model", FIX / "gyro_physical.json", "--T", 64, "--components", "--out", sig) == 0
    total = io.read_signal(sig).values
    parts = io.read_signal(tmp_path / "sig.WN.csv").values + io.read_signal(tmp_path / "sig.RW.csv").values
    np.testing.assert_allclose(total, parts, rtol=1e-12, atol=1e-15)


def test_convert_units(tmp_path, capsys):
    # 0.157 deg/sqrt(hr) = 0.157/60 deg/s/sqrt(Hz); times sqrt(250 Hz)
    assert run("convert-units", "--process", "WN", "--value", 0.157, "--unit", "deg/sqrt(hr)", "--fs", 250) == 0
    value = float(capsys.readouterr().out)
    assert value == pytest.approx(0.157 / 60 * 250**0.5, rel=1e-14)
    out = tmp_path / "m.json"
    assert run("convert-units", "--model", FIX / "gyro_physical.json", "--out", out) == 0
    model, conv = io.read_model(out)
    assert model["WN"] == pytest.approx(table_i_model("gyro")["WN"], rel=1e-12)
    assert run("convert-units", "--process", "WN") == 1
    assert run("convert-units", "--process", "WN", "--value", 1, "--unit", "furlong", "--fs", 1) == 1


def test_mc_subcommand(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(
        json.dumps(
            {
                "truth": {"processes": {"WN": {"sigma2": 1.0}, "RW": {"gamma2": 1e-6}}},
                "T": 2**12,
                "reps": 2,
                "seed": 1,
                "methods": ["gmwm", "armav"],
            }
        )
    )
    out = tmp_path / "mc"
    assert run("mc", "--spec", spec, "--out", out) == 0
    for name in ("boxplot.csv", "rmse.csv", "summary.json", "ranking.json"):
        assert (out / name).exists()
    ranking = json.loads((out / "ranking.json").read_text())
    assert set(ranking) == {"sigma", "gamma"}
