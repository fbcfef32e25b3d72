"""Configuration, orchestration, artifact and CLI tests."""

import json
import math

import pytest

from qbnf.cli import main
from qbnf.lattice import LatticeEntry, ResonanceLattice, Window
from qbnf.compare import MatchedPair, MatchReport
from qbnf.scenario import (
    ConfigError,
    emit_plot_data,
    load_config,
    run_scenario,
)


GOOD = {
    "schema_version": 1,
    "model": {
        "kind": "saddle",
        "energy0": 0.0,
        "lambda_unstable": 1.0,
        "lambda_stable": math.sqrt(2.0),
    },
    "compute": {
        "order": 2,
        "h_values": [0.1],
        "window": {"half_width": 0.4, "depth": 0.4},
        "basis": {"levels1": 10, "levels2": 10},
        "stability_check": False,
    },
    "output": {"directory": "unused", "plot_data": True},
}


def test_config_roundtrip_identity():
    cfg = load_config(GOOD)
    canon = cfg.canonical()
    cfg2 = load_config(canon)
    assert cfg2.canonical() == canon


def test_config_rejects_bad_schema():
    bad = dict(GOOD)
    bad = json.loads(json.dumps(bad))
    bad["schema_version"] = 99
    with pytest.raises(ConfigError, match="schema_version"):
        load_config(bad)


def test_config_rejects_nonpositive_rate():
    bad = json.loads(json.dumps(GOOD))
    bad["model"]["lambda_stable"] = -2.0
    with pytest.raises(ConfigError, match="positive"):
        load_config(bad)


def test_config_rejects_bad_rate_series():
    bad = {
        "schema_version": 1,
        "model": {
            "kind": "cylinder",
            "energy_coeffs": [0.0, 1.0],
            "rate_coeffs": [0.0],
        },
        "compute": {
            "order": 2,
            "h_values": [0.1],
            "window": {"half_width": 0.2, "depth": 0.2},
        },
    }
    with pytest.raises(ConfigError, match="rate"):
        load_config(bad)


def test_config_rejects_ascending_h():
    bad = json.loads(json.dumps(GOOD))
    bad["compute"]["h_values"] = [0.05, 0.1]
    with pytest.raises(ConfigError, match="descending"):
        load_config(bad)


def test_run_scenario_artifacts(tmp_path):
    cfg = load_config(GOOD)
    report = run_scenario(cfg, tmp_path)
    assert report["status"] == "ok"
    for name in (
        "scenario_echo.json",
        "normal_form.json",
        "lattice_h0p1.csv",
        "spectrum_h0p1.csv",
        "match_h0p1.json",
        "plot_h0p1.csv",
        "run_report.json",
    ):
        assert (tmp_path / name).exists(), name
    lat = (tmp_path / "lattice_h0p1.csv").read_text().splitlines()
    assert lat[0] == "k,l,re_z,im_z"
    k, l, re, im = lat[1].split(",")
    assert (k, l) == ("0", "0")
    assert abs(float(re) - math.sqrt(2.0) * 0.05) < 1e-15
    assert abs(float(im) + 0.05) < 1e-15


def test_run_scenario_bit_identical(tmp_path):
    cfg = load_config(GOOD)
    run_scenario(cfg, tmp_path / "a")
    run_scenario(cfg, tmp_path / "b")
    for name in ("lattice_h0p1.csv", "spectrum_h0p1.csv", "normal_form.json",
                 "match_h0p1.csv", "plot_h0p1.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (
            tmp_path / "b" / name
        ).read_bytes(), name


def test_bundled_quadratic_saddle(tmp_path):
    cfg = load_config("quadratic_saddle")
    report = run_scenario(cfg, tmp_path)
    assert report["status"] == "ok"
    rows = (tmp_path / "lattice_h0p05.csv").read_text().splitlines()[1:]
    first = rows[0].split(",")
    h = 0.05
    assert abs(float(first[2]) - math.sqrt(2.0) * h / 2) < 1e-14
    assert abs(float(first[3]) + h / 2) < 1e-14


def test_bundled_cylinder_unperturbed(tmp_path):
    cfg = load_config("cylinder_unperturbed")
    report = run_scenario(cfg, tmp_path)
    assert report["status"] == "ok"
    # closed form: z = f(tau_k) - i mu(tau_k) (l + 1/2) h
    rows = (tmp_path / "lattice_h0p05.csv").read_text().splitlines()[1:]
    f = lambda t: t + 0.3 * t * t
    mu = lambda t: 1.0 + 0.2 * t
    h, S = 0.05, 0.4
    for row in rows:
        k, l, re, im = row.split(",")
        tau = h * int(k) - S / (2 * math.pi)
        assert abs(float(re) - f(tau)) < 1e-14
        assert abs(float(im) + mu(tau) * (int(l) + 0.5) * h) < 1e-14
    # and the direct spectrum agrees to rounding
    match = json.loads((tmp_path / "match_h0p05.json").read_text())
    assert match["num_matched"] == len(rows)
    assert match["max_err"] < 1e-10


def test_run_scenario_incomplete_report(tmp_path):
    from qbnf.scenario import ScenarioNumericError

    cfg = json.loads(json.dumps(GOOD))
    cfg["compute"]["basis"] = {"levels1": 200, "levels2": 200}
    with pytest.raises(ScenarioNumericError):
        run_scenario(load_config(cfg), tmp_path)
    report = json.loads((tmp_path / "run_report.json").read_text())
    assert report["status"] == "incomplete"
    assert report["errors"] and report["errors"][0]["stage"] == "numeric"
    # artifacts produced before the failure are listed
    assert "normal_form.json" in report["artifacts"]


def test_run_scenario_nonorientable(tmp_path):
    cfg = load_config("nonorientable_halfmode")
    report = run_scenario(cfg, tmp_path)
    assert report["status"] == "ok"
    rows = (tmp_path / "lattice_h0p05.csv").read_text().splitlines()[1:]
    # half-shift rule: Re z = h (k + l/2) for the unperturbed-tau profile
    for row in rows:
        k, l, re, _ = row.split(",")
        assert abs(float(re) - 0.05 * (int(k) + 0.5 * int(l))) < 1e-12
    match = json.loads((tmp_path / "match_h0p05.json").read_text())
    assert match["num_matched"] == len(rows)
    assert match["max_err"] < 1e-9


def test_matrix_dump_roundtrip(tmp_path):
    import numpy as np
    from qbnf.scenario import assembled_operator, dump_matrix

    cfg = load_config(GOOD)
    op = assembled_operator(cfg, 0.1)
    path = tmp_path / "matrix.csv"
    dump_matrix(path, op)
    lines = path.read_text().splitlines()
    n = int(lines[0])
    assert n == op.matrix.shape[0]
    vals = np.array([complex(float(r), float(i))
                     for r, i in (ln.split(",") for ln in lines[1:])])
    assert np.array_equal(vals.reshape((n, n), order="F"), op.matrix)


def test_emit_plot_data_empty(tmp_path):
    p = tmp_path / "plot.csv"
    emit_plot_data(p, None, None)
    assert p.read_text().splitlines() == ["re,im,k,l,source,pair"]


def test_emit_plot_data_rows_and_pairs(tmp_path):
    entries = [LatticeEntry(0, 0, 0.1 - 0.05j), LatticeEntry(1, 0, 0.2 - 0.05j),
               LatticeEntry(0, 1, 0.1 - 0.15j)]
    lat = ResonanceLattice(entries, Window(0.0, 1.0, 1.0), 0.1)
    rep = MatchReport(
        pairs=[MatchedPair(0, 0, 0.1 - 0.05j, 0.1 - 0.05j + 1e-9, 1e-9)],
        unmatched_predicted=entries[1:],
        unmatched_computed=[0.9 - 0.9j],
        max_err=1e-9, mean_err=1e-9, h=0.1,
    )
    p = tmp_path / "plot.csv"
    emit_plot_data(p, lat, rep)
    lines = p.read_text().splitlines()
    assert len(lines) == 1 + 3 + 1 + 1
    pred0 = lines[1].split(",")
    comp0 = lines[4].split(",")
    assert pred0[4] == "predicted" and comp0[4] == "computed"
    assert pred0[5] == comp0[5] == "0"  # shared pair id


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------

def test_cli_run_quadratic(tmp_path, capsys):
    rc = main(["run", "--config", "quadratic_saddle", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "run_report.json").exists()


def test_cli_bnf_subcommand(tmp_path):
    rc = main(["bnf", "--config", "quadratic_saddle", "--out", str(tmp_path)])
    assert rc == 0
    nf = json.loads((tmp_path / "normal_form.json").read_text())
    assert nf["kind"] == "equilibrium"


def test_cli_lattice_subcommand(tmp_path):
    rc = main(["lattice", "--config", "quadratic_saddle", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "lattice_h0p05.csv").exists()


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1}))
    rc = main(["run", "--config", str(bad), "--out", str(tmp_path)])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_cli_missing_config_exit_code(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 2


def test_cli_sweep_subcommand(tmp_path):
    cfg = json.loads(json.dumps(GOOD))
    cfg["model"]["higher_terms"] = [
        {"alpha": [2, 2], "beta": [0, 0], "j": 0, "re": 0.2, "im": 0.0}
    ]
    cfg["compute"]["order"] = 4
    cfg["compute"]["h_values"] = [0.2, 0.1, 0.05]
    cfg["compute"]["window"] = {"half_width": 0.5, "depth": 0.4}
    cfg["compute"]["label_cap"] = 2
    del cfg["compute"]["basis"]
    p = tmp_path / "sweep.json"
    p.write_text(json.dumps(cfg))
    rc = main(["sweep", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 0
    conv = json.loads((tmp_path / "convergence.json").read_text())
    assert conv["slope"] is not None and conv["slope"] > 1.5


def test_cli_numeric_failure_exit_code(tmp_path, capsys):
    cfg = json.loads(json.dumps(GOOD))
    cfg["compute"]["basis"] = {"levels1": 200, "levels2": 200}  # beyond the cap
    p = tmp_path / "big.json"
    p.write_text(json.dumps(cfg))
    rc = main(["direct", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err
