"""Command-line interface checks: exit codes, outputs, determinism."""

import configparser
from pathlib import Path

import numpy as np
import pytest

from wbfc.cli import EXIT_CERTIFICATION, EXIT_CONFIG, EXIT_OK, RunConfig, ConfigError, main


def run_cli(*argv):
    return main(list(argv))


def short_args(out, extra=()):
    return [
        "simulate", "--scenario", "stand", "--duration", "1.0",
        "--out", str(out), "--no-plots", *extra,
    ]


# ---------------------------------------------------------------------------
# simulate


def test_simulate_smoke(tmp_path):
    code = run_cli(*short_args(tmp_path / "a"), "--ground-k", "6e5")
    assert code == EXIT_OK
    out = tmp_path / "a"
    assert (out / "stand_imc.csv").is_file()
    assert (out / "stand_imc_summary.txt").is_file()
    text = (out / "stand_imc_summary.txt").read_text()
    assert "rms_com_x:" in text and "qp_mean_us:" in text


def test_simulate_renders_figures_by_default(tmp_path):
    code = run_cli(
        "simulate", "--scenario", "stand", "--duration", "0.5", "--out", str(tmp_path / "f")
    )
    assert code == EXIT_OK
    assert (tmp_path / "f" / "stand_imc.png").is_file()


def test_simulate_missing_model_file_exits_2(tmp_path, capsys):
    out = tmp_path / "x"
    code = run_cli(*short_args(out), "--model", str(tmp_path / "nope.ini"))
    assert code == EXIT_CONFIG
    assert not out.exists()
    assert "not found" in capsys.readouterr().err


def test_unknown_config_key_rejected(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[ground]\nstiffnes = 1e4\n")
    code = run_cli(*short_args(tmp_path / "y"), "--config", str(bad))
    assert code == EXIT_CONFIG


def test_out_of_range_value_rejected(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\ndt = 10.0\n")
    code = run_cli(*short_args(tmp_path / "y"), "--config", str(bad))
    assert code == EXIT_CONFIG


def test_plank_simulation_keeps_pitch_bound(tmp_path):
    out = tmp_path / "plank"
    code = run_cli(
        "simulate", "--scenario", "plank", "--controller", "imc", "--ground-k", "1e4",
        "--duration", "6.0", "--out", str(out), "--no-plots",
    )
    assert code == EXIT_OK
    summary = dict(
        line.split(": ") for line in (out / "plank_imc_summary.txt").read_text().splitlines()
    )
    assert float(summary["max_abs_pitch_deg"]) < 2.0
    assert float(summary["min_normal_force"]) >= 0.0


def test_config_round_trip_reproduces_run(tmp_path):
    a = tmp_path / "a"
    code = run_cli(*short_args(a), "--seed", "3")
    assert code == EXIT_OK
    b = tmp_path / "b"
    code = run_cli(
        "simulate", "--config", str(a / "effective_config.ini"), "--out", str(b), "--no-plots"
    )
    assert code == EXIT_OK
    da = np.loadtxt(a / "stand_imc.csv", delimiter=",", skiprows=1)
    db = np.loadtxt(b / "stand_imc.csv", delimiter=",", skiprows=1)
    # identical traces; the qp timing column is wall-clock and may differ
    assert np.array_equal(da[:, :-1], db[:, :-1])


# ---------------------------------------------------------------------------
# analyze / tune


def test_analyze_brackets_and_csv(tmp_path, capsys):
    out = tmp_path / "an"
    code = run_cli("analyze", "--out", str(out), "--eta-f", "0.01", "--eta-f", "0.3", "--no-plots")
    assert code == EXIT_OK
    text = capsys.readouterr().out
    assert "eta_f = 0.01" in text and "uncertified" in text
    assert "eta_f = 0.3" in text and "certified" in text
    data = np.loadtxt(out / "certification.csv", delimiter=",", skiprows=1)
    assert data.shape[1] == 4
    assert np.all(np.diff(data[:, 0]) > 0)


def test_analyze_without_uncertainty_certifies_everything(tmp_path, capsys):
    cfgfile = tmp_path / "zero.ini"
    cfgfile.write_text("[uncertainty]\ngain_delta = 1e-9\ntc_delta = 1e-9\n")
    code = run_cli(
        "analyze", "--config", str(cfgfile), "--out", str(tmp_path / "an2"),
        "--eta-f", "0.01", "--eta-f", "0.3", "--no-plots",
    )
    assert code == EXIT_OK
    # stability alone is satisfied for every setting; rejection residual
    # still rules, so at least the certified flag must appear for 0.3
    assert "certified" in capsys.readouterr().out


def test_analyze_total_uncertainty_exits_4(tmp_path, capsys):
    cfgfile = tmp_path / "total.ini"
    cfgfile.write_text("[uncertainty]\ngain_delta = 1.0\n")
    code = run_cli("analyze", "--config", str(cfgfile), "--out", str(tmp_path / "an3"), "--no-plots")
    assert code == EXIT_CERTIFICATION


def test_tune_reports_bracketed_value(tmp_path, capsys):
    out = tmp_path / "tu"
    code = run_cli("tune", "--out", str(out), "--no-plots")
    assert code == EXIT_OK
    text = capsys.readouterr().out
    value = float(text.strip().split()[-2])
    assert 0.01 < value < 0.3
    parser = configparser.ConfigParser()
    parser.read(out / "tuned_imc.ini")
    assert abs(parser.getfloat("imc", "eta_f_dist") - value) < 1e-9


def test_tune_infeasible_range_exits_4(tmp_path):
    code = run_cli("tune", "--out", str(tmp_path / "tu2"), "--eta-f-lo", "0.002",
                   "--eta-f-hi", "0.004", "--no-plots")
    assert code == EXIT_CERTIFICATION


# ---------------------------------------------------------------------------
# compare


@pytest.fixture(scope="module")
def compare_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cmp")
    code = run_cli(
        "compare", "--scenario", "stand_push", "--duration", "4.0",
        "--out", str(out), "--no-plots", "--seed", "1",
    )
    assert code == EXIT_OK
    return out


def test_compare_outputs_and_ratios(compare_dir):
    lines = dict(
        line.split(": ")
        for line in (compare_dir / "comparison_summary.txt").read_text().splitlines()
    )
    stiff_ratio = float(lines["stiff_ratio_imc_over_baseline"])
    soft_ratio = float(lines["soft_ratio_imc_over_baseline"])
    assert 0.5 <= stiff_ratio <= 2.0
    assert soft_ratio <= 0.7
    table = (compare_dir / "comparison.csv").read_text().splitlines()
    assert table[0].startswith("ground,controller,")
    assert len(table) == 5


def test_compare_deterministic_across_invocations(compare_dir, tmp_path):
    out2 = tmp_path / "cmp2"
    code = run_cli(
        "compare", "--scenario", "stand_push", "--duration", "4.0",
        "--out", str(out2), "--no-plots", "--seed", "1",
    )
    assert code == EXIT_OK
    for name in ("compare_stiff_baseline.csv", "compare_soft_imc.csv"):
        a = np.loadtxt(compare_dir / name, delimiter=",", skiprows=1)
        b = np.loadtxt(out2 / name, delimiter=",", skiprows=1)
        assert np.array_equal(a[:, :-1], b[:, :-1])


# ---------------------------------------------------------------------------
# plot


def test_plot_from_csv(tmp_path):
    out = tmp_path / "p"
    assert run_cli(*short_args(out)) == EXIT_OK
    png = tmp_path / "replot.png"
    code = run_cli("plot", "--csv", str(out / "stand_imc.csv"), "--out", str(png))
    assert code == EXIT_OK
    assert png.is_file()


def test_plot_missing_csv_exits_2(tmp_path):
    assert run_cli("plot", "--csv", str(tmp_path / "none.csv")) == EXIT_CONFIG


# ---------------------------------------------------------------------------
# config object


def test_runconfig_defaults_load():
    cfg = RunConfig.load()
    assert cfg.get("robot", "type") == "planar_quadruped"
    assert cfg.getfloat("ground", "stiffness") == 6.0e5
    model = cfg.build_model()
    assert model.dof == 11
    assert model.total_mass == pytest.approx(80.0)


def test_runconfig_rejects_unknown_section(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[teleporter]\nx = 1\n")
    with pytest.raises(ConfigError):
        RunConfig.load(config_path=str(bad))
