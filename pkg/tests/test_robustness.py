"""Uncertainty envelope, certification margins, and filter tuning checks."""

import csv
import time

import numpy as np
import pytest

from wbfc.errors import DcUncertaintyError, TuningInfeasibleError
from wbfc.imc_force import ImcChannel, ImcFilterConfig, NominalActuatorModel
from wbfc.robustness import (
    PerformanceWeight,
    UncertaintySpec,
    export_csv,
    margin_curve,
    robust_performance_margin,
    robust_stability_check,
    tune_eta_f,
    uncertainty_bound,
)


@pytest.fixture(scope="module")
def spec():
    return UncertaintySpec()


@pytest.fixture(scope="module")
def lbar(spec):
    return uncertainty_bound(spec)


@pytest.fixture(scope="module")
def weight():
    return PerformanceWeight()


# ---------------------------------------------------------------------------
# uncertainty bound


def test_dc_value_is_gain_uncertainty(spec, lbar):
    assert spec.dc_bound() == pytest.approx(0.40, abs=1e-12)
    assert lbar[0] == pytest.approx(0.40, abs=1e-6)


def test_no_uncertainty_means_zero_bound():
    z = UncertaintySpec(dk=1e-12, deta=1e-12)
    lb = uncertainty_bound(z)
    assert np.abs(lb).max() < 1e-9


def test_bound_grows_and_exceeds_one_at_high_frequency(spec, lbar):
    assert lbar[-1] > 1.0
    # increases with frequency over the ramp-up band
    band = (spec.omega > 1.0) & (spec.omega < 200.0)
    assert np.all(np.diff(lbar[band]) > -1e-12)


def test_grid_refinement_is_stable(spec, lbar):
    fine = uncertainty_bound(spec, grid_n=82)
    rel = np.abs(fine - lbar) / np.maximum(lbar, 1e-12)
    assert rel.max() < 0.01


def test_total_dc_uncertainty_rejected():
    with pytest.raises(DcUncertaintyError):
        UncertaintySpec(dk=1.0)
    with pytest.raises(ValueError):
        UncertaintySpec(deta=0.02)      # time constant interval touches zero


def test_weight_shape(weight):
    assert weight.magnitude(0.0) == pytest.approx(1.0)
    w = weight.magnitude(np.logspace(-2, 4, 100))
    assert np.all(np.diff(w) <= 1e-15)
    assert weight.magnitude(50.0) == pytest.approx(1 / np.sqrt(2), rel=1e-9)


# ---------------------------------------------------------------------------
# certification margin


def test_margin_brackets_published_settings(spec, lbar, weight):
    t0 = time.perf_counter()
    m_small, _ = robust_performance_margin(lbar, 0.01, weight, spec.eta_d, spec.omega)
    m_large, _ = robust_performance_margin(lbar, 0.3, weight, spec.eta_d, spec.omega)
    assert m_small > 1.0
    assert m_large < 1.0
    assert time.perf_counter() - t0 < 1.0


def test_deployed_setting_also_certified(spec, lbar, weight):
    m, _ = robust_performance_margin(lbar, 0.03, weight, spec.eta_d, spec.omega)
    assert m < 1.0


def test_margin_zero_without_uncertainty_or_weight(spec):
    class ZeroWeight:
        def magnitude(self, omega):
            return np.zeros_like(np.asarray(omega, dtype=float))

    m, _ = robust_performance_margin(
        np.zeros_like(spec.omega), 0.05, ZeroWeight(), spec.eta_d, spec.omega
    )
    assert m == 0.0


def test_margin_grid_convergence(spec, lbar, weight):
    om2 = np.logspace(-2, 4, 800)
    lbar2 = uncertainty_bound(UncertaintySpec(omega=om2))
    for ef in (0.02, 0.3):
        a, _ = robust_performance_margin(lbar, ef, weight, spec.eta_d, spec.omega)
        b, _ = robust_performance_margin(lbar2, ef, weight, spec.eta_d, om2)
        assert abs(a - b) / a < 0.005


def test_margin_single_crossing_then_stays_certified(spec, lbar, weight):
    """Margins fall from the uncertified region, cross once, and stay certified."""
    etas = np.logspace(np.log10(0.01), 0.0, 25)
    margins = np.array(
        [robust_performance_margin(lbar, e, weight, spec.eta_d, spec.omega)[0] for e in etas]
    )
    certified = margins < 1.0
    flips = np.count_nonzero(np.diff(certified))
    assert flips == 1
    first = int(np.argmax(certified))
    assert np.all(np.diff(margins[: first + 1]) < 0)     # falling toward the crossing
    assert np.all(certified[first:])                     # certificates never revoked


# ---------------------------------------------------------------------------
# stability-only check


def test_stability_requires_rolloff(spec, lbar):
    assert not robust_stability_check(lbar, 0.0, spec.omega)     # no filter at all
    assert robust_stability_check(lbar, 0.3, spec.omega)
    assert robust_stability_check(np.zeros_like(spec.omega), 0.0, spec.omega)


# ---------------------------------------------------------------------------
# tuning


def test_tuned_value_lies_inside_published_bracket(spec, lbar, weight):
    ef = tune_eta_f(lbar, weight, spec.eta_d, (0.01, 1.0), spec.omega)
    assert 0.01 < ef < 0.3
    m, _ = robust_performance_margin(lbar, ef, weight, spec.eta_d, spec.omega)
    assert m < 1.0
    m_below, _ = robust_performance_margin(lbar, ef * 0.98, weight, spec.eta_d, spec.omega)
    assert m_below > 1.0 or ef * 0.98 <= 0.01


def test_halved_gain_uncertainty_tunes_smaller(spec, lbar, weight):
    full = tune_eta_f(lbar, weight, spec.eta_d, (0.01, 1.0), spec.omega)
    small_spec = UncertaintySpec(dk=0.20)
    small = tune_eta_f(
        uncertainty_bound(small_spec), weight, small_spec.eta_d, (0.01, 1.0), small_spec.omega
    )
    assert small < full


def test_zero_uncertainty_returns_lower_end(spec, weight):
    ef = tune_eta_f(np.zeros_like(spec.omega), weight, spec.eta_d, (0.01, 1.0), spec.omega)
    assert ef == 0.01


def test_unbracketable_range_raises(spec, lbar, weight):
    with pytest.raises(TuningInfeasibleError):
        tune_eta_f(lbar, weight, spec.eta_d, (0.002, 0.004), spec.omega)


# ---------------------------------------------------------------------------
# certified settings hold up in time-domain simulation


def test_certified_filter_is_sound_on_sampled_family(spec, lbar, weight):
    """50 random in-family plants: bounded response, offset-free rejection."""
    ef = tune_eta_f(lbar, weight, spec.eta_d, (0.01, 1.0), spec.omega)
    dt = 0.0025
    rng = np.random.default_rng(42)
    nominal = NominalActuatorModel(k=spec.k_nom, eta=spec.eta_nom, eta_d=spec.eta_d)
    for _ in range(50):
        k = rng.uniform(spec.k_nom - spec.dk, spec.k_nom + spec.dk)
        eta = rng.uniform(spec.eta_nom - spec.deta, spec.eta_nom + spec.deta)
        ch = ImcChannel(
            nominal, ImcFilterConfig(eta_f_dist=ef, eta_f_track=0.05), dt
        )
        decay = np.exp(-dt / eta)
        buf = [0.0] * ch.delay_samples
        y = 0.0
        hist = []
        for step in range(int(6.0 / dt)):
            meas = y + (8.0 if step >= 800 else 0.0)
            u = ch.step(20.0, meas)
            if buf:
                buf.append(u)
                u = buf.pop(0)
            y = decay * y + (1 - decay) * k * u
            hist.append(meas)
        hist = np.asarray(hist)
        assert np.all(np.isfinite(hist))
        assert np.abs(hist).max() < 200.0
        assert abs(hist[-1] - 20.0) < 0.02


# ---------------------------------------------------------------------------
# export


def test_csv_export_round_trips(tmp_path, spec, lbar, weight):
    curves = {
        "0.01": margin_curve(lbar, 0.01, weight, spec.eta_d, spec.omega),
        "0.3": margin_curve(lbar, 0.3, weight, spec.eta_d, spec.omega),
    }
    path = tmp_path / "certification.csv"
    export_csv(path, spec.omega, lbar, curves)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "omega_rad_s"
    data = np.array([[float(v) for v in r] for r in rows[1:]])
    assert data.shape == (400, 4)
    assert np.all(np.diff(data[:, 0]) > 0)
    assert np.abs(data[:, 1] - lbar).max() < 1e-8
