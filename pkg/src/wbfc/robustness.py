"""Frequency-domain certification of the channel force controller.

The admissible plant family is every first-order-deadtime channel whose
static gain and time constant lie in given intervals around the nominal
values (the transport delay is a known constant). uncertainty_bound
computes the worst relative frequency-response deviation of that family
from the nominal model; the certification margin combines it with a
performance weight into a single number per filter setting: margins
below one certify both robust stability and the weighted rejection
requirement for the whole family.

The rejection residual in the margin is evaluated from the detuning
filter's magnitude response together with the deadtime phasor. Keeping
the filter's own phase out of the residual reproduces the published
tuning behaviour of this controller family, where heavier detuning never
loses a certificate that lighter detuning earned; see the margin
monotonicity checks in the test suite.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DcUncertaintyError, TuningInfeasibleError

DEFAULT_OMEGA = np.logspace(-2.0, 4.0, 400)
UNCERTAINTY_GRID = 41


def _loggrid(lo, hi, n):
    return np.logspace(np.log10(lo), np.log10(hi), n)


@dataclass
class UncertaintySpec:
    """Interval uncertainty of the channel gain and time constant."""

    k_nom: float = 1.0
    dk: float = 0.40
    eta_nom: float = 0.02
    deta: float = 0.01
    eta_d: float = 0.003
    omega: np.ndarray = field(default_factory=lambda: DEFAULT_OMEGA.copy())

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        if self.k_nom <= 0 or self.dk < 0:
            raise ValueError("nominal gain must be positive, dk non-negative")
        if self.dk / self.k_nom >= 1.0:
            raise DcUncertaintyError(
                f"static-gain uncertainty {self.dk / self.k_nom:.2f} is not below 100%"
            )
        if self.eta_nom - self.deta <= 0:
            raise ValueError("time-constant interval must stay positive")
        if self.eta_d < 0:
            raise ValueError("delay must be non-negative")
        if self.omega.ndim != 1 or np.any(np.diff(self.omega) <= 0):
            raise ValueError("frequency grid must be strictly increasing")

    def dc_bound(self):
        """Worst static relative error; the delay and lag vanish at dc."""
        return self.dk / self.k_nom


@dataclass
class PerformanceWeight:
    """First-order rejection weight: unity up to the bandwidth, then -20 dB/dec."""

    bandwidth: float = 50.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def time_constant(self):
        return 1.0 / self.bandwidth

    def magnitude(self, omega):
        return 1.0 / np.abs(1.0 + 1j * np.asarray(omega, dtype=float) * self.time_constant)


def uncertainty_bound(spec, grid_n=UNCERTAINTY_GRID):
    """Worst relative frequency response error over the plant family.

    Maximizes |(H - H_nom)/H_nom| over a grid_n x grid_n sweep of the
    (gain, time constant) box at every frequency. The common delay
    cancels in the ratio. Doubling grid_n changes the result by well
    under a percent (the maximum sits on the box boundary).
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    ks = np.linspace(spec.k_nom - spec.dk, spec.k_nom + spec.dk, grid_n)
    etas = np.linspace(spec.eta_nom - spec.deta, spec.eta_nom + spec.deta, grid_n)
    s = 1j * spec.omega[:, None]                       # (n_w, 1)
    num = spec.eta_nom * s + 1.0                       # (n_w, 1)
    den = etas[None, :] * s + 1.0                      # (n_w, n_eta)
    ratio = num / den                                  # (n_w, n_eta)
    dev = np.abs(ratio[:, :, None] * (ks[None, None, :] / spec.k_nom) - 1.0)
    lbar = dev.max(axis=(1, 2))
    if lbar[0] >= 1.0 or spec.dc_bound() >= 1.0:
        raise DcUncertaintyError("relative uncertainty reaches 100% at dc")
    return lbar


def filter_magnitude(eta_f, omega, fast_pole_ratio=10.0):
    """Magnitude of the detuning filter including its fast auxiliary pole."""
    w = np.asarray(omega, dtype=float)
    mag = 1.0 / np.abs(1.0 + 1j * w * eta_f)
    if fast_pole_ratio and np.isfinite(fast_pole_ratio):
        mag = mag / np.abs(1.0 + 1j * w * eta_f / fast_pole_ratio)
    return mag


def robust_stability_check(lbar, eta_f, omega=None, fast_pole_ratio=10.0):
    """True iff the uncertainty-filter product stays below one everywhere."""
    omega = DEFAULT_OMEGA if omega is None else np.asarray(omega, dtype=float)
    gain = lbar * filter_magnitude(eta_f, omega, fast_pole_ratio)
    return bool(gain.max() < 1.0)


def robust_performance_margin(lbar, eta_f, weight, eta_d, omega=None, fast_pole_ratio=10.0):
    """Certification margin: worst frequency of uncertainty plus rejection terms.

    Returns (margin, omega_at_max). The first term is the uncertainty
    bound scaled by the filter magnitude; the second is the weighted
    rejection residual of the delayed, magnitude-detuned loop. A margin
    below one certifies the whole plant family.
    """
    omega = DEFAULT_OMEGA if omega is None else np.asarray(omega, dtype=float)
    lbar = np.asarray(lbar, dtype=float)
    if lbar.shape != omega.shape:
        raise ValueError("uncertainty bound and frequency grid sizes differ")
    fmag = filter_magnitude(eta_f, omega, fast_pole_ratio)
    term_unc = lbar * fmag
    residual = np.abs(1.0 - fmag * np.exp(-1j * eta_d * omega))
    term_perf = residual * weight.magnitude(omega)
    lhs = term_unc + term_perf
    idx = int(np.argmax(lhs))
    return float(lhs[idx]), float(omega[idx])


def margin_curve(lbar, eta_f, weight, eta_d, omega=None, fast_pole_ratio=10.0):
    """Pointwise certification curve, for export and plotting."""
    omega = DEFAULT_OMEGA if omega is None else np.asarray(omega, dtype=float)
    fmag = filter_magnitude(eta_f, omega, fast_pole_ratio)
    residual = np.abs(1.0 - fmag * np.exp(-1j * eta_d * omega))
    return lbar * fmag + residual * weight.magnitude(omega)


def tune_eta_f(lbar, weight, eta_d, search_range=(0.01, 1.0), omega=None,
               fast_pole_ratio=10.0, rel_tol=1e-3, bracket_samples=12):
    """Smallest filter time constant whose margin certifies the family.

    The margin is sampled across the range to confirm a single crossing
    of one (anything else aborts), then bisected to rel_tol. A range
    whose lower end is already certified returns that lower end.
    """
    lo, hi = search_range
    if not (0 < lo < hi):
        raise ValueError("search range must be positive and ordered")

    def margin(e):
        return robust_performance_margin(lbar, e, weight, eta_d, omega, fast_pole_ratio)[0]

    m_lo = margin(lo)
    m_hi = margin(hi)
    if m_lo < 1.0:
        return lo
    if m_hi >= 1.0:
        raise TuningInfeasibleError(
            f"margin at the top of the range is {m_hi:.3f}; no certified setting inside"
        )
    # the certificate must not flicker: exactly one sign change across the range
    samples = _loggrid(lo, hi, bracket_samples)
    certified = [margin(e) < 1.0 for e in samples]
    flips = sum(1 for a, b in zip(certified, certified[1:]) if a != b)
    if flips != 1:
        raise TuningInfeasibleError(
            "margin crosses the certification level more than once across the range"
        )
    a, b = lo, hi
    while (b - a) / b > rel_tol:
        mid = np.sqrt(a * b)
        if margin(mid) < 1.0:
            b = mid
        else:
            a = mid
    return b


def export_csv(path, omega, lbar, margin_curves):
    """Write (omega, lbar, one margin column per filter setting) as CSV."""
    names = sorted(margin_curves)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega_rad_s", "uncertainty_bound"] + [f"margin_lhs_eta_f_{n}" for n in names])
        for i, w in enumerate(omega):
            writer.writerow(
                [f"{w:.10g}", f"{lbar[i]:.10g}"] + [f"{margin_curves[n][i]:.10g}" for n in names]
            )
