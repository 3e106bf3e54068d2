"""Per-channel contact force control around an internal actuator model.

After feedback linearization the map from a force command to the realized
contact force behaves, per channel, like a first-order lag with a short
transport delay. Each channel runs the same structure: an internal copy
of that nominal model predicts the force the command should produce, the
prediction error is treated as a disturbance estimate, and two filtered
compensators act on the reference and on the estimate respectively. Both
compensators invert the lag (never the delay) and are detuned by low-pass
filters whose time constants set the robustness/performance trade-off.

Output constraints enter as static blocks: a hinge on the predicted force
keeps the internal model consistent with unilateral contact on surface
normal channels, and a deadzone on the disturbance estimate absorbs
actuator stiction.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np


def hinge(y):
    """Unilateral clamp: max(y, 0)."""
    return y if y > 0.0 else 0.0


def deadzone(d, width):
    """Zero inside the band, shifted toward zero outside it."""
    if width < 0:
        raise ValueError("deadzone width must be non-negative")
    if d > width:
        return d - width
    if d < -width:
        return d + width
    return 0.0


@dataclass
class NominalActuatorModel:
    """First-order-plus-deadtime channel model: k e^(-eta_d s)/(eta s + 1)."""

    k: float = 1.0
    eta: float = 0.02
    eta_d: float = 0.003

    def __post_init__(self):
        if self.eta <= 0 or self.k <= 0 or self.eta_d < 0:
            raise ValueError("need eta > 0, k > 0, eta_d >= 0")


@dataclass
class ImcFilterConfig:
    """Detuning filters: disturbance and tracking time constants in seconds.

    The disturbance path carries an extra fast pole (time constant
    eta_f_dist / fast_pole_ratio) to attenuate measurement noise.
    """

    eta_f_dist: float = 0.03
    eta_f_track: float = 0.05
    fast_pole_ratio: float = 10.0

    def __post_init__(self):
        if self.eta_f_dist <= 0 or self.eta_f_track <= 0:
            raise ValueError("filter time constants must be positive")
        if self.fast_pole_ratio < 1:
            raise ValueError("fast_pole_ratio must be >= 1")


@dataclass
class TransferParams:
    """First-order lead-lag in time-constant form: gain (zero_tc s + 1)/(pole_tc s + 1)."""

    zero_tc: float
    pole_tc: float
    gain: float

    def response(self, omega):
        s = 1j * np.asarray(omega, dtype=float)
        return self.gain * (self.zero_tc * s + 1.0) / (self.pole_tc * s + 1.0)


def h2_optimal_q(nominal, f_time_constant):
    """Compensator for the nominal channel: lag inverse times a low-pass.

    Returns (eta s + 1)/k detuned by 1/(f_time_constant s + 1); the delay
    is left out of the inversion, so the result is proper and stable.
    """
    if f_time_constant <= 0:
        raise ValueError("filter time constant must be positive")
    return TransferParams(zero_tc=nominal.eta, pole_tc=f_time_constant, gain=1.0 / nominal.k)


class FirstOrderSection:
    """Bilinear-transform discretization of a first-order lead-lag.

    The discrete difference equation preserves the continuous dc gain
    exactly. States start at rest; reset() returns them there.
    """

    def __init__(self, zero_tc, pole_tc, gain, dt):
        if dt <= 0 or pole_tc <= 0:
            raise ValueError("need dt > 0 and a positive pole time constant")
        if dt > pole_tc / 2.0:
            warnings.warn(
                f"time step {dt} under-resolves a filter pole with time constant {pole_tc}",
                stacklevel=2,
            )
        wz = 2.0 * zero_tc / dt
        wp = 2.0 * pole_tc / dt
        self.b0 = gain * (1.0 + wz) / (1.0 + wp)
        self.b1 = gain * (1.0 - wz) / (1.0 + wp)
        self.a1 = (1.0 - wp) / (1.0 + wp)
        self.u_prev = 0.0
        self.y_prev = 0.0

    def step(self, u):
        y = self.b0 * u + self.b1 * self.u_prev - self.a1 * self.y_prev
        self.u_prev = u
        self.y_prev = y
        return y

    def reset(self):
        self.u_prev = 0.0
        self.y_prev = 0.0


def discretize_first_order(zero_tc, pole_tc, gain, dt):
    """Difference-equation coefficients (b0, b1, a1) of the lead-lag."""
    sec = FirstOrderSection(zero_tc, pole_tc, gain, dt)
    return sec.b0, sec.b1, sec.a1


class ImcChannel:
    """Single force channel: internal model, delay line, and compensators.

    The internal model output is the exact discrete response of the
    nominal lag and an integer-sample delay line, so a simulated plant
    with identical parameters produces a disturbance estimate of zero.
    One channel must be stepped by a single caller; independent channels
    are independent state machines.
    """

    def __init__(self, nominal, filters, dt, hinge_enabled=False, deadzone_width=0.0):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.nominal = nominal
        self.filters = filters
        self.dt = dt
        self.hinge_enabled = bool(hinge_enabled)
        self.deadzone_width = float(deadzone_width)
        if self.deadzone_width < 0:
            raise ValueError("deadzone width must be non-negative")

        self.q_r = [
            FirstOrderSection(nominal.eta, filters.eta_f_track, 1.0 / nominal.k, dt)
        ]
        self.q_d = [
            FirstOrderSection(nominal.eta, filters.eta_f_dist, 1.0 / nominal.k, dt),
            FirstOrderSection(0.0, filters.eta_f_dist / filters.fast_pole_ratio, 1.0, dt),
        ]
        self.delay_samples = int(round(nominal.eta_d / dt))
        self._lag_decay = float(np.exp(-dt / nominal.eta))
        self.reset()

    def reset(self):
        """Clear all internal state, e.g. when a contact is made or broken."""
        for sec in self.q_r + self.q_d:
            sec.reset()
        self._lag_state = 0.0
        # holds the last delay_samples + 1 lag outputs; the head is the
        # prediction for the current instant
        self._delay_line = [0.0] * (self.delay_samples + 1)
        self.last_u = 0.0
        self.last_disturbance = 0.0
        self.last_prediction = 0.0

    def predicted_force(self):
        """Internal-model output for the current instant (pre-update)."""
        y = self._delay_line[0]
        if self.hinge_enabled:
            y = hinge(y)
        return y

    def step(self, lambda_ref, lambda_meas):
        """Advance one control period and return the force command.

        Non-finite inputs latch the previous command and leave the state
        untouched.
        """
        if not (np.isfinite(lambda_ref) and np.isfinite(lambda_meas)):
            return self.last_u

        y_hat = self.predicted_force()
        d_tilde = lambda_meas - y_hat
        self.last_prediction = y_hat
        self.last_disturbance = d_tilde

        u = self.q_r[0].step(lambda_ref)
        d = deadzone(d_tilde, self.deadzone_width)
        for sec in self.q_d:
            d = sec.step(d)
        u -= d

        # advance the internal model with the command just issued
        a = self._lag_decay
        self._lag_state = a * self._lag_state + (1.0 - a) * self.nominal.k * u
        self._delay_line.append(self._lag_state)
        self._delay_line.pop(0)
        self.last_u = u
        return u


@dataclass
class ContactForceCommand:
    """Assembled per-step output of the stance force controller."""

    u: np.ndarray               # commanded channel forces, stance order
    tau_c: np.ndarray           # projected subsystem torques
    d_tilde: np.ndarray         # disturbance estimates per channel

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.tau_c = np.asarray(self.tau_c, dtype=float)
        self.d_tilde = np.asarray(self.d_tilde, dtype=float)


def feedback_linearize(cs, F):
    """Projected torque realizing the task force F on the stance subsystem.

    tau_c = F + Cc + Gc; under rigid contact the realized force is -F, so
    commanding F = -lambda_des targets lambda_des.
    """
    F = np.asarray(F, dtype=float)
    if F.shape != cs.Gc.shape:
        raise ValueError("force dimension does not match the contact subsystem")
    return F + cs.Cc + cs.Gc
