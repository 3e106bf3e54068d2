"""Swing-leg control: inverse dynamics with a low-impedance correction.

Swing feet track Cartesian reference trajectories built from quintic
segments so that lift-off and touchdown happen with zero velocity at
scheduled times and places. The tracking torque compensates the
projected bias, gravity and commanded-contact coupling terms and adds a
proportional-derivative correction scaled by the task inertia.
"""

from dataclasses import dataclass

import numpy as np

DEFAULT_SWING_KP = 50.0
DEFAULT_SWING_KD = 10.0


def _quintic(p0, v0, a0, p1, v1, a1, T):
    """Quintic polynomial coefficients for the given boundary conditions."""
    A = np.array(
        [
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [0, 0, 2, 0, 0, 0],
            [1, T, T**2, T**3, T**4, T**5],
            [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
            [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
        ],
        dtype=float,
    )
    return np.linalg.solve(A, np.array([p0, v0, a0, p1, v1, a1], dtype=float))


def _eval_quintic(c, t):
    pos = ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]
    vel = (((5 * c[5] * t + 4 * c[4]) * t + 3 * c[3]) * t + 2 * c[2]) * t + c[1]
    acc = ((20 * c[5] * t + 12 * c[4]) * t + 6 * c[3]) * t + 2 * c[2]
    return pos, vel, acc


@dataclass
class SwingReference:
    """Foot trajectory with a scheduled touchdown time and location."""

    start: np.ndarray
    end: np.ndarray
    duration: float
    cx: np.ndarray              # horizontal quintic
    cz_up: np.ndarray           # vertical quintic to the apex
    cz_down: np.ndarray         # vertical quintic from the apex

    @property
    def touchdown_time(self):
        return self.duration

    @property
    def touchdown_location(self):
        return self.end.copy()

    def sample(self, t):
        """Position, velocity, acceleration at time t (clamped to the span)."""
        t = min(max(t, 0.0), self.duration)
        px, vx, ax = _eval_quintic(self.cx, t)
        half = 0.5 * self.duration
        if t <= half:
            pz, vz, az = _eval_quintic(self.cz_up, t)
        else:
            pz, vz, az = _eval_quintic(self.cz_down, t - half)
        return (
            np.array([px, pz]),
            np.array([vx, vz]),
            np.array([ax, az]),
        )


def make_swing_trajectory(start, end, apex_height, duration):
    """Twice-differentiable swing arc with zero boundary velocities.

    Horizontal motion is a single quintic; vertical motion is two quintic
    segments meeting at the apex (midpoint height plus apex_height) at
    half the duration with zero velocity and acceleration.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    half = 0.5 * duration
    z_apex = 0.5 * (start[1] + end[1]) + apex_height
    cx = _quintic(start[0], 0, 0, end[0], 0, 0, duration)
    cz_up = _quintic(start[1], 0, 0, z_apex, 0, 0, half)
    cz_down = _quintic(z_apex, 0, 0, end[1], 0, 0, half)
    ref = SwingReference(
        start=start, end=end, duration=duration, cx=cx, cz_up=cz_up, cz_down=cz_down
    )
    pos, vel, _ = ref.sample(duration)
    if np.abs(pos - end).max() > 1e-6 or np.abs(vel).max() > 1e-9:
        raise AssertionError("swing trajectory endpoint mismatch")
    return ref


def swing_track(nc, x_ref_acc, x_ref, xd_ref, x, xd, gains, lambda_cmd=None):
    """Task torque for the swing subsystem.

    Inverse dynamics on the projected model plus a PD correction, minus
    the coupling of the commanded stance forces into this task space.
    """
    e = np.asarray(x_ref, dtype=float) - np.asarray(x, dtype=float)
    ed = np.asarray(xd_ref, dtype=float) - np.asarray(xd, dtype=float)
    acc = np.asarray(x_ref_acc, dtype=float) + gains.kp * e + gains.kd * ed
    tau = nc.Mnc @ acc + nc.Cnc + nc.Gnc
    if lambda_cmd is not None and nc.Jc_nc.size:
        tau = tau - nc.Jc_nc.T @ np.asarray(lambda_cmd, dtype=float)
    return tau
