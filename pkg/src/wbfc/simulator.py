"""Fixed-step physics harness and the closed-loop scenario runner.

Rigid-body forward dynamics is integrated at the control rate with a
velocity-first update (the position step includes the half-step
acceleration term, so constant-acceleration motion integrates exactly).
Actuators apply a per-joint transport delay, first-order lag, and an
optional stiction band. Ground contact is a one-sided spring-damper in
the normal direction with a Coulomb-clamped tangential spring anchored
at the stick position; profiles make the ground height a function of
(x, t) for the moving-platform scenarios.

run_scenario closes the loop: subsystem extraction, com PD plus force
distribution, per-channel force control (or the inverse-dynamics
baseline), swing tracking, torque recombination, then one physics step.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .com_qp import ComReference, FrictionPyramid, PdGains, desired_net_wrench, distribute_forces, pd_correct
from .decomposition import (
    DecouplingConfig,
    build_com_subsystem,
    build_contact_subsystem,
    build_noncontact_subsystem,
    map_subsystem_torques,
)
from .errors import SimulationDivergedError
from .imc_force import ImcChannel, ImcFilterConfig, NominalActuatorModel, feedback_linearize
from .rigid_body import (
    LEG_NAMES,
    GeneralizedState,
    Kinematics,
    com_state,
    compute_dynamics,
    foot_points,
    leg_ik,
    point_jacobian,
    stacked_foot_bias,
    stacked_foot_jacobian,
    standing_state,
    wrap_angle,
)
from .swing_ctrl import DEFAULT_SWING_KD, DEFAULT_SWING_KP, make_swing_trajectory, swing_track

DEFAULT_DT = 0.0025
SOFT_GROUND_STIFFNESS = 1.0e4
STIFF_GROUND_STIFFNESS = 6.0e5
LEG_COUNT = 4


# ---------------------------------------------------------------------------
# actuators


class ActuatorBank:
    """Per-joint command path: integer-sample delay, lag, optional stiction."""

    def __init__(self, n, k=1.0, eta=0.02, eta_d=0.003, stiction=0.0, dt=DEFAULT_DT):
        if eta <= 0 or dt <= 0:
            raise ValueError("eta and dt must be positive")
        self.n = int(n)
        self.k = float(k)
        self.eta = float(eta)
        self.eta_d = float(eta_d)
        self.stiction = float(stiction)
        self.dt = float(dt)
        self.decay = float(np.exp(-dt / eta))
        self.delay_samples = int(round(eta_d / dt))
        self.buf = [np.zeros(self.n) for _ in range(self.delay_samples)]
        self.lag = np.zeros(self.n)

    def step(self, tau_cmd, qd=None):
        """Advance one period; returns the torques applied to the joints."""
        tau_cmd = np.asarray(tau_cmd, dtype=float)
        if self.buf:
            self.buf.append(tau_cmd.copy())
            tau_cmd = self.buf.pop(0)
        self.lag = self.decay * self.lag + (1.0 - self.decay) * self.k * tau_cmd
        out = self.lag.copy()
        if self.stiction > 0.0 and qd is not None:
            still = np.abs(np.asarray(qd)) < 1e-3
            out[still] = np.sign(out[still]) * np.maximum(np.abs(out[still]) - self.stiction, 0.0)
        return out


def actuator_step(bank, tau_cmd, qd=None):
    return bank.step(tau_cmd, qd)


# ---------------------------------------------------------------------------
# ground


class FlatGround:
    def height(self, x, t):
        return 0.0

    def height_rate(self, x, t):
        return 0.0


class RampProfile:
    """Height ramp under a half-plane region, e.g. a plank lifted under the
    front feet while the controller is left unaware."""

    def __init__(self, rise=0.1, t_start=2.0, t_ramp=2.0, region_x_min=0.0):
        self.rise = rise
        self.t_start = t_start
        self.t_ramp = t_ramp
        self.region_x_min = region_x_min

    def _phase(self, t):
        return min(max((t - self.t_start) / self.t_ramp, 0.0), 1.0)

    def height(self, x, t):
        return self.rise * self._phase(t) if x >= self.region_x_min else 0.0

    def height_rate(self, x, t):
        inside = 0.0 < self._phase(t) < 1.0
        return self.rise / self.t_ramp if (x >= self.region_x_min and inside) else 0.0


class SeesawProfile:
    """Ground plane tilting about x = pivot with a slow sinusoidal slope."""

    def __init__(self, amplitude=0.08, period=4.0, pivot=0.0, t_start=2.0):
        self.amplitude = amplitude
        self.period = period
        self.pivot = pivot
        self.t_start = t_start

    def _slope(self, t):
        if t < self.t_start:
            return 0.0
        return self.amplitude * np.sin(2.0 * np.pi * (t - self.t_start) / self.period)

    def height(self, x, t):
        return self._slope(t) * (x - self.pivot)

    def height_rate(self, x, t):
        if t < self.t_start:
            return 0.0
        rate = (
            self.amplitude
            * (2.0 * np.pi / self.period)
            * np.cos(2.0 * np.pi * (t - self.t_start) / self.period)
        )
        return rate * (x - self.pivot)


@dataclass
class GroundModel:
    """One-sided spring-damper terrain with Coulomb-limited tangential force."""

    k_g: float = STIFF_GROUND_STIFFNESS
    d_g: float = None            # default near-critical for a quarter robot
    mu: float = 0.7
    profile: object = field(default_factory=FlatGround)
    foot_share_mass: float = 20.0

    def __post_init__(self):
        if self.d_g is None:
            self.d_g = 2.0 * np.sqrt(self.k_g * self.foot_share_mass)

    def contact_force(self, pos, vel, t, anchor):
        """Ground reaction on one foot; returns (force, new_anchor)."""
        h = self.profile.height(pos[0], t)
        pen = h - pos[1]
        if pen <= 0.0:
            return np.zeros(2), None
        pen_rate = self.profile.height_rate(pos[0], t) - vel[1]
        fz = self.k_g * pen + self.d_g * pen_rate
        if fz <= 0.0:
            return np.zeros(2), anchor
        if anchor is None:
            anchor = pos[0]
        fx = -self.k_g * (pos[0] - anchor) - self.d_g * vel[0]
        limit = self.mu * fz
        if fx > limit:
            fx = limit
            anchor = pos[0] + (fx + self.d_g * vel[0]) / self.k_g
        elif fx < -limit:
            fx = -limit
            anchor = pos[0] + (fx + self.d_g * vel[0]) / self.k_g
        return np.array([fx, fz]), anchor


# ---------------------------------------------------------------------------
# world


class SimWorld:
    """Mutable simulation state: robot, actuators, ground and contact memory."""

    def __init__(self, model, state, ground, actuators, t=0.0, noise_std=0.0, seed=0):
        self.model = model
        self.state = state
        self.ground = ground
        self.bank = actuators
        self.t = float(t)
        self.noise_std = float(noise_std)
        self.rng = np.random.default_rng(seed)
        self.anchors = [None] * len(model.feet)
        self.last_forces = np.zeros((len(model.feet), 2))
        self.last_applied = np.zeros(model.n_actuated)
        self.refresh_contacts()

    def refresh_contacts(self):
        kin = Kinematics(self.model, self.state.q, self.state.qd)
        pos, vel = foot_points(self.model, kin)
        for i in range(len(self.model.feet)):
            f, a = self.ground.contact_force(pos[i], vel[i], self.t, self.anchors[i])
            self.last_forces[i] = f
            self.anchors[i] = a
        return pos, vel

    def measured_forces(self):
        """Contact force as seen by the controller, optionally noisy."""
        forces = self.last_forces.copy()
        if self.noise_std > 0.0:
            forces += self.rng.normal(scale=self.noise_std, size=forces.shape)
        return forces

    def snapshot(self):
        return GeneralizedState(q=self.state.q.copy(), qd=self.state.qd.copy())


def step_world(world, tau_cmd, dt, dyn=None, external_wrench=None):
    """Advance the world one period under the commanded joint torques.

    Contact springs are explicit; contact dampers act on the end-of-step
    foot velocity (their force is folded into the mass matrix), which
    keeps near-critical ground damping stable at the control rate. The
    realized forces are re-clamped afterwards: normals never pull, and
    tangentials respect the Coulomb limit with anchor slip.
    """
    model = world.model
    state = world.state
    ground = world.ground
    applied = world.bank.step(tau_cmd, state.qd[model.base_dofs :])
    world.last_applied = applied

    kin = Kinematics(model, state.q, state.qd)
    pos, vel = foot_points(model, kin)
    if dyn is None:
        dyn = compute_dynamics(model, state)

    rhs0 = dyn.S.T @ applied - dyn.c - dyn.g
    if external_wrench is not None:
        w = np.asarray(external_wrench, dtype=float)
        rhs0[: w.size] += w

    n_feet = len(model.feet)
    pens = np.zeros(n_feet)
    rates = np.zeros(n_feet)
    jacs = [None] * n_feet
    touching = []
    for i in range(n_feet):
        h = ground.profile.height(pos[i][0], world.t)
        pens[i] = h - pos[i][1]
        if pens[i] > 0.0:
            rates[i] = ground.profile.height_rate(pos[i][0], world.t)
            foot = model.feet[i]
            jacs[i] = point_jacobian(model, kin, foot.body, pos[i])
            touching.append(i)
            if world.anchors[i] is None:
                world.anchors[i] = pos[i][0]
        else:
            world.anchors[i] = None
            world.last_forces[i] = 0.0

    # sliding[i]: tangential force fixed at the Coulomb limit this step
    sliding = {}
    for _pass in range(3):
        force_q = rhs0.copy()
        m_eff = dyn.M.copy()
        expl = {}
        for i in touching:
            J = jacs[i]
            fz = ground.k_g * pens[i] + ground.d_g * (rates[i] - vel[i][1])
            fx = -ground.k_g * (pos[i][0] - world.anchors[i]) - ground.d_g * vel[i][0]
            if i in sliding:
                fx = sliding[i]
                force_q += J[0] * fx + J[1] * fz
                m_eff += dt * ground.d_g * np.outer(J[1], J[1])
            else:
                force_q += J.T @ np.array([fx, fz])
                m_eff += dt * ground.d_g * (J.T @ J)
            expl[i] = (fx, fz)
        try:
            qdd = np.linalg.solve(m_eff, force_q)
        except np.linalg.LinAlgError as e:
            raise SimulationDivergedError(
                f"mass matrix solve failed at t={world.t:.4f}", last_world=world
            ) from e

        # realized forces with the end-of-step damper velocities
        qd_new = state.qd + qdd * dt
        retry = False
        for i in touching:
            J = jacs[i]
            v_new = J @ qd_new
            fz = ground.k_g * pens[i] + ground.d_g * (rates[i] - v_new[1])
            if fz <= 0.0:
                # separating contact: the ground never pulls
                world.last_forces[i] = 0.0
                world.anchors[i] = None
                jacs[i] = None
                touching = [k for k in touching if k != i]
                sliding.pop(i, None)
                retry = True
                break
            if i in sliding:
                fx = sliding[i]
                limit = ground.mu * fz
                fx = np.clip(fx, -limit, limit)
                world.anchors[i] = pos[i][0] + (fx + ground.d_g * v_new[0]) / ground.k_g
            else:
                fx = -ground.k_g * (pos[i][0] - world.anchors[i]) - ground.d_g * v_new[0]
                limit = ground.mu * fz
                if abs(fx) > limit:
                    sliding[i] = np.sign(fx) * limit
                    retry = True
                    break
            world.last_forces[i] = (fx, fz)
        if not retry:
            break

    q_new = state.q + state.qd * dt + 0.5 * qdd * dt * dt
    if model.pitch_index is not None:
        q_new[model.pitch_index] = wrap_angle(q_new[model.pitch_index])
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(qd_new))):
        raise SimulationDivergedError(
            f"non-finite state at t={world.t:.4f}", last_world=world
        )
    state.q = q_new
    state.qd = qd_new
    world.t += dt
    return world


# ---------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    """Scripted run: references, stance schedule, terrain and disturbances."""

    name: str
    duration: float
    ground: GroundModel
    com_ref: object                 # t -> (x(3), xd(3), xdd(3))
    stance: object                  # t -> tuple of bools per foot
    swing_sample: object = None     # (foot, t) -> (pos, vel, acc) or None
    foot_ref: object = None         # (foot, t) -> planned foot position
    disturbance: object = None      # t -> base wrench (fx, fz, moment)
    dt: float = DEFAULT_DT
    score_start: float = 1.0
    noise_std: float = 0.0
    base_z: float = 0.52

    def validate(self):
        if self.duration <= 0 or self.dt <= 0:
            raise ValueError("scenario duration and dt must be positive")
        if self.score_start >= self.duration:
            self.score_start = 0.5 * self.duration
        return self


def _constant_com_ref(x0):
    x0 = np.asarray(x0, dtype=float)
    zeros = np.zeros(3)

    def ref(t):
        return x0, zeros, zeros

    return ref


def scripted_com_reference(gait, model, **params):
    """Reference trajectories and stance schedule for the built-in gaits.

    stand: constant pose. crawl: statically stable walk, one swing leg at
    a time, with a twice-differentiable com profile covering
    step_length * n_cycles of forward travel.
    """
    st = standing_state(model, base_z=params.get("base_z", 0.52))
    com0, _ = com_state(model, st)
    x0 = np.array([com0[0], com0[1], 0.0])

    if gait == "stand":
        duration = params.get("duration", 6.0)
        return dict(
            com_ref=_constant_com_ref(x0),
            stance=lambda t: (True,) * LEG_COUNT,
            swing_sample=None,
            foot_ref=None,
            duration=duration,
        )

    if gait == "crawl":
        step_length = params.get("step_length", 0.1)
        n_cycles = int(params.get("n_cycles", 10))
        cycle_time = params.get("cycle_time", 2.4)
        swing_time = params.get("swing_time", 0.45)
        apex = params.get("apex", 0.06)
        settle = params.get("settle", 1.0)
        total = settle + n_cycles * cycle_time + settle
        distance = step_length * n_cycles
        walk_time = n_cycles * cycle_time

        hips = [model.origin[3 + 2 * k][0] for k in range(LEG_COUNT)]
        order = (3, 2, 1, 0)  # rear feet step first, then the front pair

        def com_profile(t):
            s = min(max((t - settle) / walk_time, 0.0), 1.0)
            blend = s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
            dbds = 30.0 * s * s * (1.0 - s) ** 2
            d2bds2 = 60.0 * s * (1.0 - 3.0 * s + 2.0 * s * s)
            inside = 0.0 < s < 1.0
            x = x0 + np.array([distance * blend, 0.0, 0.0])
            xd = np.array([distance * dbds / walk_time if inside else 0.0, 0.0, 0.0])
            xdd = np.array(
                [distance * d2bds2 / walk_time**2 if inside else 0.0, 0.0, 0.0]
            )
            return x, xd, xdd

        windows = []  # (foot, t0, t1, trajectory)
        for cyc in range(n_cycles):
            for slot, foot in enumerate(order):
                t0 = settle + cyc * cycle_time + slot * (cycle_time / LEG_COUNT) + 0.05
                start = np.array([hips[foot] + cyc * step_length, 0.0])
                end = np.array([hips[foot] + (cyc + 1) * step_length, 0.0])
                windows.append(
                    (foot, t0, t0 + swing_time, make_swing_trajectory(start, end, apex, swing_time))
                )

        def stance(t):
            flags = [True] * LEG_COUNT
            for foot, t0, t1, _tr in windows:
                if t0 <= t < t1:
                    flags[foot] = False
            return tuple(flags)

        def swing_sample(foot, t):
            for f, t0, t1, tr in windows:
                if f == foot and t0 <= t < t1:
                    return tr.sample(t - t0)
            return None

        def foot_ref(foot, t):
            pos = np.array([hips[foot], 0.0])
            steps_done = 0
            for f, t0, t1, tr in windows:
                if f != foot:
                    continue
                if t >= t1:
                    steps_done += 1
                elif t0 <= t < t1:
                    return tr.sample(t - t0)[0]
            return pos + np.array([steps_done * step_length, 0.0])

        return dict(
            com_ref=com_profile,
            stance=stance,
            swing_sample=swing_sample,
            foot_ref=foot_ref,
            duration=total,
        )

    raise ValueError(f"unknown gait {gait!r}")


def make_scenario(name, model, ground=None, **params):
    """Built-in scenarios used by the command line and the test suite."""
    ground = ground or GroundModel()
    if name == "stand":
        parts = scripted_com_reference("stand", model, **params)
        return Scenario(name=name, ground=ground, **parts).validate()
    if name == "stand_push":
        duration = params.pop("duration", 6.0)
        push = params.pop("push_force", 120.0)
        window = params.pop("push_window", (2.0, 3.0))
        parts = scripted_com_reference("stand", model, duration=duration, **params)

        def disturbance(t):
            if window[0] <= t < window[1]:
                return np.array([push, 0.0, 0.0])
            return None

        return Scenario(name=name, ground=ground, disturbance=disturbance, **parts).validate()
    if name == "plank":
        duration = params.pop("duration", 7.0)
        rise = params.pop("rise", 0.1)
        ground.profile = RampProfile(rise=rise, t_start=2.0, t_ramp=2.0, region_x_min=0.0)
        parts = scripted_com_reference("stand", model, duration=duration, **params)
        return Scenario(name=name, ground=ground, **parts).validate()
    if name == "seesaw":
        duration = params.pop("duration", 10.0)
        ground.profile = SeesawProfile(
            amplitude=params.pop("amplitude", 0.06), period=params.pop("period", 4.0)
        )
        parts = scripted_com_reference("stand", model, duration=duration, **params)
        return Scenario(name=name, ground=ground, **parts).validate()
    if name == "crawl":
        parts = scripted_com_reference("crawl", model, **params)
        return Scenario(name=name, ground=ground, score_start=0.5, **parts).validate()
    raise ValueError(f"unknown scenario {name!r}")


# ---------------------------------------------------------------------------
# controllers


@dataclass
class ControllerConfig:
    kind: str = "imc"               # imc | baseline
    com_kp: float = 100.0
    com_kd: float = 20.0
    swing_kp: float = DEFAULT_SWING_KP
    swing_kd: float = DEFAULT_SWING_KD
    mu: float = 0.7
    filters: ImcFilterConfig = field(default_factory=ImcFilterConfig)
    nominal: NominalActuatorModel = field(default_factory=NominalActuatorModel)
    decoupling: DecouplingConfig = field(default_factory=DecouplingConfig)
    hinge_enabled: bool = True
    deadzone_width: float = 0.0
    baseline_kp: float = 300.0
    baseline_kd: float = 15.0

    def com_gains(self):
        return PdGains(kp=np.full(3, self.com_kp), kd=np.full(3, self.com_kd))

    def swing_gains(self):
        return PdGains(kp=np.full(2, self.swing_kp), kd=np.full(2, self.swing_kd))

    def validate(self):
        if self.kind not in ("imc", "baseline"):
            raise ValueError(f"unknown controller kind {self.kind!r}")
        return self


@dataclass
class ActuatorParams:
    k: float = 1.0
    eta: float = 0.02
    eta_d: float = 0.003
    stiction: float = 0.0


# ---------------------------------------------------------------------------
# logging


class SimLog:
    """Uniform-rate run record, exportable as a flat CSV."""

    def __init__(self, model, n_steps, dt, foot_names):
        self.dt = dt
        self.foot_names = list(foot_names)
        self.t = np.zeros(n_steps)
        self.q = np.zeros((n_steps, model.dof))
        self.qd = np.zeros((n_steps, model.dof))
        self.com = np.zeros((n_steps, 3))
        self.com_ref = np.zeros((n_steps, 3))
        self.foot_force = np.zeros((n_steps, len(foot_names), 2))
        self.foot_force_ref = np.zeros((n_steps, len(foot_names), 2))
        self.contact_flag = np.zeros((n_steps, len(foot_names)), dtype=int)
        self.tau_cmd = np.zeros((n_steps, model.n_actuated))
        self.tau_applied = np.zeros((n_steps, model.n_actuated))
        self.qp_time_us = np.zeros(n_steps)
        self.n = 0

    def append(self, **kw):
        i = self.n
        for key, val in kw.items():
            getattr(self, key)[i] = val
        self.n += 1

    def truncate(self):
        for name in ("t", "q", "qd", "com", "com_ref", "foot_force", "foot_force_ref",
                     "contact_flag", "tau_cmd", "tau_applied", "qp_time_us"):
            setattr(self, name, getattr(self, name)[: self.n])
        return self

    def columns(self):
        names = ["t"]
        names += [f"q{i}" for i in range(self.q.shape[1])]
        names += [f"qd{i}" for i in range(self.qd.shape[1])]
        names += ["com_x", "com_z", "com_pitch"]
        for f in self.foot_names:
            names += [f"{f}_fx", f"{f}_fz", f"{f}_fx_ref", f"{f}_fz_ref", f"{f}_contact"]
        for j in range(self.tau_cmd.shape[1]):
            names += [f"j{j}_tau_cmd", f"j{j}_tau_applied"]
        names.append("qp_time_us")
        return names

    def matrix(self):
        cols = [self.t[:, None], self.q, self.qd, self.com]
        for k in range(len(self.foot_names)):
            cols += [
                self.foot_force[:, k],
                self.foot_force_ref[:, k],
                self.contact_flag[:, k : k + 1].astype(float),
            ]
        for j in range(self.tau_cmd.shape[1]):
            cols += [self.tau_cmd[:, j : j + 1], self.tau_applied[:, j : j + 1]]
        cols.append(self.qp_time_us[:, None])
        return np.hstack(cols)

    def to_csv(self, path):
        data = self.matrix()
        header = ",".join(self.columns())
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    def summary(self):
        """Tracking and timing figures over the scoring window."""
        mask = self.t >= getattr(self, "score_start", 0.0)
        err = self.com[mask] - self.com_ref[mask]
        rms = np.sqrt(np.mean(err**2, axis=0))
        stance = self.contact_flag[mask].astype(bool)
        ferr = self.foot_force[mask] - self.foot_force_ref[mask]
        ferr_n = ferr[:, :, 1][stance]
        ref_n = self.foot_force_ref[mask][:, :, 1][stance]
        force_rms = float(np.sqrt(np.mean(ferr_n**2))) if ferr_n.size else 0.0
        mean_ref = float(np.mean(ref_n)) if ref_n.size else 0.0
        qp = self.qp_time_us[mask]
        return {
            "rms_com_x": float(rms[0]),
            "rms_com_z": float(rms[1]),
            "rms_com_pitch": float(rms[2]),
            "max_abs_pitch_deg": float(np.degrees(np.abs(self.com[mask][:, 2]).max())),
            "force_rms_n": force_rms,
            "force_rms_rel": force_rms / mean_ref if mean_ref else 0.0,
            "min_normal_force": float(self.foot_force[:, :, 1].min()),
            "qp_mean_us": float(qp.mean()) if qp.size else 0.0,
            "qp_p95_us": float(np.percentile(qp, 95)) if qp.size else 0.0,
        }


# ---------------------------------------------------------------------------
# closed loop


def initial_world(model, scenario, actuators=None, seed=0, settle_penetration=True):
    st = standing_state(model, base_z=scenario.base_z)
    if settle_penetration:
        # start close to the static equilibrium penetration to cut transients
        weight = model.total_mass * 9.81
        pen = weight / LEG_COUNT / scenario.ground.k_g
        st.q[1] -= pen
    bank_params = actuators or ActuatorParams()
    bank = ActuatorBank(
        model.n_actuated,
        k=bank_params.k,
        eta=bank_params.eta,
        eta_d=bank_params.eta_d,
        stiction=bank_params.stiction,
        dt=scenario.dt,
    )
    return SimWorld(
        model, st, scenario.ground, bank, noise_std=scenario.noise_std, seed=seed
    )


def _com_measurement(model, state, kin):
    com, vcom = com_state(model, state, kin=kin)
    pitch = state.q[model.pitch_index]
    pitch_rate = state.qd[model.pitch_index]
    x = np.array([com[0], com[1], pitch])
    xd = np.array([vcom[0], vcom[1], pitch_rate])
    return x, xd


class _BaselineReference:
    """Joint-space references for the inverse-dynamics comparison controller."""

    def __init__(self, model, scenario):
        self.model = model
        self.scenario = scenario
        st = standing_state(model, base_z=scenario.base_z)
        com0, _ = com_state(model, st)
        self.base_offset = np.array([st.q[0] - com0[0], st.q[1] - com0[1], 0.0])
        self.hips = [model.origin[3 + 2 * k][0] for k in range(LEG_COUNT)]

    def q_ref(self, t):
        x, _, _ = self.scenario.com_ref(t)
        base = np.array([x[0] + self.base_offset[0], x[1] + self.base_offset[1], x[2]])
        q = np.zeros(self.model.dof)
        q[:3] = base
        for k, leg in enumerate(LEG_NAMES):
            if self.scenario.foot_ref is not None:
                target = self.scenario.foot_ref(k, t)
            else:
                target = np.array([self.hips[k], 0.0])
            hip, knee = leg_ik(self.model, leg, base, target)
            q[3 + 2 * k] = hip
            q[4 + 2 * k] = knee
        return q

    def sample(self, t, dt):
        qm, q0, qp = self.q_ref(t - dt), self.q_ref(t), self.q_ref(t + dt)
        qd = (qp - qm) / (2.0 * dt)
        qdd = (qp - 2.0 * q0 + qm) / (dt * dt)
        return q0, qd, qdd


def run_scenario(scenario, controller, model, actuators=None, seed=0):
    """Execute the closed loop and return the run log.

    On a simulation fault the log collected so far is attached to the
    raised error.
    """
    scenario.validate()
    controller.validate()
    dt = scenario.dt
    n_steps = int(round(scenario.duration / dt))
    world = initial_world(model, scenario, actuators=actuators, seed=seed)
    log = SimLog(model, n_steps, dt, [f.name for f in model.feet])
    log.score_start = scenario.score_start

    pyramid = FrictionPyramid(mu=controller.mu)
    com_gains = controller.com_gains()
    swing_gains = controller.swing_gains()
    channels = [
        [
            ImcChannel(controller.nominal, controller.filters, dt,
                       hinge_enabled=False, deadzone_width=controller.deadzone_width),
            ImcChannel(controller.nominal, controller.filters, dt,
                       hinge_enabled=controller.hinge_enabled,
                       deadzone_width=controller.deadzone_width),
        ]
        for _ in range(LEG_COUNT)
    ]
    prev_stance = None
    warm = None
    baseline_ref = _BaselineReference(model, scenario) if controller.kind == "baseline" else None

    try:
        for step in range(n_steps):
            t = world.t
            state = world.state
            kin = Kinematics(model, state.q, state.qd)
            dyn = compute_dynamics(model, state)
            pos, vel = foot_points(model, kin)

            stance_flags = tuple(scenario.stance(t))
            stance = [i for i, s in enumerate(stance_flags) if s]
            swing = [i for i, s in enumerate(stance_flags) if not s]
            if prev_stance is not None and stance_flags != prev_stance:
                for i in range(LEG_COUNT):
                    if stance_flags[i] != prev_stance[i]:
                        channels[i][0].reset()
                        channels[i][1].reset()
                warm = None
            prev_stance = stance_flags

            # com correction and force distribution over the stance feet
            x_meas, xd_meas = _com_measurement(model, state, kin)
            x_ref, xd_ref, xdd_ref = scenario.com_ref(t)
            ref = ComReference(x_ref=x_ref, xd_ref=xd_ref, xdd_ref=xdd_ref)
            xdd_corr = pd_correct(ref, x_meas, xd_meas, com_gains)
            comsub = build_com_subsystem(model, state, pos[stance], kin=kin)
            F_r = desired_net_wrench(comsub, xdd_corr)
            t_qp = time.perf_counter()
            lam_ref, qp_sol = distribute_forces(F_r, comsub.Jc_com, pyramid, warm_start=warm)
            qp_us = (time.perf_counter() - t_qp) * 1e6
            warm = qp_sol.active_set

            measured = world.measured_forces()
            lam_meas = measured[stance].reshape(-1)

            if controller.kind == "imc":
                Jc = stacked_foot_jacobian(model, kin, stance)
                jc_bias = stacked_foot_bias(model, kin, state.qd, stance)
                cs = build_contact_subsystem(dyn, Jc, jc_bias)
                u = np.zeros(2 * len(stance))
                for slot, foot in enumerate(stance):
                    u[2 * slot] = channels[foot][0].step(lam_ref[2 * slot], lam_meas[2 * slot])
                    u[2 * slot + 1] = channels[foot][1].step(
                        lam_ref[2 * slot + 1], lam_meas[2 * slot + 1]
                    )
                tau_c = feedback_linearize(cs, -u)

                tau_nc = None
                snc = None
                if swing:
                    Jnc = stacked_foot_jacobian(model, kin, swing)
                    jnc_bias = stacked_foot_bias(model, kin, state.qd, swing)
                    nc = build_noncontact_subsystem(dyn, Jnc, jnc_bias, Jc)
                    xs = np.concatenate([pos[i] for i in swing])
                    xds = np.concatenate([vel[i] for i in swing])
                    refs = [scenario.swing_sample(i, t) for i in swing]
                    xr = np.concatenate([r[0] if r else pos[i] for r, i in zip(refs, swing)])
                    xdr = np.concatenate([r[1] if r else np.zeros(2) for r in refs])
                    xddr = np.concatenate([r[2] if r else np.zeros(2) for r in refs])
                    gains = PdGains(
                        kp=np.tile(swing_gains.kp, len(swing)),
                        kd=np.tile(swing_gains.kd, len(swing)),
                    )
                    tau_nc = swing_track(nc, xddr, xr, xdr, xs, xds, gains, lambda_cmd=u)
                    snc = nc.Snc

                tau = map_subsystem_torques(tau_c, tau_nc, cs.Sc, snc, controller.decoupling)
            else:
                q_ref, qd_ref, qdd_des = baseline_ref.sample(t, dt)
                Jc = stacked_foot_jacobian(model, kin, stance)
                full = dyn.M @ qdd_des + dyn.c + dyn.g - Jc.T @ lam_ref
                tau = full[model.base_dofs :]
                tau += controller.baseline_kp * (q_ref - state.q)[model.base_dofs :]
                tau += controller.baseline_kd * (qd_ref - state.qd)[model.base_dofs :]

            force_ref = np.zeros((LEG_COUNT, 2))
            for slot, foot in enumerate(stance):
                force_ref[foot] = lam_ref[2 * slot : 2 * slot + 2]

            log.append(
                t=t,
                q=state.q,
                qd=state.qd,
                com=x_meas,
                com_ref=x_ref,
                foot_force=measured,
                foot_force_ref=force_ref,
                contact_flag=np.asarray(stance_flags, dtype=int),
                tau_cmd=tau,
                tau_applied=world.last_applied,
                qp_time_us=qp_us,
            )

            wrench = scenario.disturbance(t) if scenario.disturbance else None
            step_world(world, tau, dt, dyn=dyn, external_wrench=wrench)
    except SimulationDivergedError as e:
        e.log = log.truncate()
        raise

    return log.truncate()
