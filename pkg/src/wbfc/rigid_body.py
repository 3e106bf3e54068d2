"""Planar rigid-body dynamics for point-foot legged robots.

Conventions used throughout the package:

* The robot lives in a vertical plane with coordinates (x, z), z up.
  Angles are measured counterclockwise in that plane; gravity is
  (0, -9.81) m/s^2 by default.
* Planar spatial motion vectors are (omega, vx, vz); force vectors are
  (moment, fx, fz), both taken about the frame origin.
* A floating base is modelled as a chain of one-dof joints (prismatic x,
  prismatic z, revolute pitch) carried by massless connector bodies, so
  every body in the compiled tree has exactly one degree of freedom.
* The equations of motion are written M(q) qdd + c(q, qd) + g(q) =
  S^T tau + J^T lambda, with g = dV/dq (gravity appears on the left).
  A resting robot therefore satisfies g = Jc^T lambda with lambda the
  upward ground reaction.

The inertia matrix comes from the composite-rigid-body recursion and the
bias/gravity vectors from the recursive Newton-Euler pass, both in their
planar forms.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import SingularTaskError

GRAVITY = np.array([0.0, -9.81])

# joint types of the compiled one-dof tree
PRISMATIC_X = "px"
PRISMATIC_Z = "pz"
REVOLUTE = "rev"

RANK_TOL = 1e-8


def _perp(v):
    """2D cross product with a +1 out-of-plane axis: omega x v."""
    return np.array([-v[1], v[0]])


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def spatial_inertia(mass, com, inertia):
    """3x3 planar spatial inertia about the body frame origin.

    mass in kg, com the centre-of-mass offset in the body frame (m),
    inertia the rotational inertia about the com (kg m^2).
    """
    cx, cz = com
    return np.array(
        [
            [inertia + mass * (cx * cx + cz * cz), -mass * cz, mass * cx],
            [-mass * cz, mass, 0.0],
            [mass * cx, 0.0, mass],
        ]
    )


def _xform(theta, r):
    """Planar motion transform from a frame to one at r, rotated by theta."""
    rt = _rot(theta).T
    x = np.zeros((3, 3))
    x[0, 0] = 1.0
    x[1:, 0] = rt @ _perp(r)
    x[1:, 1:] = rt
    return x


def _crm(v):
    """Planar motion cross-product operator."""
    w, vx, vz = v
    return np.array([[0.0, 0.0, 0.0], [vz, 0.0, -w], [-vx, w, 0.0]])


def _crf(v):
    """Planar force cross-product operator (= -crm(v).T)."""
    w, vx, vz = v
    return np.array([[0.0, -vz, vx], [0.0, 0.0, -w], [0.0, w, 0.0]])


_AXIS = {
    REVOLUTE: np.array([1.0, 0.0, 0.0]),
    PRISMATIC_X: np.array([0.0, 1.0, 0.0]),
    PRISMATIC_Z: np.array([0.0, 0.0, 1.0]),
}


@dataclass
class Link:
    """One rigid segment of the robot: a joint plus the body it carries."""

    name: str
    parent: int                 # index into the compiled body list, -1 = world
    joint_type: str             # px | pz | rev
    origin: np.ndarray          # joint position in the parent frame (m)
    mass: float
    com: np.ndarray             # com offset in this body frame (m)
    inertia: float              # rotational inertia about the com (kg m^2)
    limits: tuple = (-np.inf, np.inf)


@dataclass
class Foot:
    name: str
    body: int                   # body the contact point is rigidly attached to
    offset: np.ndarray          # point position in the body frame (m)


class RobotModel:
    """Kinematic tree of one-dof joints with point feet.

    Bodies are topologically ordered (parents before children). The first
    ``base_dofs`` joints form the floating base (0 for a fixed-base arm,
    2 for x/z, 3 for x/z/pitch); the remainder are actuated.
    """

    def __init__(self, name, links, feet, base_dofs, gravity=GRAVITY):
        self.name = name
        self.links = list(links)
        self.feet = list(feet)
        self.base_dofs = int(base_dofs)
        self.gravity = np.asarray(gravity, dtype=float)
        self.dof = len(self.links)
        self.n_actuated = self.dof - self.base_dofs

        self.parent = np.array([l.parent for l in self.links], dtype=int)
        self.joint_type = [l.joint_type for l in self.links]
        self.origin = np.array([l.origin for l in self.links], dtype=float)
        self.mass = np.array([l.mass for l in self.links], dtype=float)
        self.com = np.array([l.com for l in self.links], dtype=float)
        self.inertia = np.array([l.inertia for l in self.links], dtype=float)
        self.axis = np.array([_AXIS[t] for t in self.joint_type])
        self.body_inertia = [
            spatial_inertia(self.mass[i], self.com[i], self.inertia[i])
            for i in range(self.dof)
        ]
        self.total_mass = float(np.sum(self.mass))

        # ancestor joint lists, used by the point-Jacobian assembly
        self.ancestors = []
        for i in range(self.dof):
            chain = []
            j = i
            while j >= 0:
                chain.append(j)
                j = self.parent[j]
            self.ancestors.append(chain[::-1])

        self._validate()

    def _validate(self):
        if self.base_dofs not in (0, 2, 3):
            raise ValueError("base_dofs must be 0, 2 or 3")
        for i, l in enumerate(self.links):
            if l.parent >= i:
                raise ValueError("links must be topologically ordered (tree, acyclic)")
            if l.mass < 0 or l.inertia < 0:
                raise ValueError(f"link {l.name}: negative mass or inertia")
        real = [l for l in self.links if l.mass > 0]
        if not real:
            raise ValueError("model has no massive links")
        for f in self.feet:
            if not (0 <= f.body < self.dof):
                raise ValueError(f"foot {f.name}: invalid body index")
        if self.total_mass <= 0:
            raise ValueError("total mass must be positive")

    @property
    def pitch_index(self):
        """Generalized-coordinate index of the base pitch, or None."""
        return 2 if self.base_dofs == 3 else None

    def selection_matrix(self):
        """Actuation selection: picks the actuated joints, entries in {0, 1}."""
        s = np.zeros((self.n_actuated, self.dof))
        for k in range(self.n_actuated):
            s[k, self.base_dofs + k] = 1.0
        return s

    def foot_index(self, name):
        for k, f in enumerate(self.feet):
            if f.name == name:
                return k
        raise KeyError(f"unknown foot id {name!r}")

    def actuated_limits(self):
        return [self.links[self.base_dofs + k].limits for k in range(self.n_actuated)]


@dataclass
class GeneralizedState:
    """Generalized coordinates and velocities. Dimension must match the model."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.qd = np.asarray(self.qd, dtype=float).copy()
        if self.q.shape != self.qd.shape or self.q.ndim != 1:
            raise ValueError("q and qd must be 1-d arrays of equal length")

    def check(self, model):
        if self.q.size != model.dof:
            raise ValueError(
                f"state dimension {self.q.size} does not match model dof {model.dof}"
            )
        return self


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = -((-a + np.pi) % (2.0 * np.pi) - np.pi)
    return w


@dataclass
class JointSpaceDynamics:
    M: np.ndarray
    c: np.ndarray
    g: np.ndarray
    S: np.ndarray

    _cho: tuple = field(default=None, repr=False, compare=False)

    def minv_mul(self, rhs):
        """Solve M x = rhs, caching the Cholesky factor."""
        if self._cho is None:
            self._cho = cho_factor(self.M, lower=True, check_finite=False)
        return cho_solve(self._cho, rhs, check_finite=False)


@dataclass
class TaskSpaceModel:
    """Dynamics terms of the whole-body model expressed in a task space."""

    Mx: np.ndarray
    Cx: np.ndarray
    Gx: np.ndarray
    Sx: np.ndarray
    Jcx: np.ndarray
    Jx: np.ndarray
    Jx_dagger: np.ndarray


class Kinematics:
    """Forward-kinematics snapshot: world pose and velocity of every body.

    theta, omega are per-body angles/rates; pos, vel the body-frame origins
    (which coincide with the joint pivots); com_pos, com_vel the link
    centres of mass. Used by the Jacobian assembly and the ground model.
    """

    __slots__ = ("theta", "omega", "pos", "vel", "com_pos", "com_vel", "axis_dir", "axis_rate")

    def __init__(self, model, q, qd=None):
        n = model.dof
        if qd is None:
            qd = np.zeros(n)
        self.theta = np.zeros(n)
        self.omega = np.zeros(n)
        self.pos = np.zeros((n, 2))
        self.vel = np.zeros((n, 2))
        self.com_pos = np.zeros((n, 2))
        self.com_vel = np.zeros((n, 2))
        # world direction of prismatic axes and their rates (rotating parents)
        self.axis_dir = np.zeros((n, 2))
        self.axis_rate = np.zeros((n, 2))

        for i in range(n):
            p = model.parent[i]
            if p < 0:
                th_p, om_p = 0.0, 0.0
                pos_p = np.zeros(2)
                vel_p = np.zeros(2)
            else:
                th_p, om_p = self.theta[p], self.omega[p]
                pos_p, vel_p = self.pos[p], self.vel[p]
            rp = _rot(th_p)
            off = rp @ model.origin[i]
            pivot = pos_p + off
            pivot_vel = vel_p + om_p * _perp(off)
            jt = model.joint_type[i]
            if jt == REVOLUTE:
                self.theta[i] = th_p + q[i]
                self.omega[i] = om_p + qd[i]
                self.pos[i] = pivot
                self.vel[i] = pivot_vel
            else:
                ax = np.array([1.0, 0.0]) if jt == PRISMATIC_X else np.array([0.0, 1.0])
                d = rp @ ax
                self.axis_dir[i] = d
                self.axis_rate[i] = om_p * _perp(d)
                self.theta[i] = th_p
                self.omega[i] = om_p
                self.pos[i] = pivot + q[i] * d
                self.vel[i] = pivot_vel + qd[i] * d + q[i] * self.axis_rate[i]
            rc = _rot(self.theta[i]) @ model.com[i]
            self.com_pos[i] = self.pos[i] + rc
            self.com_vel[i] = self.vel[i] + self.omega[i] * _perp(rc)

    def point(self, model, body, offset):
        r = _rot(self.theta[body]) @ np.asarray(offset)
        p = self.pos[body] + r
        v = self.vel[body] + self.omega[body] * _perp(r)
        return p, v


def point_jacobian(model, kin, body, point):
    """Translational Jacobian (2 x dof) of a point fixed to a body."""
    J = np.zeros((2, model.dof))
    for j in model.ancestors[body]:
        if model.joint_type[j] == REVOLUTE:
            J[:, j] = _perp(point - kin.pos[j])
        else:
            J[:, j] = kin.axis_dir[j]
    return J


def _point_bias(model, kin, qd, body, point, point_vel):
    """Jdot qd for a body-fixed point, including rotating prismatic axes."""
    bias = np.zeros(2)
    for j in model.ancestors[body]:
        if model.joint_type[j] == REVOLUTE:
            bias += qd[j] * _perp(point_vel - kin.vel[j])
        else:
            bias += qd[j] * kin.axis_rate[j]
    return bias


def _resolve_feet(model, foot_ids):
    if foot_ids is None:
        return list(range(len(model.feet)))
    return [
        fid if isinstance(fid, (int, np.integer)) else model.foot_index(fid)
        for fid in foot_ids
    ]


def stacked_foot_jacobian(model, kin, foot_ids=None):
    """Stacked foot Jacobian from a prebuilt kinematics snapshot."""
    ids = _resolve_feet(model, foot_ids)
    rows = []
    for fid in ids:
        f = model.feet[fid]
        p, _ = kin.point(model, f.body, f.offset)
        rows.append(point_jacobian(model, kin, f.body, p))
    return np.vstack(rows)


def stacked_foot_bias(model, kin, qd, foot_ids=None):
    """Stacked Jdot qd terms matching stacked_foot_jacobian's row order."""
    ids = _resolve_feet(model, foot_ids)
    out = []
    for fid in ids:
        f = model.feet[fid]
        p, v = kin.point(model, f.body, f.offset)
        out.append(_point_bias(model, kin, qd, f.body, p, v))
    return np.concatenate(out)


def foot_jacobian(model, state, foot_ids=None):
    """Stacked translational Jacobian of the requested feet.

    Rows are ordered by foot id then axis (x, z). Singular configurations
    are not an error here; use jacobian_rank to interrogate rank.
    """
    state.check(model)
    if foot_ids is not None and len(foot_ids) == 0:
        raise ValueError("foot_set must be non-empty")
    kin = Kinematics(model, state.q, state.qd)
    return stacked_foot_jacobian(model, kin, foot_ids)


def foot_jacobian_bias(model, state, foot_ids=None):
    """Stacked Jdot qd terms matching foot_jacobian's row order."""
    state.check(model)
    kin = Kinematics(model, state.q, state.qd)
    return stacked_foot_bias(model, kin, state.qd, foot_ids)


def foot_points(model, kin):
    """World position and velocity of every foot from a kinematics snapshot."""
    pos, vel = [], []
    for f in model.feet:
        p, v = kin.point(model, f.body, f.offset)
        pos.append(p)
        vel.append(v)
    return np.array(pos), np.array(vel)


def foot_positions(model, state):
    kin = Kinematics(model, state.q, state.qd)
    return foot_points(model, kin)


def jacobian_rank(J, tol=RANK_TOL):
    """Numerical rank and smallest singular value of a task Jacobian."""
    sv = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(sv > tol * max(1.0, sv[0])))
    return rank, float(sv[-1]) if sv.size else 0.0


def rnea(model, q, qd, qdd, with_gravity=True):
    """Recursive Newton-Euler inverse dynamics (planar form).

    Returns the generalized force vector tau_full such that
    M qdd + c + g = tau_full for the given motion.
    """
    n = model.dof
    xup = [None] * n
    v = [None] * n
    a = [None] * n
    f = [None] * n
    if with_gravity:
        a0 = np.array([0.0, -model.gravity[0], -model.gravity[1]])
    else:
        a0 = np.zeros(3)
    for i in range(n):
        jt = model.joint_type[i]
        theta = q[i] if jt == REVOLUTE else 0.0
        r = model.origin[i].copy()
        if jt == PRISMATIC_X:
            r = r + np.array([q[i], 0.0])
        elif jt == PRISMATIC_Z:
            r = r + np.array([0.0, q[i]])
        xup[i] = _xform(theta, r)
        s = model.axis[i]
        vj = s * qd[i]
        aj = s * qdd[i]
        p = model.parent[i]
        if p < 0:
            v[i] = vj
            a[i] = xup[i] @ a0 + aj
        else:
            v[i] = xup[i] @ v[p] + vj
            a[i] = xup[i] @ a[p] + aj + _crm(v[i]) @ vj
        ib = model.body_inertia[i]
        f[i] = ib @ a[i] + _crf(v[i]) @ (ib @ v[i])
    tau = np.zeros(n)
    for i in range(n - 1, -1, -1):
        tau[i] = model.axis[i] @ f[i]
        p = model.parent[i]
        if p >= 0:
            f[p] = f[p] + xup[i].T @ f[i]
    return tau


def crba(model, q):
    """Composite-rigid-body inertia matrix (planar form)."""
    n = model.dof
    xup = [None] * n
    for i in range(n):
        jt = model.joint_type[i]
        theta = q[i] if jt == REVOLUTE else 0.0
        r = model.origin[i].copy()
        if jt == PRISMATIC_X:
            r = r + np.array([q[i], 0.0])
        elif jt == PRISMATIC_Z:
            r = r + np.array([0.0, q[i]])
        xup[i] = _xform(theta, r)
    ic = [ib.copy() for ib in model.body_inertia]
    M = np.zeros((n, n))
    for i in range(n - 1, -1, -1):
        p = model.parent[i]
        if p >= 0:
            ic[p] += xup[i].T @ ic[i] @ xup[i]
        fh = ic[i] @ model.axis[i]
        M[i, i] = model.axis[i] @ fh
        j = i
        while model.parent[j] >= 0:
            fh = xup[j].T @ fh
            j = model.parent[j]
            M[i, j] = M[j, i] = model.axis[j] @ fh
    return M


def compute_dynamics(model, state):
    """Joint-space dynamics terms M, c, g and the selection matrix."""
    state.check(model)
    M = crba(model, state.q)
    g = rnea(model, state.q, np.zeros(model.dof), np.zeros(model.dof), with_gravity=True)
    if np.any(state.qd):
        cg = rnea(model, state.q, state.qd, np.zeros(model.dof), with_gravity=True)
        c = cg - g
    else:
        c = np.zeros(model.dof)
    return JointSpaceDynamics(M=M, c=c, g=g, S=model.selection_matrix())


def dyn_consistent_pinv(J, M, dyn=None):
    """Inertia-weighted right pseudo-inverse M^-1 J^T (J M^-1 J^T)^-1.

    Raises SingularTaskError when J M^-1 J^T is rank deficient at the
    1e-8 tolerance. Accepts a JointSpaceDynamics to reuse its factor.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if dyn is not None:
        y = dyn.minv_mul(J.T)
    else:
        cf = cho_factor(M, lower=True, check_finite=False)
        y = cho_solve(cf, J.T, check_finite=False)
    a = J @ y
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= RANK_TOL * max(1.0, sv[0]):
        raise SingularTaskError(sv[-1])
    return np.linalg.solve(a.T, y.T).T


def project_to_task(dyn, Jx, Jx_dot_qd, Jc):
    """Project joint-space dynamics into the range space of a task Jacobian."""
    Jx = np.atleast_2d(Jx)
    jdag = dyn_consistent_pinv(Jx, dyn.M, dyn=dyn)
    Mx = jdag.T @ dyn.M @ jdag
    Cx = jdag.T @ dyn.c - Mx @ np.asarray(Jx_dot_qd, dtype=float)
    Gx = jdag.T @ dyn.g
    Sx = dyn.S @ jdag
    Jcx = (np.atleast_2d(Jc) @ jdag) if Jc is not None and np.size(Jc) else np.zeros((0, Jx.shape[0]))
    return TaskSpaceModel(Mx=Mx, Cx=Cx, Gx=Gx, Sx=Sx, Jcx=Jcx, Jx=Jx, Jx_dagger=jdag)


def com_state(model, state, kin=None):
    """Whole-body centre of mass position and velocity (2,), (2,)."""
    if kin is None:
        kin = Kinematics(model, state.q, state.qd)
    m = model.mass
    com = (m[:, None] * kin.com_pos).sum(axis=0) / model.total_mass
    vcom = (m[:, None] * kin.com_vel).sum(axis=0) / model.total_mass
    return com, vcom


def com_jacobian(model, state, kin=None):
    """Mass-weighted com Jacobian (2 x dof) and its Jdot qd bias (2,)."""
    if kin is None:
        kin = Kinematics(model, state.q, state.qd)
    J = np.zeros((2, model.dof))
    bias = np.zeros(2)
    for i in range(model.dof):
        if model.mass[i] == 0.0:
            continue
        w = model.mass[i] / model.total_mass
        J += w * point_jacobian(model, kin, i, kin.com_pos[i])
        bias += w * _point_bias(model, kin, state.qd, i, kin.com_pos[i], kin.com_vel[i])
    return J, bias


def centroidal_quantities(model, state, kin=None):
    """Rotational inertia about the com, its rate, and angular momentum.

    Returns (I_c, I_c_dot, h_ang) with h_ang the angular momentum of the
    whole body about its centre of mass.
    """
    if kin is None:
        kin = Kinematics(model, state.q, state.qd)
    m = model.mass
    com = (m[:, None] * kin.com_pos).sum(axis=0) / model.total_mass
    vcom = (m[:, None] * kin.com_vel).sum(axis=0) / model.total_mass
    r = kin.com_pos - com
    rd = kin.com_vel - vcom
    ic = float(np.sum(model.inertia) + np.sum(m * (r * r).sum(axis=1)))
    ic_dot = float(2.0 * np.sum(m * (r * rd).sum(axis=1)))
    h_ang = float(
        np.sum(model.inertia * kin.omega)
        + np.sum(m * (r[:, 0] * rd[:, 1] - r[:, 1] * rd[:, 0]))
    )
    return ic, ic_dot, h_ang


def total_energy(model, state, dyn=None):
    """Kinetic plus gravitational potential energy of the free system."""
    if dyn is None:
        dyn = compute_dynamics(model, state)
    kin = Kinematics(model, state.q, state.qd)
    ke = 0.5 * state.qd @ dyn.M @ state.qd
    pe = -float(np.sum(model.mass * (kin.com_pos @ model.gravity)))
    return ke + pe


# ---------------------------------------------------------------------------
# model factories


def _leg_links(name, parent, hip_x, l_upper, l_lower, m_upper, m_lower, i_upper, i_lower, limits):
    hip = Link(
        name=f"{name}_hip", parent=parent, joint_type=REVOLUTE,
        origin=np.array([hip_x, 0.0]), mass=m_upper,
        com=np.array([0.0, -l_upper / 2.0]), inertia=i_upper, limits=limits[0],
    )
    knee = Link(
        name=f"{name}_knee", parent=None, joint_type=REVOLUTE,
        origin=np.array([0.0, -l_upper]), mass=m_lower,
        com=np.array([0.0, -l_lower / 2.0]), inertia=i_lower, limits=limits[1],
    )
    return hip, knee


QUADRUPED_DEFAULTS = dict(
    trunk_mass=68.0,
    trunk_inertia=3.5,
    leg_upper_mass=2.0,
    leg_lower_mass=1.0,
    leg_upper_inertia=0.021,
    leg_lower_inertia=0.011,
    leg_upper_length=0.35,
    leg_lower_length=0.35,
    hip_x=(0.37, 0.31, -0.31, -0.37),
    hip_limits=(-2.6, 2.6),
    knee_limits=(-2.8, 2.8),
)

LEG_NAMES = ("lf", "rf", "lh", "rh")
# knee bend direction used by the inverse kinematics: front legs bend back
LEG_ELBOW = {"lf": -1.0, "rf": -1.0, "lh": 1.0, "rh": 1.0}


def planar_quadruped(**overrides):
    """Planar quadruped: base (x, z, pitch) + 4 legs x 2 revolute = 11 dof.

    All parameters are overridable; defaults give an 80 kg robot with
    0.35 m leg segments and slightly staggered hips so all four feet
    occupy distinct ground positions.
    """
    p = dict(QUADRUPED_DEFAULTS)
    unknown = set(overrides) - set(p)
    if unknown:
        raise ValueError(f"unknown quadruped parameters: {sorted(unknown)}")
    p.update(overrides)

    links = [
        Link("base_x", -1, PRISMATIC_X, np.zeros(2), 0.0, np.zeros(2), 0.0),
        Link("base_z", 0, PRISMATIC_Z, np.zeros(2), 0.0, np.zeros(2), 0.0),
        Link("trunk", 1, REVOLUTE, np.zeros(2), p["trunk_mass"], np.zeros(2), p["trunk_inertia"]),
    ]
    feet = []
    hip_x = p["hip_x"]
    if len(hip_x) != 4:
        raise ValueError("hip_x must list four hip offsets")
    for name, hx in zip(LEG_NAMES, hip_x):
        hip, knee = _leg_links(
            name, 2, hx, p["leg_upper_length"], p["leg_lower_length"],
            p["leg_upper_mass"], p["leg_lower_mass"],
            p["leg_upper_inertia"], p["leg_lower_inertia"],
            (p["hip_limits"], p["knee_limits"]),
        )
        links.append(hip)
        knee.parent = len(links) - 1
        links.append(knee)
        feet.append(Foot(name, len(links) - 1, np.array([0.0, -p["leg_lower_length"]])))
    return RobotModel("planar_quadruped", links, feet, base_dofs=3)


def point_mass(mass=1.0):
    """Free point mass with x/z base coordinates and one contact point."""
    links = [
        Link("base_x", -1, PRISMATIC_X, np.zeros(2), 0.0, np.zeros(2), 0.0),
        Link("body", 0, PRISMATIC_Z, np.zeros(2), mass, np.zeros(2), 0.0),
    ]
    feet = [Foot("contact", 1, np.zeros(2))]
    return RobotModel("point_mass", links, feet, base_dofs=2)


def planar_arm(lengths=(0.5, 0.4), masses=(1.2, 0.8), inertias=None, base=(0.0, 0.0)):
    """Fixed-base serial arm, handy as an oracle target (2-link pendulum)."""
    if inertias is None:
        inertias = [m * l * l / 12.0 for m, l in zip(masses, lengths)]
    links = []
    parent = -1
    origin = np.asarray(base, dtype=float)
    for k, (l, m, i) in enumerate(zip(lengths, masses, inertias)):
        links.append(
            Link(f"link{k}", parent, REVOLUTE, origin, m, np.array([0.0, -l / 2.0]), i)
        )
        parent = k
        origin = np.array([0.0, -l])
    feet = [Foot("tip", len(links) - 1, np.array([0.0, -lengths[-1]]))]
    return RobotModel("planar_arm", links, feet, base_dofs=0)


def leg_ik(model, leg_name, base_pose, foot_target):
    """Closed-form two-link leg inverse kinematics.

    base_pose is (x, z, pitch); foot_target the desired world foot point.
    Returns (hip angle, knee angle) using the leg's preferred bend side.
    """
    fid = model.foot_index(leg_name)
    hip_body = 3 + 2 * fid
    hip_off = model.origin[hip_body]
    l1 = abs(model.origin[hip_body + 1][1])
    l2 = abs(model.feet[fid].offset[1])
    bx, bz, pitch = base_pose
    hip_world = np.array([bx, bz]) + _rot(pitch) @ hip_off
    d = _rot(pitch).T @ (np.asarray(foot_target) - hip_world)
    r2 = float(d @ d)
    reach = l1 + l2
    r2 = min(r2, (reach * (1 - 1e-9)) ** 2)
    ck = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    ck = np.clip(ck, -1.0, 1.0)
    knee = LEG_ELBOW[leg_name] * np.arccos(ck)
    # angle of the hip->foot segment measured from straight down
    phi = np.arctan2(d[0], -d[1])
    psi = np.arctan2(l2 * np.sin(knee), l1 + l2 * np.cos(knee))
    hip = phi - psi
    return float(hip), float(knee)


def standing_state(model, base_z=0.52, base_x=0.0, foot_x=None):
    """Configuration with all feet on the ground plane z = 0."""
    if foot_x is None:
        foot_x = [model.origin[3 + 2 * k][0] + base_x for k in range(len(model.feet))]
    q = np.zeros(model.dof)
    q[0], q[1] = base_x, base_z
    for k, leg in enumerate(LEG_NAMES):
        hip, knee = leg_ik(model, leg, (base_x, base_z, 0.0), (foot_x[k], 0.0))
        q[3 + 2 * k] = hip
        q[4 + 2 * k] = knee
    return GeneralizedState(q=q, qd=np.zeros(model.dof))
