"""Centre-of-mass tracking: PD correction, net wrench, and QP force distribution.

The contact-force references are found by a strictly convex quadratic
program: minimize the net-wrench mismatch subject to unilateral normal
forces and a polyhedral inner approximation of the Coulomb cone. The
solver is a dual active-set iteration (the Goldfarb-Idnani scheme):
start from the unconstrained minimizer, repeatedly add the most violated
constraint, taking primal and dual steps and dropping blocking
constraints, until the working set is dually and primally consistent.
Every solution is certified against its KKT conditions.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DistributionInfeasibleError, NoContactError, QpSolverError

QP_REGULARIZATION = 1e-9
TIE_BREAK = 1e-6

KKT_STATIONARITY_TOL = 1e-8
KKT_FEASIBILITY_TOL = -1e-10
KKT_COMPLEMENTARITY_TOL = 1e-8


@dataclass
class PdGains:
    """Diagonal proportional (1/s^2) and derivative (1/s) gains."""

    kp: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        self.kp = np.atleast_1d(np.asarray(self.kp, dtype=float))
        self.kd = np.atleast_1d(np.asarray(self.kd, dtype=float))
        if np.any(self.kp < 0) or np.any(self.kd < 0):
            raise ValueError("gains must be non-negative")


@dataclass
class ComReference:
    """Planner output: either a com acceleration or contact forces.

    mode 'acceleration' uses (x_ref, xd_ref, xdd_ref); mode 'forces'
    uses lambda_ref together with (x_ref, xd_ref) for the feedback
    correction. Exactly one of xdd_ref / lambda_ref may be present.
    """

    x_ref: np.ndarray
    xd_ref: np.ndarray
    xdd_ref: np.ndarray = None
    lambda_ref: np.ndarray = None

    def __post_init__(self):
        self.x_ref = np.asarray(self.x_ref, dtype=float)
        self.xd_ref = np.asarray(self.xd_ref, dtype=float)
        if (self.xdd_ref is None) == (self.lambda_ref is None):
            raise ValueError("provide exactly one of xdd_ref or lambda_ref")

    @property
    def mode(self):
        return "acceleration" if self.xdd_ref is not None else "forces"


def pd_correct(ref, x, xd, gains):
    """Corrected com acceleration: feedforward plus damped error feedback.

    The correction opposes the tracking error (negative feedback), so
    positive gains stabilize a double integrator.
    """
    if ref.mode != "acceleration":
        raise ValueError("reference does not carry a desired acceleration")
    e = ref.x_ref - np.asarray(x, dtype=float)
    ed = ref.xd_ref - np.asarray(xd, dtype=float)
    return np.asarray(ref.xdd_ref, dtype=float) + gains.kd * ed + gains.kp * e


def desired_net_wrench(com, xdd_corr):
    """Net contact wrench realizing the corrected com acceleration."""
    xdd_corr = np.asarray(xdd_corr, dtype=float)
    if xdd_corr.shape != com.Gcom.shape:
        raise ValueError("acceleration dimension mismatch")
    return com.Mcom @ xdd_corr + com.Ccom + com.Gcom


class FrictionPyramid:
    """Polyhedral inner approximation of the Coulomb cone.

    For spatial contacts the cone is replaced by an inscribed pyramid
    whose base is a regular twelve-sided polygon (every generator lies on
    the cone, so the pyramid is conservative); the first facet is aligned
    with the contact-frame x axis. Planar contacts use the two-sided
    bound |fx| <= mu fz. One unilateral row (fn >= 0) is appended per
    contact in both cases.
    """

    def __init__(self, mu, sides=12, normal=(0.0, 0.0, 1.0)):
        if mu < 0:
            raise ValueError("friction coefficient must be non-negative")
        if sides < 3:
            raise ValueError("pyramid needs at least 3 sides")
        self.mu = float(mu)
        self.sides = int(sides)
        self.normal = np.asarray(normal, dtype=float)

    def rows_planar(self):
        """Constraint rows A with A (fx, fz) >= 0 for one planar contact."""
        return np.array(
            [
                [-1.0, self.mu],
                [1.0, self.mu],
                [0.0, 1.0],
            ]
        )

    def rows_spatial(self):
        """12 facet rows plus the unilateral row for one 3-d contact."""
        rows = []
        shrink = np.cos(np.pi / self.sides)
        for j in range(self.sides):
            psi = 2.0 * np.pi * j / self.sides
            rows.append([-np.cos(psi), -np.sin(psi), self.mu * shrink])
        rows.append([0.0, 0.0, 1.0])
        return np.array(rows)

    def generators(self):
        """Edge rays of the spatial pyramid; each lies on the exact cone."""
        gens = []
        for j in range(self.sides):
            phi = 2.0 * np.pi * j / self.sides + np.pi / self.sides
            gens.append([self.mu * np.cos(phi), self.mu * np.sin(phi), 1.0])
        return np.array(gens)

    def contact_rows(self, dim):
        if dim == 2:
            return self.rows_planar()
        if dim == 3:
            return self.rows_spatial()
        raise ValueError("contact dimension must be 2 or 3")


@dataclass
class QpProblem:
    """min 1/2 x^T H x + g^T x  subject to  A x >= b, H symmetric PD."""

    H: np.ndarray
    g: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.size
        if self.A is None or np.size(self.A) == 0:
            self.A = np.zeros((0, n))
            self.b = np.zeros(0)
        else:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            self.b = np.asarray(self.b, dtype=float)
        if self.H.shape != (n, n) or self.A.shape[1] != n or self.b.size != self.A.shape[0]:
            raise ValueError("inconsistent problem dimensions")


@dataclass
class QpSolution:
    x: np.ndarray
    active_set: list
    multipliers: np.ndarray
    iterations: int
    solve_time: float
    stationarity: float = 0.0
    worst_violation: float = 0.0
    complementarity: float = 0.0
    scale: float = 1.0

    def kkt_ok(self):
        """Certify the KKT conditions, tolerances relative to problem scale."""
        s = self.scale
        return (
            self.stationarity < KKT_STATIONARITY_TOL * s
            and self.worst_violation >= KKT_FEASIBILITY_TOL * s
            and np.all(self.multipliers >= 0)
            and self.complementarity < KKT_COMPLEMENTARITY_TOL * s
        )


def _certify(problem, x, mult):
    grad = problem.H @ x + problem.g - problem.A.T @ mult
    slack = problem.A @ x - problem.b if problem.A.size else np.zeros(0)
    stat = float(np.abs(grad).max()) if grad.size else 0.0
    worst = float(slack.min()) if slack.size else 0.0
    comp = float(np.abs(mult * slack).max()) if slack.size else 0.0
    scale = max(
        1.0,
        float(np.abs(problem.g).max()) if problem.g.size else 0.0,
        float(np.abs(mult).max()) if mult.size else 0.0,
    )
    return stat, worst, comp, scale


def qp_solve(problem, warm_start=None):
    """Dual active-set solve of a strictly convex inequality QP.

    Deterministic for a fixed constraint row order. warm_start is an
    optional iterable of row indices tried as the initial working set;
    when it already satisfies the optimality conditions the solve
    finishes immediately, otherwise the method falls back to a cold
    start. The answer never depends on the warm start.
    """
    t0 = time.perf_counter()
    H, g, A, b = problem.H, problem.g, problem.A, problem.b
    n = g.size
    m = A.shape[0]

    factor = None
    for bump in (0.0, QP_REGULARIZATION, 1e3 * QP_REGULARIZATION):
        try:
            factor = cho_factor(H + bump * np.eye(n), lower=True, check_finite=False)
            break
        except np.linalg.LinAlgError:
            continue
    if factor is None:
        raise QpSolverError("objective matrix is not positive definite")

    if warm_start is not None:
        sol = _try_active_set(problem, factor, list(warm_start), t0)
        if sol is not None:
            return sol

    x = -cho_solve(factor, g, check_finite=False)
    mult = np.zeros(m)
    active = []
    max_iter = max(10 * m, 25)
    iters = 0
    tol = 1e-11 * max(1.0, float(np.abs(b).max()) if m else 1.0)

    if m:
        hinv_at = cho_solve(factor, A.T, check_finite=False)   # n x m
        gram = A @ hinv_at                                     # dual Gram matrix
        slack = A @ x - b
    else:
        hinv_at = np.zeros((n, 0))
        gram = np.zeros((0, 0))
        slack = np.zeros(0)

    kmax = min(n, m) + 1
    gsub = np.empty((kmax, kmax))                              # active-set Gram block
    mult_act = np.empty(kmax)

    def _drop(k, idx):
        """Remove working-set entry idx from the incremental buffers."""
        gsub[idx:k - 1, :k] = gsub[idx + 1 : k, :k]
        gsub[:k - 1, idx : k - 1] = gsub[:k - 1, idx + 1 : k]
        mult_act[idx : k - 1] = mult_act[idx + 1 : k]
        active.pop(idx)

    while True:
        view = slack.copy()
        if active:
            view[active] = np.inf                              # never re-add active rows
        p = int(np.argmin(view)) if m else -1
        if p < 0 or view[p] >= -tol:
            break
        u_p = 0.0

        while True:
            iters += 1
            if iters > max_iter:
                raise QpSolverError(
                    f"active-set iteration limit {max_iter} exceeded", last_iterate=x
                )
            # step directions in the working-set KKT system; everything is
            # assembled from the precomputed dual Gram matrix
            k = len(active)
            if k:
                gp = gram[active, p]
                try:
                    r = np.linalg.solve(gsub[:k, :k], gp)
                except np.linalg.LinAlgError:
                    raise QpSolverError("degenerate working set", last_iterate=x)
                denom = float(gram[p, p] - gp @ r)
            else:
                r = np.zeros(0)
                denom = float(gram[p, p])

            # dual blocking step
            t1 = np.inf
            k_block = -1
            if k:
                blocking = r > 1e-14
                if blocking.any():
                    cand = np.where(blocking, mult_act[:k] / np.where(blocking, r, 1.0), np.inf)
                    k_block = int(np.argmin(cand))
                    t1 = float(cand[k_block])
            t2 = -slack[p] / denom if denom > 1e-13 * max(1.0, gram[p, p]) else np.inf

            if not np.isfinite(t1) and not np.isfinite(t2):
                raise QpSolverError("constraints are inconsistent (dual unbounded)", last_iterate=x)

            t = min(t1, t2)
            if np.isfinite(t2):
                z = hinv_at[:, p] - (hinv_at[:, active] @ r if k else 0.0)
                x += t * z
                dslack = gram[:, p] - (gram[:, active] @ r if k else 0.0)
                slack += t * dslack
            if k:
                mult_act[:k] -= t * r
            u_p += t
            if t == t2 and np.isfinite(t2):
                mult_act[k] = u_p
                gsub[:k, k] = gram[active, p]
                gsub[k, :k] = gsub[:k, k]
                gsub[k, k] = gram[p, p]
                active.append(p)
                slack[p] = 0.0
                break
            # dual step only: drop the blocking constraint and retry
            _drop(len(active), k_block)

    mult = np.zeros(m)
    if active:
        mult[active] = np.maximum(mult_act[: len(active)], 0.0)

    # polish: re-solve the working-set KKT system directly to remove the
    # accumulation error of the incremental steps
    polished = _solve_working_set(problem, active)
    if polished is not None:
        x_ref, lam = polished
        slack_ref = A @ x_ref - b if m else np.zeros(0)
        feas = slack_ref.min() >= -1e-9 * max(1.0, float(np.abs(b).max())) if m else True
        if np.all(lam >= 0) and feas:
            x = x_ref
            mult = np.zeros(m)
            mult[active] = lam

    mult = np.maximum(mult, 0.0)
    stat, worst, comp, scale = _certify(problem, x, mult)
    return QpSolution(
        x=x,
        active_set=sorted(active),
        multipliers=mult,
        iterations=iters,
        solve_time=time.perf_counter() - t0,
        stationarity=stat,
        worst_violation=worst,
        complementarity=comp,
        scale=scale,
    )


def _solve_working_set(problem, active):
    """Equality-constrained solve for a fixed working set via the KKT block."""
    H, g, A, b = problem.H, problem.g, problem.A, problem.b
    n = g.size
    k = len(active)
    if k == 0:
        try:
            return np.linalg.solve(H, -g), np.zeros(0)
        except np.linalg.LinAlgError:
            return None
    N = A[active].T
    kkt = np.block([[H, -N], [N.T, np.zeros((k, k))]])
    rhs = np.concatenate([-g, b[active]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None
    return sol[:n], sol[n:]


def _try_active_set(problem, factor, active, t0):
    """Solve assuming a working set; accept only if fully optimal."""
    A, b = problem.A, problem.b
    m = A.shape[0]
    active = sorted(set(a for a in active if 0 <= a < m))
    try:
        out = _solve_working_set(problem, active)
        if out is None:
            return None
        x, lam = out
        if np.any(lam < 0):
            return None
        mult = np.zeros(m)
        if active:
            mult[active] = lam
        slack = A @ x - b if m else np.zeros(0)
        if slack.size and slack.min() < -1e-10 * max(1.0, float(np.abs(b).max())):
            return None
        stat, worst, comp, scale = _certify(problem, x, mult)
        sol = QpSolution(
            x=x,
            active_set=sorted(active),
            multipliers=mult,
            iterations=0,
            solve_time=time.perf_counter() - t0,
            stationarity=stat,
            worst_violation=worst,
            complementarity=comp,
            scale=scale,
        )
        return sol if sol.kkt_ok() else None
    except np.linalg.LinAlgError:
        return None


def build_distribution_problem(F_r, Jc_com, pyramid, tie_break=TIE_BREAK):
    """Assemble the force-distribution QP for stacked planar contacts.

    The tie-break term regularizes only the null space of the wrench map,
    so it uniquely selects the minimum-norm force set without biasing the
    achieved net wrench: an exactly matchable wrench stays exact.
    """
    Jc_com = np.atleast_2d(Jc_com)
    nc = Jc_com.shape[0]
    if nc == 0:
        raise NoContactError("force distribution needs at least one contact")
    if nc % 2:
        raise ValueError("planar contacts contribute two force components each")
    Amap = Jc_com.T                                  # wrench = Amap @ lambda
    null_proj = np.eye(nc) - np.linalg.pinv(Amap) @ Amap
    scale = max(1.0, np.trace(Amap.T @ Amap) / nc)
    H = Amap.T @ Amap + tie_break * scale * null_proj
    g = -Amap.T @ np.asarray(F_r, dtype=float)
    rows = pyramid.contact_rows(2)
    n_contacts = nc // 2
    C = np.zeros((rows.shape[0] * n_contacts, nc))
    for k in range(n_contacts):
        C[rows.shape[0] * k : rows.shape[0] * (k + 1), 2 * k : 2 * k + 2] = rows
    return QpProblem(H=2.0 * H, g=2.0 * g, A=C, b=np.zeros(C.shape[0]))


def distribute_forces(F_r, Jc_com, pyramid, warm_start=None):
    """Reference contact forces: closest feasible match of the net wrench."""
    problem = build_distribution_problem(F_r, Jc_com, pyramid)
    try:
        sol = qp_solve(problem, warm_start=warm_start)
    except QpSolverError as e:
        raise DistributionInfeasibleError(str(e), last_iterate=e.last_iterate) from e
    return sol.x, sol


def correct_planner_forces(ref, com, x, xd, gains, pyramid, warm_start=None):
    """Planner gave forces directly: correct their net wrench, redistribute.

    The reference forces are mapped to a net wrench, shifted by the
    inertia-scaled PD correction, and mapped back through the feasible
    set of the distribution QP.
    """
    if ref.mode != "forces":
        raise ValueError("reference does not carry planner contact forces")
    e = ref.x_ref - np.asarray(x, dtype=float)
    ed = ref.xd_ref - np.asarray(xd, dtype=float)
    correction = gains.kp * e + gains.kd * ed
    F_r = com.Jc_com.T @ np.asarray(ref.lambda_ref, dtype=float) + com.Mcom @ correction
    return distribute_forces(F_r, com.Jc_com, pyramid, warm_start=warm_start)


def dump_problem(problem, path):
    """Plain-text dump (dimensions then H, g, A, b row major) for offline use."""
    with open(path, "w") as fh:
        fh.write(f"{problem.g.size} {problem.A.shape[0]}\n")
        for row in problem.H:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in problem.g) + "\n")
        for row in problem.A:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in problem.b) + "\n")


def load_problem(path):
    with open(path) as fh:
        tokens = fh.read().split("\n")
    n, m = (int(v) for v in tokens[0].split())
    H = np.array([[float(v) for v in tokens[1 + i].split()] for i in range(n)])
    g = np.array([float(v) for v in tokens[1 + n].split()])
    A = np.array([[float(v) for v in tokens[2 + n + i].split()] for i in range(m)]) if m else np.zeros((0, n))
    b = np.array([float(v) for v in tokens[2 + n + m].split()]) if m else np.zeros(0)
    return QpProblem(H=H, g=g, A=A, b=b)
