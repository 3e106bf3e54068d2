"""Subsystem extraction and torque mapping with selectable decoupling.

The whole-body model is split into three pieces: the stance-foot force
subsystem (where the projected contact Jacobian is the identity), the
centre-of-mass subsystem driven only by external wrenches, and the
non-contact subsystem covering whatever task coordinates remain (swing
feet here). map_subsystem_torques recombines the per-subsystem inputs
into actuated joint torques, either coequally (neither input disturbs
the other subsystem) or hierarchically.
"""

from dataclasses import dataclass

import numpy as np

from .errors import IllPosedDecompositionError, SingularContactError, SingularTaskError
from .rigid_body import centroidal_quantities, com_state, project_to_task


@dataclass
class ContactSubsystem:
    """Stance-force dynamics: Cc + Gc = tau_c + lambda, acceleration pinned."""

    Cc: np.ndarray
    Gc: np.ndarray
    Sc: np.ndarray          # actuated x contact_dim
    dim: int
    Jc: np.ndarray
    Jc_dagger: np.ndarray


@dataclass
class ComSubsystem:
    """Centre-of-mass dynamics in (x, z, pitch) coordinates.

    Mcom is block diagonal: total mass times identity on the linear part
    and the rotational inertia about the com on the angular part. Jc_com
    maps stacked contact forces to the net com wrench via its transpose.
    """

    Mcom: np.ndarray
    Ccom: np.ndarray
    Gcom: np.ndarray
    Jc_com: np.ndarray      # contact_dim x 3
    com: np.ndarray
    vcom: np.ndarray
    avg_ang_vel: float      # centroidal angular momentum / inertia


@dataclass
class NoncontactSubsystem:
    Mnc: np.ndarray
    Cnc: np.ndarray
    Gnc: np.ndarray
    Snc: np.ndarray
    Jc_nc: np.ndarray
    dim: int


@dataclass
class DecouplingConfig:
    """Weighting and precedence flags for the torque recombination."""

    W: np.ndarray = None    # actuated x actuated, full rank; None = identity
    alpha_c: int = 1
    alpha_nc: int = 1

    def validate(self, n_act):
        if self.alpha_c not in (0, 1) or self.alpha_nc not in (0, 1):
            raise ValueError("alpha flags must be 0 or 1")
        if self.W is None:
            return np.eye(n_act)
        W = np.asarray(self.W, dtype=float)
        if W.shape != (n_act, n_act):
            raise ValueError("W must be actuated x actuated")
        cond = np.linalg.cond(W)
        if not np.isfinite(cond) or cond > 1e12:
            raise IllPosedDecompositionError(f"weighting matrix is ill conditioned (cond={cond:.3e})")
        return W


def build_contact_subsystem(dyn, Jc, jc_bias):
    """Project the dynamics onto the stance-feet force coordinates.

    jc_bias is the Jdot qd term of the stacked contact Jacobian. The
    projected contact-force Jacobian must come out as the identity; that
    is verified here to 1e-9.
    """
    try:
        ts = project_to_task(dyn, Jc, jc_bias, Jc)
    except SingularTaskError as e:
        raise SingularContactError(e.sigma) from e
    dim = Jc.shape[0]
    if np.abs(ts.Jcx - np.eye(dim)).max() > 1e-9:
        raise SingularContactError(
            np.linalg.svd(Jc, compute_uv=False)[-1],
            "projected contact Jacobian is not identity",
        )
    return ContactSubsystem(Cc=ts.Cx, Gc=ts.Gx, Sc=ts.Sx, dim=dim, Jc=Jc, Jc_dagger=ts.Jx_dagger)


def build_com_subsystem(model, state, contact_points, kin=None):
    """Newton-Euler com dynamics plus the contact-to-com wrench map.

    contact_points are the world positions of the active contacts, in the
    same order as the stacked contact force vector. Task coordinates are
    (com x, com z, pitch); the angular row uses moments about the com.
    """
    com, vcom = com_state(model, state, kin=kin)
    ic, ic_dot, h_ang = centroidal_quantities(model, state, kin=kin)
    m = model.total_mass
    omega_avg = h_ang / ic

    Mcom = np.diag([m, m, ic])
    # angular bias keeps d/dt(ic * omega_avg) = net moment exact
    Ccom = np.array([0.0, 0.0, ic_dot * omega_avg])
    Gcom = np.array([-m * model.gravity[0], -m * model.gravity[1], 0.0])

    pts = np.atleast_2d(np.asarray(contact_points, dtype=float)) if len(contact_points) else np.zeros((0, 2))
    jc = np.zeros((2 * len(pts), 3))
    for k, p in enumerate(pts):
        r = p - com
        jc[2 * k] = [1.0, 0.0, -r[1]]       # tangential force column
        jc[2 * k + 1] = [0.0, 1.0, r[0]]    # normal force column
    return ComSubsystem(
        Mcom=Mcom, Ccom=Ccom, Gcom=Gcom, Jc_com=jc, com=com, vcom=vcom, avg_ang_vel=omega_avg
    )


def build_noncontact_subsystem(dyn, Jnc, jnc_bias, Jc):
    """Remaining task coordinates (swing feet), full projected terms."""
    ts = project_to_task(dyn, Jnc, jnc_bias, Jc)
    return NoncontactSubsystem(
        Mnc=ts.Mx, Cnc=ts.Cx, Gnc=ts.Gx, Snc=ts.Sx, Jc_nc=ts.Jcx, dim=Jnc.shape[0]
    )


def _ortho_basis(B):
    """Orthonormal basis of the column space, or None for an empty matrix."""
    if B is None or B.size == 0:
        return None
    q, r = np.linalg.qr(B)
    if np.abs(np.diag(r)).min() < 1e-10 * max(1.0, np.abs(r).max()):
        raise IllPosedDecompositionError("selection matrix lost column rank")
    return q


def _branch(B_own, q_other, deflate, tau_own):
    """One term of the torque map, computed in whitened coordinates.

    Evaluates C (C^T C)^-1 tau with C the own selection matrix, optionally
    deflated by the orthogonal projector onto the other task's columns.
    """
    C = B_own - q_other @ (q_other.T @ B_own) if (deflate and q_other is not None) else B_own
    q, r = np.linalg.qr(C)
    if np.abs(np.diag(r)).min() < 1e-10 * max(1.0, np.abs(r).max()):
        raise IllPosedDecompositionError("weighted selection product is singular")
    return q @ np.linalg.solve(r.T, tau_own)


def map_subsystem_torques(tau_c, tau_nc, Sc, Snc, cfg=None):
    """Combine subsystem inputs into actuated joint torques.

    With alpha_c = alpha_nc = 1 the two inputs are routed through each
    other's null space, so S_c^T tau = tau_c and S_nc^T tau = tau_nc hold
    simultaneously. Setting one alpha to zero gives the other subsystem
    precedence. Empty subsystems (zero columns) are skipped.

    For a symmetric positive definite weighting the map is evaluated in
    Cholesky-whitened coordinates; a general full-rank weighting falls
    back to the direct normal-equation form.
    """
    tau_c = np.asarray(tau_c, dtype=float)
    tau_nc = np.asarray(tau_nc, dtype=float) if tau_nc is not None else np.zeros(0)
    have_c = Sc is not None and np.size(Sc) and tau_c.size
    have_nc = Snc is not None and np.size(Snc) and tau_nc.size
    if not have_c and not have_nc:
        raise ValueError("at least one subsystem input is required")
    n_act = Sc.shape[0] if have_c else Snc.shape[0]
    cfg = cfg or DecouplingConfig()
    W = cfg.validate(n_act)

    try:
        L = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        return _map_general(tau_c, tau_nc, Sc, Snc, W, cfg, n_act, have_c, have_nc)

    B_c = L.T @ Sc if have_c else None
    B_nc = L.T @ Snc if have_nc else None
    q_c = _ortho_basis(B_c)
    q_nc = _ortho_basis(B_nc)
    y = np.zeros(n_act)
    if have_c:
        y = y + _branch(B_c, q_nc, cfg.alpha_nc == 1, tau_c)
    if have_nc:
        y = y + _branch(B_nc, q_c, cfg.alpha_c == 1, tau_nc)
    return L @ y


def _map_general(tau_c, tau_nc, Sc, Snc, W, cfg, n_act, have_c, have_nc):
    """Direct evaluation for non-symmetric full-rank weightings."""

    def pinv_map(Wx, S):
        ws = Wx @ S
        gram = S.T @ ws
        try:
            return np.linalg.solve(gram.T, ws.T).T
        except np.linalg.LinAlgError as e:
            raise IllPosedDecompositionError("weighted selection product is singular") from e

    def deflate(Wx, S):
        ws = Wx @ S
        gram = S.T @ ws
        try:
            return Wx - ws @ np.linalg.solve(gram, S.T @ Wx)
        except np.linalg.LinAlgError as e:
            raise IllPosedDecompositionError("weighted selection product is singular") from e

    tau = np.zeros(n_act)
    if have_c:
        Wc = deflate(W, Snc) if (cfg.alpha_nc and have_nc) else W
        tau = tau + pinv_map(Wc, Sc) @ tau_c
    if have_nc:
        Wnc = deflate(W, Sc) if (cfg.alpha_c and have_c) else W
        tau = tau + pinv_map(Wnc, Snc) @ tau_nc
    return tau
