"""Force-distribution QP and com-controller checks against slow oracles."""

import numpy as np
import pytest

from wbfc.com_qp import (
    ComReference,
    FrictionPyramid,
    PdGains,
    QpProblem,
    build_distribution_problem,
    correct_planner_forces,
    desired_net_wrench,
    distribute_forces,
    dump_problem,
    load_problem,
    pd_correct,
    qp_solve,
)
from wbfc.decomposition import build_com_subsystem
from wbfc.errors import NoContactError
from wbfc.rigid_body import planar_quadruped, standing_state, foot_positions


from oracles import enumerate_active_sets, projected_gradient_oracle, random_problem


# ---------------------------------------------------------------------------
# pd correction and net wrench


def test_pd_zero_error_passes_feedforward():
    ref = ComReference(x_ref=np.zeros(3), xd_ref=np.zeros(3), xdd_ref=np.array([1.0, -2.0, 0.5]))
    gains = PdGains(kp=np.full(3, 100.0), kd=np.full(3, 20.0))
    out = pd_correct(ref, np.zeros(3), np.zeros(3), gains)
    assert np.allclose(out, [1.0, -2.0, 0.5])


def test_pd_correction_opposes_position_error():
    ref = ComReference(x_ref=np.zeros(1), xd_ref=np.zeros(1), xdd_ref=np.zeros(1))
    gains = PdGains(kp=[100.0], kd=[0.0])
    out = pd_correct(ref, np.array([0.05]), np.zeros(1), gains)
    # error e = ref - x = -0.05, correction accelerates back toward the reference
    assert out[0] == pytest.approx(-5.0)


def test_pd_double_integrator_critically_damped():
    """Step offset on a point mass: no overshoot beyond 5%, fast settle."""
    gains = PdGains(kp=[100.0], kd=[20.0])
    ref = ComReference(x_ref=np.zeros(1), xd_ref=np.zeros(1), xdd_ref=np.zeros(1))
    dt = 1e-3
    x, xd = np.array([0.05]), np.zeros(1)
    trace = []
    for _ in range(2000):
        acc = pd_correct(ref, x, xd, gains)
        xd = xd + acc * dt
        x = x + xd * dt
        trace.append(x[0])
    trace = np.asarray(trace)
    assert trace.min() > -0.05 * 0.05      # overshoot past the target < 5%
    assert abs(trace[-1]) < 1e-4


def test_net_wrench_statics_and_free_fall():
    model = planar_quadruped()
    st = standing_state(model)
    pos, _ = foot_positions(model, st)
    com = build_com_subsystem(model, st, pos)
    hover = desired_net_wrench(com, np.zeros(3))
    assert np.allclose(hover, com.Gcom, atol=1e-12)
    free_fall = desired_net_wrench(com, np.array([0.0, -9.81, 0.0]))
    assert np.abs(free_fall[:2]).max() < 1e-9
    rng = np.random.default_rng(1)
    xdd = rng.normal(size=3)
    expect = com.Mcom @ xdd + com.Ccom + com.Gcom
    assert np.allclose(desired_net_wrench(com, xdd), expect, atol=1e-12)


# ---------------------------------------------------------------------------
# qp solver


def test_unconstrained_closed_form():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(5, 5))
    H = a @ a.T + 5 * np.eye(5)
    g = rng.normal(size=5)
    sol = qp_solve(QpProblem(H=H, g=g, A=None, b=None))
    assert np.abs(sol.x - np.linalg.solve(H, -g)).max() < 1e-10
    assert sol.kkt_ok()


def test_scalar_bound_hand_kkt():
    # min (x-2)^2 subject to x >= 3: optimum at the bound with multiplier 2
    sol = qp_solve(QpProblem(H=[[2.0]], g=[-4.0], A=[[1.0]], b=[3.0]))
    assert sol.x[0] == pytest.approx(3.0, abs=1e-12)
    assert sol.multipliers[0] == pytest.approx(2.0, abs=1e-10)
    assert sol.kkt_ok()


def test_random_problems_match_projected_gradient_oracle():
    rng = np.random.default_rng(1234)
    worst = 0.0
    for k in range(500):
        problem = random_problem(rng)
        sol = qp_solve(problem)
        assert sol.kkt_ok(), f"solve {k} failed KKT certification"
        x_ref = projected_gradient_oracle(problem)
        worst = max(worst, np.abs(sol.x - x_ref).max())
    assert worst < 1e-6


def test_active_set_enumeration_agreement_small():
    rng = np.random.default_rng(77)
    for _ in range(25):
        problem = random_problem(rng, n=3, m=6)
        sol = qp_solve(problem)
        x_ref = enumerate_active_sets(problem)
        assert x_ref is not None
        assert np.abs(sol.x - x_ref).max() < 1e-7


def test_warm_start_changes_speed_not_answer():
    rng = np.random.default_rng(31)
    for _ in range(50):
        problem = random_problem(rng)
        cold = qp_solve(problem)
        warm = qp_solve(problem, warm_start=cold.active_set)
        assert np.abs(cold.x - warm.x).max() < 1e-8
        assert warm.iterations <= cold.iterations
        bogus = qp_solve(problem, warm_start=[0, 1, 2])
        assert np.abs(cold.x - bogus.x).max() < 1e-8


def test_solver_deterministic():
    rng = np.random.default_rng(9)
    problem = random_problem(rng)
    a = qp_solve(problem)
    b = qp_solve(problem)
    assert np.array_equal(a.x, b.x)
    assert a.active_set == b.active_set


# ---------------------------------------------------------------------------
# friction pyramid


def test_pyramid_generators_lie_on_cone():
    pyr = FrictionPyramid(mu=0.7)
    gens = pyr.generators()
    assert gens.shape == (12, 3)
    tangential = np.hypot(gens[:, 0], gens[:, 1])
    assert np.abs(tangential - 0.7 * gens[:, 2]).max() < 1e-12
    rows = pyr.rows_spatial()
    assert rows.shape == (13, 3)
    # every generator satisfies every facet (boundary contact on neighbours)
    assert (rows[:12] @ gens.T).min() > -1e-12


def test_pyramid_is_inside_cone_for_random_points():
    rng = np.random.default_rng(5)
    pyr = FrictionPyramid(mu=0.6)
    gens = pyr.generators()
    for _ in range(1000):
        w = rng.uniform(0, 1, 12)
        lam = w @ gens * rng.uniform(0.1, 10.0)
        assert np.hypot(lam[0], lam[1]) <= pyr.mu * lam[2] + 1e-9


def test_planar_rows():
    pyr = FrictionPyramid(mu=0.5)
    rows = pyr.rows_planar()
    assert rows.shape == (3, 2)
    assert (rows @ np.array([0.2, 1.0]) >= 0).all()      # inside
    assert (rows @ np.array([0.8, 1.0]) < 0).any()       # outside the cone


# ---------------------------------------------------------------------------
# force distribution


def _two_contact_subsystem(weight=400.0, spread=0.3):
    """Synthetic wrench map for two planar contacts symmetric about the com."""
    pts = np.array([[-spread, 0.0], [spread, 0.0]])
    jc = np.zeros((4, 3))
    com = np.array([0.0, 0.5])
    for k, p in enumerate(pts):
        r = p - com
        jc[2 * k] = [1.0, 0.0, -r[1]]
        jc[2 * k + 1] = [0.0, 1.0, r[0]]
    return jc


def test_symmetric_weight_split():
    jc = _two_contact_subsystem()
    F = np.array([0.0, 400.0, 0.0])
    lam, sol = distribute_forces(F, jc, FrictionPyramid(mu=0.7))
    assert sol.kkt_ok()
    assert lam[1] == pytest.approx(200.0, rel=1e-6)
    assert lam[3] == pytest.approx(200.0, rel=1e-6)
    assert np.abs(lam[[0, 2]]).max() < 1e-6
    assert np.abs(jc.T @ lam - F).max() < 1e-6


def test_downward_pull_hits_unilateral_boundary():
    jc = _two_contact_subsystem()
    F = np.array([0.0, -150.0, 0.0])
    lam, sol = distribute_forces(F, jc, FrictionPyramid(mu=0.7))
    assert sol.kkt_ok()
    assert np.abs(lam[1::2]).max() < 1e-8       # normals pinned at zero
    assert np.linalg.norm(jc.T @ lam - F) > 1.0  # wrench cannot be met


def test_lateral_saturation_matches_enumeration():
    jc = _two_contact_subsystem()
    pyr = FrictionPyramid(mu=0.4)
    F = np.array([500.0, 400.0, 0.0])           # lateral demand above mu * weight
    lam, sol = distribute_forces(F, jc, pyr)
    assert sol.kkt_ok()
    problem = build_distribution_problem(F, jc, pyr)
    x_ref = enumerate_active_sets(problem)
    assert np.abs(lam - x_ref).max() < 1e-7
    # tangential forces sit on the pyramid facet
    assert lam[0] == pytest.approx(pyr.mu * lam[1], rel=1e-6)
    assert lam[2] == pytest.approx(pyr.mu * lam[3], rel=1e-6)


def test_feasible_points_respect_exact_cone():
    rng = np.random.default_rng(8)
    jc = _two_contact_subsystem()
    pyr = FrictionPyramid(mu=0.7)
    for _ in range(1000):
        F = rng.normal(scale=200.0, size=3) + np.array([0, 400, 0])
        lam, sol = distribute_forces(F, jc, pyr)
        for k in range(2):
            fx, fz = lam[2 * k], lam[2 * k + 1]
            assert fz >= -1e-9
            assert abs(fx) <= pyr.mu * fz + 1e-7


def test_no_contact_raises():
    with pytest.raises(NoContactError):
        distribute_forces(np.zeros(3), np.zeros((0, 3)), FrictionPyramid(mu=0.7))


def test_planner_force_correction():
    model = planar_quadruped()
    st = standing_state(model)
    pos, _ = foot_positions(model, st)
    com = build_com_subsystem(model, st, pos)
    pyr = FrictionPyramid(mu=0.7)
    lam_ref, _ = distribute_forces(com.Gcom, com.Jc_com, pyr)
    gains = PdGains(kp=np.full(3, 100.0), kd=np.full(3, 20.0))

    ref = ComReference(x_ref=np.array([*com.com, 0.0]), xd_ref=np.zeros(3), lambda_ref=lam_ref)
    x = np.array([*com.com, 0.0])
    lam, sol = correct_planner_forces(ref, com, x, np.zeros(3), gains, pyr)
    assert sol.kkt_ok()
    assert np.abs(com.Jc_com.T @ lam - com.Jc_com.T @ lam_ref).max() < 1e-6

    # pure position error shifts the target wrench by Mcom Kp e
    e = np.array([0.01, -0.02, 0.005])
    lam2, _ = correct_planner_forces(ref, com, x - e, np.zeros(3), gains, pyr)
    expect = com.Jc_com.T @ lam_ref + com.Mcom @ (gains.kp * e)
    assert np.abs(com.Jc_com.T @ lam2 - expect).max() < 1e-6


def test_planner_forces_outside_cone_projected():
    jc = _two_contact_subsystem()
    pyr = FrictionPyramid(mu=0.3)
    bad = np.array([300.0, 100.0, 300.0, 100.0])   # tangential far beyond mu fz

    class ComStub:
        Jc_com = jc
        Mcom = np.diag([40.0, 40.0, 2.0])

    ref = ComReference(x_ref=np.zeros(3), xd_ref=np.zeros(3), lambda_ref=bad)
    lam, sol = correct_planner_forces(ref, ComStub(), np.zeros(3), np.zeros(3),
                                      PdGains(kp=np.zeros(3), kd=np.zeros(3)), pyr)
    assert sol.kkt_ok()
    problem = build_distribution_problem(jc.T @ bad, jc, pyr)
    x_ref = enumerate_active_sets(problem)
    assert np.abs(lam - x_ref).max() < 1e-6


def test_dump_and_load_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    problem = random_problem(rng, n=4, m=6)
    path = tmp_path / "instance.txt"
    dump_problem(problem, path)
    back = load_problem(path)
    assert np.allclose(back.H, problem.H)
    assert np.allclose(back.g, problem.g)
    assert np.allclose(back.A, problem.A)
    assert np.allclose(back.b, problem.b)
    assert np.allclose(qp_solve(back).x, qp_solve(problem).x)
