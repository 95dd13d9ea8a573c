import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvmpc.kinematics import (EndEffectorState, JointState, KinematicsError, ChainModel,
                              axis_angle_matrix, ee_state, floating_ee_step, forward_kinematics,
                              integrate, is_rigid, jacobian, jacobian_dot_qd, load_chain,
                              make_transform, rpy_matrix, so3_exp, tilt_angle)

from conftest import random_q


def fk_pos_rot(chain, q):
    T = forward_kinematics(chain, q)
    return T[:3, 3], T[:3, :3]


def test_home_pose_has_level_tray(chain):
    T = forward_kinematics(chain, chain.pose("home"))
    assert is_rigid(T)
    assert tilt_angle(T[:3, :3]) < 1e-6
    np.testing.assert_allclose(T[:3, 3], [0.434, 0.0, 0.442], atol=2e-3)


def test_zero_config_matches_hand_composition(chain):
    # All joints at zero: the tool pose is the plain product of the fixed transforms.
    T = chain.base.copy()
    for o in chain.origins:
        T = T @ o
    T = T @ chain.flange @ chain.tray_mount
    np.testing.assert_allclose(forward_kinematics(chain, np.zeros(7)), T, atol=1e-12)


def test_single_joint_rotation_moves_tool_on_circle(chain):
    q0 = chain.pose("home")
    p0, _ = fk_pos_rot(chain, q0)
    q1 = q0.copy()
    q1[0] += 0.3
    p1, _ = fk_pos_rot(chain, q1)
    # Joint 1 spins about world z through the origin: radius and height are preserved.
    assert np.hypot(*p1[:2]) == pytest.approx(np.hypot(*p0[:2]), abs=1e-12)
    assert p1[2] == pytest.approx(p0[2], abs=1e-12)
    assert np.arctan2(p1[1], p1[0]) - np.arctan2(p0[1], p0[0]) == pytest.approx(0.3, abs=1e-12)


def test_jacobian_matches_finite_differences(chain, rng):
    h = 1e-6
    for _ in range(10):
        q = random_q(chain, rng)
        J = jacobian(chain, q)
        p0, R0 = fk_pos_rot(chain, q)
        for i in range(7):
            dq = np.zeros(7)
            dq[i] = h
            pp, Rp = fk_pos_rot(chain, q + dq)
            pm, Rm = fk_pos_rot(chain, q - dq)
            np.testing.assert_allclose(J[:3, i], (pp - pm) / (2 * h), atol=1e-6)
            # dR R^T = skew(w) for the angular column
            S = (Rp - Rm) / (2 * h) @ R0.T
            w = np.array([S[2, 1], S[0, 2], S[1, 0]])
            np.testing.assert_allclose(J[3:, i], w, atol=1e-6)


def test_jdot_qd_matches_second_difference(chain, rng):
    q = random_q(chain, rng)
    qd = rng.normal(size=7)
    h = 1e-4
    # d/dt (J(q(t)) qd) along q(t) = q + t qd
    num = (jacobian(chain, q + h * qd) @ qd - jacobian(chain, q - h * qd) @ qd) / (2 * h)
    np.testing.assert_allclose(jacobian_dot_qd(chain, q, qd), num, atol=1e-6)


def test_ee_state_at_rest_is_static(chain):
    ee = ee_state(chain, JointState.at_rest(chain.pose("home")))
    for v in (ee.lin_vel, ee.ang_vel, ee.lin_acc, ee.ang_acc):
        np.testing.assert_array_equal(v, 0.0)


def test_integrate_clamps(chain):
    js = JointState.at_rest(chain.pose("home"))
    out = integrate(chain, js, np.full(7, 1e3), 0.02)
    np.testing.assert_allclose(out.qd, chain.acc_limit * 0.02)
    np.testing.assert_allclose(out.qdd, chain.acc_limit)
    fast = JointState(chain.pose("home"), chain.vel_limit * 0.99, np.zeros(7))
    out = integrate(chain, fast, chain.acc_limit, 0.02)
    assert np.all(np.abs(out.qd) <= chain.vel_limit + 1e-12)


def test_integrate_position_clamp_zeroes_velocity(chain):
    q = chain.upper - 1e-4
    js = JointState(q, np.full(7, 1.0), np.zeros(7))
    out = integrate(chain, js, np.zeros(7), 0.02)
    np.testing.assert_array_equal(out.q, chain.upper)
    np.testing.assert_array_equal(out.qd, 0.0)


def test_integrate_rejects_bad_input(chain):
    js = JointState.at_rest(chain.pose("home"))
    with pytest.raises(KinematicsError):
        integrate(chain, js, np.zeros(6), 0.02)
    with pytest.raises(KinematicsError):
        integrate(chain, js, np.full(7, np.nan), 0.02)
    with pytest.raises(KinematicsError):
        integrate(chain, js, np.zeros(7), 0.0)


def test_named_pose_lookup(chain):
    with pytest.raises(KinematicsError):
        chain.pose("nope")
    assert chain.pose("shifted").shape == (7,)


def test_chain_validation():
    cfg = {"joints": [{"limits": {"lower": 1.0, "upper": -1.0, "velocity": 1, "acceleration": 1}}]}
    with pytest.raises(KinematicsError):
        ChainModel.from_dict(cfg)


def test_floating_step_constant_acceleration():
    ee = EndEffectorState.identity()
    for _ in range(10):
        ee = floating_ee_step(ee, [1.0, 0, 0, 0, 0, 0.5], 0.1)
    assert ee.lin_vel[0] == pytest.approx(1.0)
    assert ee.ang_vel[2] == pytest.approx(0.5)
    # semi-implicit Euler: x = dt^2 * sum_{k=1..n} k * a
    assert ee.position[0] == pytest.approx(0.01 * 55)
    assert is_rigid(make_transform(ee.rotation))


@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_so3_exp_is_rotation(v):
    R = so3_exp(np.array(v))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


@given(st.floats(-np.pi, np.pi))
def test_axis_angle_matches_rpy(a):
    np.testing.assert_allclose(axis_angle_matrix(np.array([1.0, 0, 0]), a), rpy_matrix(a, 0, 0),
                               atol=1e-12)
    assert tilt_angle(rpy_matrix(a, 0, 0)) == pytest.approx(abs(np.degrees(a)), abs=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_fk_always_rigid(seed):
    chain = load_chain()
    q = np.random.default_rng(seed).uniform(chain.lower, chain.upper)
    assert is_rigid(forward_kinematics(chain, q), tol=1e-9)
