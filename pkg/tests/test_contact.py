import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvmpc.contact import (ContactError, ContactForces, ObjectParams, SlipState, Wrench,
                           contact_forces, friction_cost, friction_margins, grasp_matrix,
                           gravitoinertial_wrench, gravitoinertial_wrench_arrays, load_objects,
                           object_preset, slip_step, tilt_sweep_onset)
from cvmpc.kinematics import EndEffectorState, axis_angle_matrix, skew

G0 = np.array([0.0, 0.0, -9.81])


def static_ee(R=np.eye(3), a=np.zeros(3), w=np.zeros(3), dw=np.zeros(3)):
    return EndEffectorState(np.asarray(R, float), np.zeros(3), np.zeros(3), np.asarray(w, float),
                            np.asarray(a, float), np.asarray(dw, float))


def test_presets():
    objs = load_objects()
    assert {"cube_sim", "cube_real", "flat_plate"} <= set(objs)
    c = objs["cube_sim"]
    assert c.mass == 0.05 and c.mu == 0.3 and c.n_contacts == 4
    assert objs["cube_real"].com[2] == pytest.approx(0.025)
    with pytest.raises(ContactError):
        object_preset("missing")


def test_object_validation():
    pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float)
    with pytest.raises(ContactError):
        ObjectParams(0.1, np.zeros(3), np.eye(3), 0.3, pts)
    with pytest.raises(ContactError):
        ObjectParams(-1.0, np.zeros(3), np.eye(3), 0.3, np.eye(3))
    with pytest.raises(ContactError):
        ObjectParams(1.0, np.zeros(3), -np.eye(3), 0.3, np.eye(3))


def test_wrench_at_rest(cube):
    w = gravitoinertial_wrench(static_ee(), cube, G0)
    np.testing.assert_allclose(w.force, [0, 0, -0.4905], atol=1e-12)
    np.testing.assert_allclose(w.torque, 0.0, atol=1e-15)


def test_wrench_zero_gravity_zero_motion(cube):
    w = gravitoinertial_wrench(static_ee(), cube, np.zeros(3))
    np.testing.assert_array_equal(w.vector, 0.0)


def test_wrench_vertical_acceleration(cube):
    for a in (-3.0, 0.0, 4.5):
        w = gravitoinertial_wrench(static_ee(a=[0, 0, a]), cube, G0)
        assert np.linalg.norm(w.force) == pytest.approx(cube.mass * abs(a + 9.81), abs=1e-12)


def test_wrench_rotation_terms_hand_computed(cube):
    # omega = (0,0,w): centripetal term w x (w x c) vanishes for c on the z axis
    w = gravitoinertial_wrench(static_ee(w=[0, 0, 2.0]), cube, np.zeros(3))
    np.testing.assert_allclose(w.force, 0.0, atol=1e-15)
    # omega = (w,0,0), c = (0,0,h): w x (w x c) = (0,0,-w^2 h)
    wx, h = 2.0, cube.com[2]
    w = gravitoinertial_wrench(static_ee(w=[wx, 0, 0]), cube, np.zeros(3))
    np.testing.assert_allclose(w.force, [0, 0, cube.mass * wx * wx * h], atol=1e-15)
    J = cube.inertia
    np.testing.assert_allclose(w.torque, -np.cross([wx, 0, 0], J @ [wx, 0, 0]), atol=1e-15)


def test_wrench_uses_body_frame(cube):
    # Rotating the tray rotates gravity into its frame.
    R = axis_angle_matrix(np.array([1.0, 0, 0]), 0.3)
    w = gravitoinertial_wrench(static_ee(R=R), cube, G0)
    np.testing.assert_allclose(w.force, cube.mass * R.T @ G0, atol=1e-12)


def test_wrench_linear_in_accelerations(cube, rng):
    R = axis_angle_matrix(np.array([0.0, 1, 0]), 0.2)
    w = rng.normal(size=3)
    a1, a2, d1, d2 = rng.normal(size=(4, 3))
    base = gravitoinertial_wrench_arrays(R, np.zeros(3), w, np.zeros(3), cube, G0)
    f = lambda a, d: gravitoinertial_wrench_arrays(R, a, w, d, cube, G0) - base
    np.testing.assert_allclose(f(a1 + 2 * a2, d1 + 2 * d2), f(a1, d1) + 2 * f(a2, d2), atol=1e-12)


def test_grasp_matrix_blocks():
    pts = np.array([[0.0, 0, 0], [0.1, 0, 0], [0, 0.1, 0]])
    obj = ObjectParams(1.0, np.zeros(3), np.eye(3) * 1e-3, 0.5, pts)
    G = grasp_matrix(obj)
    np.testing.assert_array_equal(G[:, :3], np.vstack([np.eye(3), np.zeros((3, 3))]))
    np.testing.assert_allclose(G[3:, 3:6] @ [0, 0, 1], [0, -0.1, 0])


def test_grasp_matrix_matches_per_contact_sum(cube, rng):
    G = grasp_matrix(cube)
    F = rng.normal(size=12)
    w = np.zeros(6)
    for p, f in zip(cube.contact_points, F.reshape(4, 3)):
        w[:3] += f
        w[3:] += np.cross(p - cube.com, f)
    np.testing.assert_allclose(G @ F, w, atol=1e-14)


def test_static_normals_and_dense_lstsq(cube):
    w = gravitoinertial_wrench(static_ee(), cube, G0)
    F = contact_forces(w, grasp_matrix(cube)).per_contact
    np.testing.assert_allclose(F[:, 2], cube.mass * 9.81 / 4, atol=1e-9)
    np.testing.assert_allclose(F[:, :2], 0.0, atol=1e-9)
    # independent least-norm solution
    ref = np.linalg.lstsq(grasp_matrix(cube), -w.vector, rcond=None)[0]
    np.testing.assert_allclose(F.reshape(-1), ref, atol=1e-12)


def test_zero_wrench_zero_forces(cube):
    F = contact_forces(Wrench(np.zeros(3), np.zeros(3)), grasp_matrix(cube))
    np.testing.assert_array_equal(F.stacked, 0.0)


def test_non_finite_wrench_rejected(cube):
    with pytest.raises(ContactError):
        contact_forces(Wrench(np.array([np.nan, 0, 0]), np.zeros(3)), grasp_matrix(cube))


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.4])
def test_tilt_ratio_is_tan(cube, alpha):
    R = axis_angle_matrix(np.array([1.0, 0, 0]), alpha)
    F = contact_forces(gravitoinertial_wrench(static_ee(R=R), cube, G0), grasp_matrix(cube))
    tot = F.per_contact.sum(axis=0)
    assert np.hypot(tot[0], tot[1]) / tot[2] == pytest.approx(np.tan(alpha), abs=1e-9)


def test_force_balance_random_feasible(cube, rng):
    G = grasp_matrix(cube)
    for _ in range(200):
        w = G @ rng.normal(size=12)
        F = contact_forces(Wrench(w[:3], w[3:]), G)
        np.testing.assert_allclose(G @ F.stacked + w, 0.0, atol=1e-8)


def test_margins_examples():
    m, ok = friction_margins(np.zeros(12), 0.3)
    np.testing.assert_array_equal(m, 0.0)
    assert ok.all()
    m, _ = friction_margins(np.array([0.3, 0.0, 1.0]), 0.3)
    assert m[0] == 0.0


def test_cost_examples():
    assert friction_cost(np.array([0.4, 0.0, 1.0]), 0.3) == pytest.approx(0.1)
    assert friction_cost(np.array([0.1, 0.0, 1.0, 0.0, 0.2, 1.0]), 0.3) == 0.0
    # separation pays |f_z| on top of the excess
    assert friction_cost(np.array([0.0, 0.0, -0.5]), 0.3) == pytest.approx(0.15 + 0.5)


@given(st.lists(st.floats(-5, 5), min_size=12, max_size=12), st.floats(0, 1.5))
def test_cost_zero_iff_cones_hold(F, mu):
    F = np.array(F)
    m, ok = friction_margins(F, mu)
    c = friction_cost(F, mu)
    assert c >= 0
    assert (c == 0) == (bool(np.all(m >= 0)) and bool(np.all(ok)))


def _tilt_costs(obj, angles):
    from cvmpc.contact import grasp_pinv
    R = np.stack([axis_angle_matrix(np.array([1.0, 0, 0]), a) for a in angles])
    z = np.zeros((len(angles), 3))
    w = gravitoinertial_wrench_arrays(R, z, z, z, obj, G0)
    return friction_cost(contact_forces(w, pinv=grasp_pinv(grasp_matrix(obj))), obj.mu)


def test_cost_continuous_in_tilt(cube):
    onset = tilt_sweep_onset(cube, np.arange(0.0, 0.6, 1e-4))
    # Fine sweep straddling the kink: no step changes the cost by more than 1e-6.
    fine = _tilt_costs(cube, onset + np.arange(-2000, 2000) * 1e-6)
    assert fine[0] == 0.0 and fine[-1] > 0.0
    assert np.max(np.abs(np.diff(fine))) <= 1e-6
    # Coarse sweep: the largest step shrinks in proportion to the step (no jumps anywhere).
    coarse = [np.max(np.abs(np.diff(_tilt_costs(cube, np.arange(0.0, 0.6, h))))) for h in (1e-3, 5e-4)]
    assert coarse[1] == pytest.approx(coarse[0] / 2, rel=0.05)


@pytest.mark.parametrize("mu", [0.1, 0.2, 0.3, 0.6])
def test_tilt_onset_flat_object(mu):
    obj = object_preset("flat_plate").with_mu(mu)
    onset = tilt_sweep_onset(obj, np.radians(np.arange(0.0, 45.0, 0.01)))
    assert np.degrees(onset) == pytest.approx(np.degrees(np.arctan(mu)), abs=0.5)


@pytest.mark.parametrize("mu", [0.1, 0.3, 0.6])
def test_tilt_onset_elevated_com(cube, mu):
    # Per-contact min-norm forces: the uphill pair unloads first, so a raised
    # CoM (height h over half-width a) lowers the onset to atan(mu / (1 + mu h / a)).
    obj = cube.with_mu(mu)
    h, a = obj.com[2], obj.contact_points[0, 1]
    onset = tilt_sweep_onset(obj, np.radians(np.arange(0.0, 45.0, 0.001)))
    assert np.degrees(onset) == pytest.approx(np.degrees(np.arctan(mu / (1 + mu * h / a))), abs=0.01)


def test_slip_sticks_inside_cone(cube):
    F = contact_forces(gravitoinertial_wrench(static_ee(), cube, G0), grasp_matrix(cube))
    s = slip_step(SlipState(), F.stacked, cube, None, 0.02)
    assert s.distance == 0.0 and np.all(s.velocity == 0)


def test_slip_inclined_plane(cube):
    alpha = 0.4
    assert np.tan(alpha) > cube.mu
    R = axis_angle_matrix(np.array([1.0, 0, 0]), alpha)
    F = contact_forces(gravitoinertial_wrench(static_ee(R=R), cube, G0), grasp_matrix(cube))
    dt = 1e-3
    s = slip_step(SlipState(), F.stacked, cube, None, dt)
    acc = np.linalg.norm(s.velocity) / dt
    assert acc == pytest.approx(9.81 * (np.sin(alpha) - cube.mu * np.cos(alpha)), abs=1e-6)
    # and it keeps sliding under kinetic friction
    s2 = slip_step(s, F.stacked, cube, None, dt)
    assert np.linalg.norm(s2.velocity) / dt == pytest.approx(2 * acc, rel=1e-9)


@given(st.integers(0, 10**6))
def test_slip_distance_monotone(seed):
    cube = object_preset("cube_sim")
    r = np.random.default_rng(seed)
    s = SlipState()
    for _ in range(30):
        nxt = slip_step(s, r.normal(scale=0.3, size=12), cube, None, 0.02)
        assert nxt.distance >= s.distance
        s = nxt
