import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvmpc.contact import SlipState, object_preset
from cvmpc.kinematics import EndEffectorState, JointState, so3_exp, tilt_angle
from cvmpc.simulator import (EpisodeLogWriter, LogFormatError, SimConfig, SimulationError,
                             Simulator, WorldState, check_success, finalize_metrics,
                             read_episode_log, sample_goal, step_record)


def at_rest_world(pos=np.zeros(3), goal=np.zeros(3), rot=np.eye(3), slip=0.0, v=np.zeros(3)):
    ee = EndEffectorState(rot, np.asarray(pos, float), np.asarray(v, float))
    s = SlipState()
    s.distance = slip
    return WorldState(JointState.at_rest(np.zeros(7)), ee, s, np.asarray(goal, float))


def tilt_sweep(chain, obj, rate=0.1, joint=5):
    """Rotate one wrist joint at a slow constant rate; return the tilt at the first cost label."""
    sim = Simulator(chain, obj, SimConfig(max_steps=5000))
    w = sim.reset(chain.pose("home"), np.full(3, 10.0))
    cmd = np.zeros(7)
    cmd[joint] = rate / 0.5  # reach the sweep rate gently over 25 steps, then coast
    for _ in range(25):
        w, tr = sim.step(w, cmd)
        assert tr.cost == 0.0
    prev = float(tilt_angle(w.ee.rotation))
    while not w.terminal:
        w, tr = sim.step(w, np.zeros(7))
        tilt = float(tilt_angle(w.ee.rotation))
        if tr.cost:
            return prev, tilt
        prev = tilt
    raise AssertionError("no violation before termination")


def test_rest_world_no_cost(chain, cube):
    sim = Simulator(chain, cube)
    w = sim.reset(chain.pose("home"), np.array([0.5, 0.0, 0.4]))
    for _ in range(5):
        w, tr = sim.step(w, np.zeros(7))
        assert tr.cost == 0.0 and w.slip.distance == 0.0 and not w.terminal


@pytest.mark.parametrize("mu", [0.1, 0.3, 0.6])
def test_quasi_static_tilt_labels(chain, mu):
    before, after = tilt_sweep(chain, object_preset("flat_plate").with_mu(mu))
    crit = np.degrees(np.arctan(mu))
    assert before <= crit + 0.5 and after >= crit - 0.5
    assert after - before < 0.5


def test_slip_termination(chain, cube):
    sim = Simulator(chain, cube.with_mu(0.05))
    w = sim.reset(chain.pose("home"), np.full(3, 10.0))
    cmd = np.zeros(7)
    cmd[0] = 10.0
    while not w.terminal:
        w, _ = sim.step(w, cmd if w.step < 20 else np.zeros(7))
    assert w.reason == "slipped" and w.slip.distance >= 0.02


def test_step_terminal_world_raises(chain, cube):
    sim = Simulator(chain, cube, SimConfig(max_steps=1))
    w, _ = sim.step(sim.reset(chain.pose("home"), np.full(3, 10.0)), np.zeros(7))
    assert w.terminal and w.reason == "timeout"
    with pytest.raises(SimulationError):
        sim.step(w, np.zeros(7))


def test_success_examples():
    assert check_success(at_rest_world())
    assert not check_success(at_rest_world(v=[0.03, 0.0, 0.0]))
    assert not check_success(at_rest_world(slip=0.021))
    assert check_success(at_rest_world(pos=[0.0199, 0, 0]))
    assert not check_success(at_rest_world(pos=[0.0201, 0, 0]))


def test_reached_terminates(chain, cube):
    sim = Simulator(chain, cube)
    q0 = chain.pose("home")
    w = sim.reset(q0, np.zeros(3))
    w, tr = sim.step(sim.reset(q0, w.ee.position), np.zeros(7))
    assert w.terminal and w.reason == "reached" and tr.done


def test_goal_sampling(rng):
    np.testing.assert_array_equal(sample_goal(rng, [0.3, 0.1, 0.2], [0.3, 0.1, 0.2]), [0.3, 0.1, 0.2])
    lo, hi = np.array([0.2, -0.3, 0.1]), np.array([0.7, 0.3, 0.6])
    g = np.array([sample_goal(rng, lo, hi) for _ in range(10_000)])
    assert np.all((g >= lo) & (g <= hi))
    a = [sample_goal(np.random.default_rng(4), lo, hi, 0.7) for _ in range(3)]
    b = [sample_goal(np.random.default_rng(4), lo, hi, 0.7) for _ in range(3)]
    np.testing.assert_array_equal(a, b)
    assert all(np.linalg.norm(x) <= 0.7 for x in a)
    with pytest.raises(ValueError):
        sample_goal(rng, [5, 5, 5], [6, 6, 6], reach_radius=1.0)


def test_metrics_examples():
    m = finalize_metrics([at_rest_world(goal=[1.0, 0, 0])] * 3)
    assert m.alpha_max == 0.0 and m.v_max == 0.0 and not m.success
    tilted = at_rest_world(rot=so3_exp([np.radians(10.0), 0, 0]))
    assert finalize_metrics([tilted]).alpha_max == pytest.approx(10.0)
    with pytest.raises(ValueError):
        finalize_metrics([])


@pytest.fixture(scope="module")
def episode(chain):
    """A short random-command episode with its state sequence and transitions."""
    sim = Simulator(chain, object_preset("cube_sim"), SimConfig(max_steps=60))
    rng = np.random.default_rng(7)
    w = sim.reset(chain.pose("home"), np.array([0.5, 0.1, 0.4]))
    traj, trs, cmds = [w], [], []
    while not w.terminal:
        cmd = rng.normal(scale=4.0, size=7)
        w, tr = sim.step(w, cmd)
        traj.append(w)
        trs.append(tr)
        cmds.append(cmd)
    return traj, trs, cmds


def test_labels_two_valued(episode):
    _, trs, _ = episode
    assert {tr.cost for tr in trs} <= {0.0, 1.0}


def test_termination_soundness(episode):
    traj, _, _ = episode
    last = traj[-1]
    assert (last.slip.distance >= 0.02) or check_success(last) or last.step == 60


def test_metrics_match_brute_force(episode):
    traj, _, _ = episode
    m = finalize_metrics(traj)
    tilts = [np.degrees(np.arccos(np.clip(w.ee.rotation[2, 2], -1, 1))) for w in traj]
    assert m.alpha_max == pytest.approx(max(tilts), abs=1e-9)
    assert m.v_max == pytest.approx(max(np.linalg.norm(w.ee.lin_vel) for w in traj))
    assert m.w_max == pytest.approx(max(np.linalg.norm(w.ee.ang_vel) for w in traj))
    assert m.steps == len(traj) - 1 and m.slip == traj[-1].slip.distance
    running = np.maximum.accumulate(tilts)
    assert np.all(np.diff(running) >= 0)


def test_transitions_chain(episode):
    _, trs, _ = episode
    for a, b in zip(trs, trs[1:]):
        np.testing.assert_array_equal(a.next_observation, b.observation)
    assert trs[-1].done and not any(t.done for t in trs[:-1])


def test_determinism(chain, cube, episode):
    traj, _, cmds = episode
    sim = Simulator(chain, cube, SimConfig(max_steps=60))
    w = sim.reset(chain.pose("home"), traj[0].goal)
    for c in cmds:
        w, _ = sim.step(w, c)
    np.testing.assert_array_equal(w.joint_state.q, traj[-1].joint_state.q)
    assert w.slip.distance == traj[-1].slip.distance


def test_log_round_trip(episode, tmp_path):
    traj, _, cmds = episode
    recs = [step_record(traj[0], 0)] + [step_record(w, 0, c) for w, c in zip(traj[1:], cmds)]
    path = tmp_path / "ep.jsonl"
    with EpisodeLogWriter(path, {"note": "x"}) as log:
        log.write_episode(0, recs, finalize_metrics(traj), 9, traj[0].joint_state.q, traj[0].goal)
    header, eps = read_episode_log(path)
    assert header["obs_dim"] == 24 and header["meta"] == {"note": "x"}
    assert len(eps) == 1 and len(eps[0]["steps"]) == len(traj)
    assert eps[0]["end"]["metrics"]["steps"] == len(traj) - 1
    np.testing.assert_array_equal(eps[0]["steps"][-1]["q"], traj[-1].joint_state.q)


def test_log_errors(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(LogFormatError):
        read_episode_log(bad)
    bad.write_text(json.dumps({"type": "header", "format": "other", "version": 1}) + "\n")
    with pytest.raises(LogFormatError):
        read_episode_log(bad)
    bad.write_text(json.dumps({"type": "mystery"}) + "\n")
    with pytest.raises(LogFormatError):
        read_episode_log(bad)


@given(st.floats(0.0, 0.05), st.floats(0.0, 0.05))
def test_success_thresholds(d, v):
    w = at_rest_world(pos=[d, 0, 0], v=[v, 0, 0])
    assert check_success(w) == (d <= 0.02 and v < 0.02)
