"""Episode-level simulation of the tray-transport task.

A world is a joint state plus the slip state of the object on the tray. Each
step integrates the commanded joint accelerations, recomputes the end-effector
state, balances the object's gravitoinertial wrench with contact forces,
advances slip, labels the transition and checks termination.

Episode logs are JSON lines; see ``EpisodeLogWriter`` for the record layout.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .contact import (GRAVITY, ObjectParams, SlipState, contact_forces,
                      friction_margins, grasp_matrix, grasp_pinv,
                      gravitoinertial_wrench_arrays, slip_step)
from .kinematics import (ChainModel, EndEffectorState, JointState, ee_state,
                         integrate, tilt_angle)
from .observation import extract_observation

LOG_FORMAT = "cvmpc-episodes"
LOG_VERSION = 1


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.02
    max_steps: int = 500
    cost_label: float = 1.0
    slip_eps: float = 1e-4
    slip_fail: float = 0.02
    goal_tol: float = 0.02
    lin_vel_tol: float = 0.02
    ang_vel_tol: float = 0.02
    gravity: tuple = tuple(GRAVITY)


@dataclass
class WorldState:
    joint_state: JointState
    ee: EndEffectorState
    slip: SlipState
    goal: np.ndarray
    time: float = 0.0
    step: int = 0
    terminal: bool = False
    reason: str | None = None
    cost: float = 0.0

    def copy(self) -> "WorldState":
        return WorldState(self.joint_state.copy(), self.ee, self.slip.copy(),
                          self.goal.copy(), self.time, self.step, self.terminal,
                          self.reason, self.cost)


@dataclass
class Transition:
    observation: np.ndarray
    cost: float
    next_observation: np.ndarray
    episode: int
    step: int
    done: bool = False


@dataclass
class EpisodeMetrics:
    success: bool
    alpha_max: float
    v_max: float
    w_max: float
    slip: float
    steps: int
    reason: str | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def check_success(world: WorldState, cfg: SimConfig = SimConfig()) -> bool:
    ee = world.ee
    return bool(
        np.linalg.norm(ee.position - world.goal) <= cfg.goal_tol
        and np.linalg.norm(ee.lin_vel) < cfg.lin_vel_tol
        and np.linalg.norm(ee.ang_vel) < cfg.ang_vel_tol
        and world.slip.distance < cfg.slip_fail
    )


def sample_goal(rng: np.random.Generator, lo, hi, reach_radius: float | None = None,
                reach_center=(0.0, 0.0, 0.0), max_tries: int = 1000) -> np.ndarray:
    """Uniform goal in the box ``[lo, hi]`` within ``reach_radius`` of ``reach_center``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi < lo):
        raise ValueError("workspace box must be 3-d with lo <= hi")
    center = np.asarray(reach_center, dtype=float)
    for _ in range(max_tries):
        g = lo + (hi - lo) * rng.random(3)
        if reach_radius is None or np.linalg.norm(g - center) <= reach_radius:
            return g
    raise ValueError(f"no reachable goal after {max_tries} samples; check the workspace box")


class Simulator:
    """Steps worlds for one arm / object pair.

    ``obj`` carries the true friction coefficient; the demonstrator may assume
    a different one.
    """

    def __init__(self, chain: ChainModel, obj: ObjectParams, config: SimConfig = SimConfig()):
        self.chain = chain
        self.obj = obj
        self.cfg = config
        self.gravity = np.asarray(config.gravity, dtype=float)
        self._pinv = grasp_pinv(grasp_matrix(obj))

    def reset(self, q0, goal) -> WorldState:
        js = JointState.at_rest(q0)
        return WorldState(js, ee_state(self.chain, js), SlipState(), np.asarray(goal, float).copy())

    def contact_state(self, ee: EndEffectorState):
        w = gravitoinertial_wrench_arrays(ee.rotation, ee.lin_acc, ee.ang_vel, ee.ang_acc,
                                          self.obj, self.gravity)
        F = contact_forces(w, pinv=self._pinv)
        margins, normal_ok = friction_margins(F, self.obj.mu)
        return F, margins, normal_ok

    def step(self, world: WorldState, qdd_cmd, episode: int = 0):
        if world.terminal:
            raise SimulationError("cannot step a terminal world")
        cfg = self.cfg
        js = integrate(self.chain, world.joint_state, qdd_cmd, cfg.dt)
        ee = ee_state(self.chain, js)
        F, margins, normal_ok = self.contact_state(ee)
        slip = slip_step(world.slip, F, self.obj, ee, cfg.dt)
        violated = (bool(np.any(margins < 0.0)) or not bool(np.all(normal_ok))
                    or slip.distance - world.slip.distance > cfg.slip_eps)
        cost = cfg.cost_label if violated else 0.0
        new = WorldState(js, ee, slip, world.goal, world.time + cfg.dt, world.step + 1,
                         cost=cost)
        if slip.distance >= cfg.slip_fail:
            new.terminal, new.reason = True, "slipped"
        elif check_success(new, cfg):
            new.terminal, new.reason = True, "reached"
        elif new.step >= cfg.max_steps:
            new.terminal, new.reason = True, "timeout"
        tr = Transition(extract_observation(world.ee), cost, extract_observation(ee),
                        episode, world.step, new.terminal)
        return new, tr


def finalize_metrics(trajectory, cfg: SimConfig = SimConfig()) -> EpisodeMetrics:
    """Episode maxima of tilt (deg), linear and angular speed; success at the last state."""
    if not trajectory:
        raise ValueError("empty trajectory")
    rots = np.stack([w.ee.rotation for w in trajectory])
    alpha = float(np.max(tilt_angle(rots)))
    v = float(max(np.linalg.norm(w.ee.lin_vel) for w in trajectory))
    om = float(max(np.linalg.norm(w.ee.ang_vel) for w in trajectory))
    last = trajectory[-1]
    return EpisodeMetrics(check_success(last, cfg), alpha, v, om, float(last.slip.distance),
                          last.step, last.reason)


# -- episode logs --------------------------------------------------------------

def _ee_record(ee: EndEffectorState) -> dict:
    return {"p": ee.position.tolist(), "R": ee.rotation.reshape(-1).tolist(),
            "v": ee.lin_vel.tolist(), "w": ee.ang_vel.tolist(),
            "a": ee.lin_acc.tolist(), "alpha": ee.ang_acc.tolist()}


def ee_from_record(rec: dict) -> EndEffectorState:
    return EndEffectorState(np.array(rec["R"]).reshape(3, 3), np.array(rec["p"]),
                            np.array(rec["v"]), np.array(rec["w"]),
                            np.array(rec["a"]), np.array(rec["alpha"]))


def step_record(world: WorldState, episode: int, cmd=None) -> dict:
    js = world.joint_state
    return {
        "type": "step", "episode": episode, "step": world.step, "time": world.time,
        "q": js.q.tolist(), "qd": js.qd.tolist(), "qdd": js.qdd.tolist(),
        "cmd": None if cmd is None else np.asarray(cmd, float).tolist(),
        "ee": _ee_record(world.ee), "obs": extract_observation(world.ee).tolist(),
        "cost": world.cost, "slip": world.slip.distance,
        "slip_pos": world.slip.position.tolist(), "slip_vel": world.slip.velocity.tolist(),
        "goal": world.goal.tolist(), "reason": world.reason,
    }


class EpisodeLogWriter:
    """Writes JSON-lines episode logs.

    Record types, one JSON object per line:

    - ``header``: ``format``, ``version``, ``obs_mode`` (always ``full``),
      ``obs_dim``, ``dt`` and free-form ``meta``.
    - ``step``: ``episode``, ``step``, ``time``, joint ``q``/``qd``/``qdd``,
      ``cmd`` (the command that produced this state, ``null`` at step 0),
      ``ee`` (p, R row-major, v, w, a, alpha), ``obs`` (24-vector), ``cost``
      (label of the transition into this state), ``slip`` (cumulative
      distance), ``slip_pos``, ``slip_vel``, ``goal``, ``reason``.
    - ``episode_end``: ``episode``, ``seed``, ``start_q``, ``goal`` and the
      ``metrics`` dict.
    """

    def __init__(self, path: str | Path, meta: dict | None = None, dt: float = 0.02):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w")
        self._write({"type": "header", "format": LOG_FORMAT, "version": LOG_VERSION,
                     "obs_mode": "full", "obs_dim": 24, "dt": dt, "meta": meta or {}})

    def _write(self, rec: dict):
        self._fh.write(json.dumps(rec) + "\n")

    def write_episode(self, episode: int, records: list[dict], metrics: EpisodeMetrics,
                      seed: int, start_q, goal):
        for rec in records:
            self._write(rec)
        self._write({"type": "episode_end", "episode": episode, "seed": seed,
                     "start_q": np.asarray(start_q, float).tolist(),
                     "goal": np.asarray(goal, float).tolist(), "metrics": metrics.as_dict()})

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LogFormatError(ValueError):
    pass


def read_episode_log(path: str | Path):
    """Return ``(header, episodes)``; each episode is ``{"steps": [...], "end": {...}}``."""
    header = None
    episodes: dict[int, dict] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogFormatError(f"{path}:{lineno}: corrupt record") from exc
            kind = rec.get("type")
            if kind == "header":
                header = rec
            elif kind == "step":
                episodes.setdefault(rec["episode"], {"steps": [], "end": None})["steps"].append(rec)
            elif kind == "episode_end":
                episodes.setdefault(rec["episode"], {"steps": [], "end": None})["end"] = rec
            else:
                raise LogFormatError(f"{path}:{lineno}: unknown record type {kind!r}")
    if header is None or header.get("format") != LOG_FORMAT:
        raise LogFormatError(f"{path}: missing or foreign header")
    if header.get("version") != LOG_VERSION:
        raise LogFormatError(f"{path}: unsupported log version {header.get('version')}")
    return header, [episodes[k] for k in sorted(episodes)]
