"""Sampling-based MPC (MPPI) over joint-acceleration sequences.

Each control step samples ``N`` perturbed copies of the mean sequence,
predicts end-effector trajectories with the arm model, scores them with a
cost stack and takes the exponentially weighted average. The stack has the
task terms (goal distance, stopping near the goal, joint-limit hinge,
acceleration smoothness), an optional friction-cone term for the
demonstrator and an optional conservative value term for the learned
controller.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .contact import GRAVITY, ObjectParams, contact_forces, friction_cost, grasp_matrix, grasp_pinv, gravitoinertial_wrench_arrays
from .kernels import rollout_kinematics
from .kinematics import ChainModel, JointState, forward_kinematics, jacobian


class MpcError(RuntimeError):
    pass


@dataclass(frozen=True)
class CostWeights:
    goal: float = 10.0
    stop: float = 0.3
    joint_limit: float = 100.0
    smooth: float = 1e-3
    friction: float = 0.0
    value: float = 0.0
    level: float = 0.0
    d_stop: float = 0.10
    limit_margin: float = 0.1


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    n_samples: int = 64
    noise_sigma: float = 1.0
    smoothing: float = 0.9
    temperature: float = 0.1
    gamma: float = 0.99
    opt_iters: int = 1
    dt: float = 0.02
    warm_start: bool = True
    brake_samples: bool = True
    guide_gains: tuple = (2.0, 5.0, 10.0)
    guide_level: float = 10.0
    weights: CostWeights = field(default_factory=CostWeights)

    def __post_init__(self):
        if self.horizon < 1 or self.n_samples < 1 or self.opt_iters < 1:
            raise MpcError("horizon, n_samples and opt_iters must be >= 1")
        if not self.temperature > 0:
            raise MpcError("temperature must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise MpcError("gamma must lie in [0, 1)")
        if not 0.0 <= self.smoothing < 1.0:
            raise MpcError("smoothing must lie in [0, 1)")

    def with_weights(self, **kw) -> "MpcConfig":
        return replace(self, weights=replace(self.weights, **kw))

    @classmethod
    def from_dict(cls, cfg: dict) -> "MpcConfig":
        cfg = dict(cfg)
        if "guide_gains" in cfg:
            cfg["guide_gains"] = tuple(cfg["guide_gains"])
        weights = CostWeights(**cfg.pop("weights", {}))
        return cls(weights=weights, **cfg)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class RolloutBatch:
    """Predicted trajectories for ``N`` control sequences over ``H`` steps (index 0 = now)."""

    controls: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    pos: np.ndarray
    rot: np.ndarray
    vel: np.ndarray
    acc: np.ndarray
    step_costs: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.controls.shape[0]

    @property
    def horizon(self) -> int:
        return self.controls.shape[1]


def sample_sequences(mean: np.ndarray, config: MpcConfig, rng: np.random.Generator,
                     acc_limit: np.ndarray | None = None) -> np.ndarray:
    """``N`` noisy copies of ``mean`` (H, J); sample 0 is the mean itself.

    Noise is an AR(1) process along the horizon with coefficient
    ``config.smoothing`` and stationary standard deviation ``noise_sigma``.
    """
    H, J = mean.shape
    N = config.n_samples
    eps = rng.standard_normal((N, H, J))
    a = config.smoothing
    if a > 0:
        scale = np.sqrt(1.0 - a * a)
        for t in range(1, H):
            eps[:, t] = a * eps[:, t - 1] + scale * eps[:, t]
    seqs = mean[None] + config.noise_sigma * eps
    seqs[0] = mean
    if acc_limit is not None:
        seqs = np.clip(seqs, -acc_limit, acc_limit)
    return seqs


def brake_sequence(js: JointState, horizon: int, dt: float, acc_limit: np.ndarray) -> np.ndarray:
    """Decelerate every joint to rest as fast as the limits allow, then hold."""
    out = np.zeros((horizon, js.qd.shape[0]))
    qd = js.qd.copy()
    for t in range(horizon):
        a = np.clip(-qd / dt, -acc_limit, acc_limit)
        out[t] = a
        qd = qd + a * dt
        if not np.any(qd):
            break
    return out


def guide_sequences(js: JointState, chain: ChainModel, goal: np.ndarray, gains,
                    horizon: int, dt: float, level_gain: float = 0.0,
                    null_damping: float = 4.0) -> np.ndarray:
    """Joint-acceleration proposals from critically damped PD laws.

    The arm is linearized at the current state: the Jacobian is held fixed,
    the tool point follows a double integrator and the joint accelerations
    are the least-norm preimage of the task acceleration plus null-space
    damping. With ``level_gain`` 0 orientation is left free; otherwise the
    tray normal is also servoed toward world +z.
    """
    gains = tuple(gains)
    T = forward_kinematics(chain, js.q)
    J = jacobian(chain, js.q)
    Jt = J if level_gain > 0 else J[:3]
    Jp = np.linalg.pinv(Jt)
    null = np.eye(chain.n_joints) - Jp @ Jt
    up = np.array([0.0, 0.0, 1.0])
    out = np.zeros((len(gains), horizon, chain.n_joints))
    for k, kp in enumerate(gains):
        kd = 2.0 * np.sqrt(kp)
        kdr = 2.0 * np.sqrt(level_gain)
        p, z, qd = T[:3, 3].copy(), T[:3, 2].copy(), js.qd.copy()
        for t in range(horizon):
            tw = J @ qd
            a = kp * (goal - p) - kd * tw[:3]
            if level_gain > 0:
                a = np.concatenate([a, level_gain * np.cross(z, up) - kdr * tw[3:]])
            qdd = Jp @ a - null_damping * (null @ qd)
            qdd = np.clip(qdd, -chain.acc_limit, chain.acc_limit)
            out[k, t] = qdd
            qd = qd + qdd * dt
            tw = J @ qd
            p = p + tw[:3] * dt
            z = z + np.cross(tw[3:], z) * dt
            z /= np.linalg.norm(z)
    return out


def rollout(start: JointState, seqs: np.ndarray, chain: ChainModel, dt: float = 0.02,
            backend: str | None = None) -> RolloutBatch:
    seqs = np.asarray(seqs, dtype=float)
    if seqs.ndim == 2:
        seqs = seqs[None]
    q, qd, qdd, pos, rot, vel, acc = rollout_kinematics(chain, start, seqs, dt, backend)
    return RolloutBatch(seqs, q, qd, qdd, pos, rot, vel, acc)


class CostStack:
    """Per-step running costs plus an optional whole-rollout value term.

    ``friction_obj`` is the object model the controller *believes*; the
    friction term is skipped entirely when its weight is zero.
    """

    def __init__(self, chain: ChainModel, weights: CostWeights,
                 friction_obj: ObjectParams | None = None, value_term=None,
                 gravity=GRAVITY):
        self.chain = chain
        self.w = weights
        self.friction_obj = friction_obj
        self.value_term = value_term
        self.gravity = np.asarray(gravity, dtype=float)
        if weights.friction > 0 and friction_obj is None:
            raise MpcError("friction weight set but no object model given")
        if weights.value > 0 and value_term is None:
            raise MpcError("value weight set but no value ensemble given")
        self._pinv = grasp_pinv(grasp_matrix(friction_obj)) if friction_obj is not None else None

    def terms(self, ro: RolloutBatch, goal: np.ndarray) -> dict[str, np.ndarray]:
        """Named (N, H) cost arrays; entry ``t`` scores the state reached by control ``t``."""
        w = self.w
        pos = ro.pos[:, 1:]
        dist = np.linalg.norm(pos - goal, axis=-1)
        out = {"goal": w.goal * dist}
        if w.stop:
            speed = np.linalg.norm(ro.vel[:, 1:, :3], axis=-1) + np.linalg.norm(ro.vel[:, 1:, 3:], axis=-1)
            ramp = np.clip(1.0 - dist / w.d_stop, 0.0, 1.0)
            out["stop"] = w.stop * ramp * speed
        if w.joint_limit:
            q = ro.q[:, 1:]
            lo = self.chain.lower + w.limit_margin
            hi = self.chain.upper - w.limit_margin
            out["joint_limit"] = w.joint_limit * (np.maximum(q - hi, 0.0) + np.maximum(lo - q, 0.0)).sum(-1)
        if w.smooth:
            out["smooth"] = w.smooth * np.sum(ro.controls ** 2, axis=-1)
        if w.level:
            out["level"] = w.level * (1.0 - ro.rot[:, 1:, 2, 2])
        if w.friction:
            obj = self.friction_obj
            wgi = gravitoinertial_wrench_arrays(ro.rot[:, 1:], ro.acc[:, 1:, :3], ro.vel[:, 1:, 3:],
                                                ro.acc[:, 1:, 3:], obj, self.gravity)
            F = contact_forces(wgi, pinv=self._pinv)
            out["friction"] = w.friction * friction_cost(F, obj.mu)
        return out

    def evaluate(self, ro: RolloutBatch, goal: np.ndarray, gamma: float) -> RolloutBatch:
        terms = self.terms(ro, goal)
        step_costs = sum(terms.values())
        G = step_costs @ (gamma ** np.arange(ro.horizon, dtype=float))
        if self.w.value:
            G = G + self.w.value * self.value_term(ro.pos, ro.rot, ro.vel, ro.acc)
        ro.step_costs = step_costs
        ro.returns = G
        return ro


def evaluate_costs(ro: RolloutBatch, cost_stack: CostStack, config: MpcConfig,
                   goal) -> RolloutBatch:
    return cost_stack.evaluate(ro, np.asarray(goal, dtype=float), config.gamma)


def mppi_weights(returns: np.ndarray, temperature: float) -> np.ndarray:
    returns = np.asarray(returns, dtype=float)
    finite = np.isfinite(returns)
    if not np.any(finite):
        raise MpcError("all sample returns are non-finite")
    shifted = np.where(finite, returns - np.min(returns[finite]), np.inf)
    w = np.exp(-shifted / temperature)
    return w / w.sum()


def update(mean: np.ndarray, seqs: np.ndarray, returns: np.ndarray,
           temperature: float) -> np.ndarray:
    """Exponentially weighted average of sampled sequences (``mean`` only fixes the shape)."""
    w = mppi_weights(returns, temperature)
    return np.tensordot(w, seqs, axes=1).reshape(mean.shape)


@dataclass
class ControllerState:
    mean: np.ndarray
    rng: np.random.Generator


class MppiController:
    """Receding-horizon MPPI around a ``CostStack``.

    ``trace`` (optional) receives one dict per optimizer iteration with the
    sample returns and weights; ``JsonlTrace`` writes them as JSON lines.
    """

    def __init__(self, chain: ChainModel, config: MpcConfig, costs: CostStack,
                 seed: int = 0, trace: Callable[[dict], None] | None = None,
                 backend: str | None = None):
        self.chain = chain
        self.cfg = config
        self.costs = costs
        self.trace = trace
        self.backend = backend
        self.state = self.initial_state(seed)

    def initial_state(self, seed: int) -> ControllerState:
        mean = np.zeros((self.cfg.horizon, self.chain.n_joints))
        return ControllerState(mean, np.random.default_rng(seed))

    def reset(self, seed: int):
        self.state = self.initial_state(seed)

    def control_step(self, js: JointState, goal) -> np.ndarray:
        cmd, self.state = control_step(js, goal, self.state, self.cfg, self.chain,
                                       self.costs, self.trace, self.backend)
        return cmd


def control_step(js: JointState, goal, state: ControllerState, config: MpcConfig,
                 chain: ChainModel, costs: CostStack, trace=None, backend=None):
    """One MPC step: optimize, emit the first action, shift the mean."""
    goal = np.asarray(goal, dtype=float)
    mean = state.mean
    for it in range(config.opt_iters):
        seqs = sample_sequences(mean, config, state.rng, chain.acc_limit)
        if config.brake_samples and seqs.shape[0] >= 3:
            # Noise alone almost never lands on an exact stop.
            seqs[1] = 0.0
            seqs[2] = brake_sequence(js, config.horizon, config.dt, chain.acc_limit)
        n_guide = min(len(config.guide_gains), seqs.shape[0] - 3)
        if n_guide > 0:
            seqs[3:3 + n_guide] = guide_sequences(js, chain, goal, config.guide_gains[:n_guide],
                                                  config.horizon, config.dt, config.guide_level)
        ro = rollout(js, seqs, chain, config.dt, backend)
        costs.evaluate(ro, goal, config.gamma)
        mean = update(mean, seqs, ro.returns, config.temperature)
        if trace is not None:
            trace({"iter": it, "returns": ro.returns.tolist(),
                   "weights": mppi_weights(ro.returns, config.temperature).tolist()})
    mean = np.clip(mean, -chain.acc_limit, chain.acc_limit)
    cmd = mean[0].copy()
    if config.warm_start:
        nxt = np.empty_like(mean)
        nxt[:-1] = mean[1:]
        nxt[-1] = 0.0
    else:
        nxt = np.zeros_like(mean)
    return cmd, ControllerState(nxt, state.rng)


class JsonlTrace:
    def __init__(self, path):
        self._fh = open(path, "w")
        self.step = -1

    def __call__(self, rec: dict):
        if rec["iter"] == 0:
            self.step += 1
        self._fh.write(json.dumps({"step": self.step, **rec}) + "\n")

    def close(self):
        self._fh.close()
