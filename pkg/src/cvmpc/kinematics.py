"""Serial-arm kinematics for a tray-carrying manipulator.

The chain maps joint positions to the pose of the tray frame (called the
end-effector throughout the package). Twists are ``J(q) qd`` with the
geometric Jacobian; spatial accelerations add a ``Jdot qd`` term obtained by
central-differencing the Jacobian along ``qd``.

All world-frame vectors use the convention linear-then-angular.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

JDOT_EPS = 1e-6


class KinematicsError(ValueError):
    """Invalid argument passed to a kinematics routine."""


def skew(v: np.ndarray) -> np.ndarray:
    """Return the cross-product matrix ``v^x`` (works on stacked ``(..., 3)``)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def axis_angle_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis``."""
    axis = np.asarray(axis, dtype=float)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def so3_exp(rotvec: np.ndarray) -> np.ndarray:
    """Exponential map from a rotation vector to a rotation matrix."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(rotvec))
    if theta < 1e-12:
        return np.eye(3) + skew(rotvec)
    return axis_angle_matrix(rotvec / theta, theta)


def rpy_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = np.cos(roll), np.sin(roll)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cy, sy = np.cos(yaw), np.sin(yaw)
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return Rz @ Ry @ Rx


def make_transform(R: np.ndarray | None = None, p: np.ndarray | None = None) -> np.ndarray:
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if p is not None:
        T[:3, 3] = p
    return T


def _transform_from_spec(spec: dict) -> np.ndarray:
    xyz = spec.get("xyz", [0.0, 0.0, 0.0])
    rpy = spec.get("rpy", [0.0, 0.0, 0.0])
    return make_transform(rpy_matrix(*rpy), np.asarray(xyz, dtype=float))


def is_rigid(T: np.ndarray, tol: float = 1e-9) -> bool:
    R = T[:3, :3]
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
        and np.allclose(T[3], [0.0, 0.0, 0.0, 1.0])
    )


@dataclass(frozen=True)
class ChainModel:
    """Immutable description of a revolute serial chain.

    ``origins[i]`` is the fixed transform from joint ``i-1``'s frame to joint
    ``i``'s frame; joint ``i`` then rotates about ``axes[i]``. ``tool`` is the
    flange transform composed with the tray mount.
    """

    name: str
    base: np.ndarray
    origins: np.ndarray
    axes: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vel_limit: np.ndarray
    acc_limit: np.ndarray
    flange: np.ndarray
    tray_mount: np.ndarray
    poses: dict = field(default_factory=dict)

    def __post_init__(self):
        J = len(self.axes)
        for arr in (self.lower, self.upper, self.vel_limit, self.acc_limit):
            if len(arr) != J:
                raise KinematicsError("limit vectors must have one entry per joint")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise KinematicsError("joint limits must be finite")
        if np.any(self.lower >= self.upper):
            raise KinematicsError("joint limits need lower < upper")
        if np.any(self.vel_limit <= 0) or np.any(self.acc_limit <= 0):
            raise KinematicsError("velocity/acceleration limits must be positive")
        if not is_rigid(self.tray_mount):
            raise KinematicsError("tray mount is not a rigid transform")
        for arr in (self.base, self.origins, self.axes, self.lower, self.upper,
                    self.vel_limit, self.acc_limit, self.flange, self.tray_mount):
            arr.setflags(write=False)

    @property
    def n_joints(self) -> int:
        return len(self.axes)

    @property
    def tool(self) -> np.ndarray:
        return self.flange @ self.tray_mount

    def pose(self, name: str) -> np.ndarray:
        try:
            return np.array(self.poses[name], dtype=float)
        except KeyError:
            raise KinematicsError(f"unknown named pose {name!r}") from None

    @classmethod
    def from_dict(cls, cfg: dict) -> "ChainModel":
        joints = cfg["joints"]
        axes = []
        for j in joints:
            a = np.asarray(j.get("axis", [0.0, 0.0, 1.0]), dtype=float)
            axes.append(a / np.linalg.norm(a))
        lim = [j["limits"] for j in joints]
        return cls(
            name=cfg.get("name", "chain"),
            base=_transform_from_spec(cfg.get("base", {})),
            origins=np.stack([_transform_from_spec(j.get("origin", {})) for j in joints]),
            axes=np.stack(axes),
            lower=np.array([l["lower"] for l in lim], dtype=float),
            upper=np.array([l["upper"] for l in lim], dtype=float),
            vel_limit=np.array([l["velocity"] for l in lim], dtype=float),
            acc_limit=np.array([l["acceleration"] for l in lim], dtype=float),
            flange=_transform_from_spec(cfg.get("flange", {})),
            tray_mount=_transform_from_spec(cfg.get("tray_mount", {})),
            poses={k: list(v) for k, v in cfg.get("poses", {}).items()},
        )


def load_chain(path: str | Path | None = None) -> ChainModel:
    """Load a chain description; ``None`` gives the bundled Panda-like arm."""
    if path is None:
        text = resources.files("cvmpc.data").joinpath("panda.yaml").read_text()
    else:
        text = Path(path).read_text()
    return ChainModel.from_dict(yaml.safe_load(text))


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    @classmethod
    def at_rest(cls, q) -> "JointState":
        q = np.array(q, dtype=float)
        return cls(q, np.zeros_like(q), np.zeros_like(q))

    def copy(self) -> "JointState":
        return JointState(self.q.copy(), self.qd.copy(), self.qdd.copy())


@dataclass
class EndEffectorState:
    """World-frame pose, twist and spatial acceleration of the tray frame."""

    rotation: np.ndarray
    position: np.ndarray
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    lin_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def identity(cls) -> "EndEffectorState":
        return cls(np.eye(3), np.zeros(3))

    @property
    def pose(self) -> np.ndarray:
        return make_transform(self.rotation, self.position)

    @property
    def twist(self) -> np.ndarray:
        return np.concatenate([self.lin_vel, self.ang_vel])

    @property
    def spatial_acc(self) -> np.ndarray:
        return np.concatenate([self.lin_acc, self.ang_acc])


def _check_q(chain: ChainModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n_joints,):
        raise KinematicsError(
            f"expected {chain.n_joints} joint values, got shape {q.shape}")
    return q


def _joint_frames(chain: ChainModel, q: np.ndarray):
    """Yield world transforms of each joint frame before its rotation, and the tool pose."""
    T = chain.base.copy()
    frames = []
    for i in range(chain.n_joints):
        T = T @ chain.origins[i]
        frames.append(T.copy())
        T = T @ make_transform(axis_angle_matrix(chain.axes[i], q[i]))
    return frames, T @ chain.tool


def forward_kinematics(chain: ChainModel, q) -> np.ndarray:
    """Pose ``T_w^ee`` of the tray frame as a 4x4 homogeneous transform."""
    q = _check_q(chain, q)
    return _joint_frames(chain, q)[1]


def jacobian(chain: ChainModel, q) -> np.ndarray:
    """Geometric Jacobian (6 x J): linear rows on top, angular rows below, world frame."""
    q = _check_q(chain, q)
    frames, T_ee = _joint_frames(chain, q)
    p_ee = T_ee[:3, 3]
    Jac = np.empty((6, chain.n_joints))
    for i, F in enumerate(frames):
        z = F[:3, :3] @ chain.axes[i]
        Jac[:3, i] = np.cross(z, p_ee - F[:3, 3])
        Jac[3:, i] = z
    return Jac


def jacobian_dot_qd(chain: ChainModel, q, qd) -> np.ndarray:
    """``Jdot(q, qd) @ qd`` via a central difference of J along ``qd``."""
    q = _check_q(chain, q)
    qd = np.asarray(qd, dtype=float)
    if not np.any(qd):
        return np.zeros(6)
    eps = JDOT_EPS
    dJ = (jacobian(chain, q + eps * qd) - jacobian(chain, q - eps * qd)) / (2.0 * eps)
    return dJ @ qd


def ee_state(chain: ChainModel, js: JointState) -> EndEffectorState:
    q = _check_q(chain, js.q)
    qd = _check_q(chain, js.qd)
    qdd = _check_q(chain, js.qdd)
    T = forward_kinematics(chain, q)
    Jac = jacobian(chain, q)
    twist = Jac @ qd
    acc = Jac @ qdd + jacobian_dot_qd(chain, q, qd)
    return EndEffectorState(
        rotation=T[:3, :3], position=T[:3, 3].copy(),
        lin_vel=twist[:3], ang_vel=twist[3:],
        lin_acc=acc[:3], ang_acc=acc[3:],
    )


def integrate(chain: ChainModel, js: JointState, qdd_cmd, dt: float) -> JointState:
    """Semi-implicit Euler step with acceleration, velocity and position clamps.

    A joint that hits a position limit has its velocity zeroed; the stored
    acceleration is the one actually realized over the step.
    """
    if not dt > 0:
        raise KinematicsError("dt must be positive")
    cmd = _check_q(chain, qdd_cmd)
    if not np.all(np.isfinite(cmd)):
        raise KinematicsError("non-finite acceleration command")
    cmd = np.clip(cmd, -chain.acc_limit, chain.acc_limit)
    qd_new = np.clip(js.qd + cmd * dt, -chain.vel_limit, chain.vel_limit)
    q_raw = js.q + qd_new * dt
    q_new = np.clip(q_raw, chain.lower, chain.upper)
    qd_new = np.where(q_new != q_raw, 0.0, qd_new)
    qdd_eff = (qd_new - js.qd) / dt
    return JointState(q_new, qd_new, qdd_eff)


def floating_ee_step(ee: EndEffectorState, spatial_acc_cmd, dt: float) -> EndEffectorState:
    """Integrate a free-floating end-effector under a commanded spatial acceleration."""
    if not dt > 0:
        raise KinematicsError("dt must be positive")
    cmd = np.asarray(spatial_acc_cmd, dtype=float)
    if cmd.shape != (6,) or not np.all(np.isfinite(cmd)):
        raise KinematicsError("spatial acceleration must be 6 finite values")
    a, alpha = cmd[:3], cmd[3:]
    v = ee.lin_vel + a * dt
    w = ee.ang_vel + alpha * dt
    return EndEffectorState(
        rotation=so3_exp(w * dt) @ ee.rotation,
        position=ee.position + v * dt,
        lin_vel=v, ang_vel=w, lin_acc=a.copy(), ang_acc=alpha.copy(),
    )


def tilt_angle(rotation: np.ndarray) -> np.ndarray:
    """Angle (deg) between the tray normal ``R e_z`` and world ``+z``; stacks allowed."""
    cz = np.clip(np.asarray(rotation)[..., 2, 2], -1.0, 1.0)
    return np.degrees(np.arccos(cz))


def with_limits(chain: ChainModel, **kw) -> ChainModel:
    """Copy of ``chain`` with some fields replaced (arrays copied to stay writable-free)."""
    return replace(chain, **{k: np.asarray(v, dtype=float) for k, v in kw.items()})
