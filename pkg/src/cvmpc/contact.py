"""Tray-object contact model.

Quasi-static reasoning about an object resting on the tray: the gravitoinertial
wrench it must be held against, the grasp matrix of its support contacts, the
minimum-norm contact forces that balance it, friction-cone margins, the
demonstrator's friction cost, and a planar Coulomb slip model.

Frames: contact forces and wrenches live in the tray (end-effector) frame, with
the torque taken about the object's centre of mass. Everything that takes
kinematic arrays accepts arbitrary leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .kinematics import EndEffectorState, skew

GRAVITY = np.array([0.0, 0.0, -9.81])
PINV_RCOND = 1e-10


class ContactError(ValueError):
    pass


def cuboid_inertia(mass: float, dims) -> np.ndarray:
    a, b, c = dims
    return mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])


def footprint_corners(length: float, width: float) -> np.ndarray:
    hx, hy = length / 2.0, width / 2.0
    return np.array([[hx, hy, 0.0], [-hx, hy, 0.0], [-hx, -hy, 0.0], [hx, -hy, 0.0]])


@dataclass(frozen=True)
class ObjectParams:
    """Rigid object resting on the tray.

    ``com`` and ``contact_points`` are in the tray frame (tray surface at
    ``z = 0``). ``contact_frames[i]`` rotates contact-local vectors (tangents x,
    y; normal z) into the tray frame and defaults to identity.
    """

    mass: float
    com: np.ndarray
    inertia: np.ndarray
    mu: float
    contact_points: np.ndarray
    contact_frames: np.ndarray = None
    name: str = "object"

    def __post_init__(self):
        pts = np.asarray(self.contact_points, dtype=float)
        object.__setattr__(self, "contact_points", pts)
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        if self.contact_frames is None:
            object.__setattr__(self, "contact_frames", np.repeat(np.eye(3)[None], len(pts), 0))
        if not self.mass > 0:
            raise ContactError("mass must be positive")
        if self.mu < 0:
            raise ContactError("friction coefficient must be non-negative")
        J = self.inertia
        if J.shape != (3, 3) or not np.allclose(J, J.T) or np.min(np.linalg.eigvalsh(J)) < -1e-12:
            raise ContactError("inertia must be a symmetric PSD 3x3 matrix")
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
            raise ContactError("need at least 3 contact points")
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise ContactError("contact points are collinear")

    @property
    def n_contacts(self) -> int:
        return len(self.contact_points)

    def with_mu(self, mu: float) -> "ObjectParams":
        return ObjectParams(self.mass, self.com, self.inertia, mu, self.contact_points,
                            self.contact_frames, self.name)

    @classmethod
    def cuboid(cls, name: str, mass: float, dims, mu: float, com_height: float | None = None):
        """Solid cuboid standing on its ``dims[0] x dims[1]`` face, corners as contacts."""
        dims = tuple(float(d) for d in dims)
        h = dims[2] / 2.0 if com_height is None else float(com_height)
        return cls(mass=mass, com=np.array([0.0, 0.0, h]), inertia=cuboid_inertia(mass, dims),
                   mu=mu, contact_points=footprint_corners(dims[0], dims[1]), name=name)

    @classmethod
    def from_dict(cls, name: str, cfg: dict) -> "ObjectParams":
        if "dims" in cfg:
            obj = cls.cuboid(name, cfg["mass"], cfg["dims"], cfg["mu"], cfg.get("com_height"))
            if "com" in cfg:
                obj = cls(obj.mass, cfg["com"], obj.inertia, obj.mu, obj.contact_points, name=name)
            return obj
        return cls(mass=cfg["mass"], com=cfg["com"], inertia=cfg["inertia"], mu=cfg["mu"],
                   contact_points=cfg["contact_points"], name=name)


def load_objects(path: str | Path | None = None) -> dict[str, ObjectParams]:
    if path is None:
        text = resources.files("cvmpc.data").joinpath("objects.yaml").read_text()
    else:
        text = Path(path).read_text()
    cfg = yaml.safe_load(text)
    return {name: ObjectParams.from_dict(name, spec) for name, spec in cfg["objects"].items()}


def object_preset(name: str) -> ObjectParams:
    presets = load_objects()
    if name not in presets:
        raise ContactError(f"unknown object preset {name!r}; have {sorted(presets)}")
    return presets[name]


@dataclass
class Wrench:
    force: np.ndarray
    torque: np.ndarray
    frame: str = "tray"

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque], axis=-1)


def gravitoinertial_wrench_arrays(rot, lin_acc, ang_vel, ang_acc, obj: ObjectParams,
                                  g=GRAVITY) -> np.ndarray:
    """Batched gravitoinertial wrench ``[f; tau]`` (..., 6) in the tray frame.

    Inputs are world-frame (rotation ``R_e`` maps tray to world); they are
    rotated into the tray frame before use.
    """
    rot = np.asarray(rot, dtype=float)
    Rt = np.swapaxes(rot, -1, -2)
    a = np.einsum("...ij,...j->...i", Rt, lin_acc)
    w = np.einsum("...ij,...j->...i", Rt, ang_vel)
    dw = np.einsum("...ij,...j->...i", Rt, ang_acc)
    gb = np.einsum("...ij,j->...i", Rt, np.asarray(g, dtype=float))
    c = obj.com
    # (dw^x + w^x w^x) c = dw x c + w x (w x c)
    rot_term = np.cross(dw, c) + np.cross(w, np.cross(w, c))
    f = -obj.mass * ((a - gb) + rot_term)
    Jw = w @ obj.inertia.T
    tau = -(dw @ obj.inertia.T + np.cross(w, Jw))
    return np.concatenate([f, tau], axis=-1)


def gravitoinertial_wrench(ee: EndEffectorState, obj: ObjectParams, g=GRAVITY) -> Wrench:
    vals = [ee.rotation, ee.lin_acc, ee.ang_vel, ee.ang_acc, g]
    if not all(np.all(np.isfinite(v)) for v in vals):
        raise ContactError("non-finite end-effector state")
    w = gravitoinertial_wrench_arrays(ee.rotation, ee.lin_acc, ee.ang_vel, ee.ang_acc, obj, g)
    return Wrench(w[:3], w[3:])


def grasp_matrix(obj: ObjectParams) -> np.ndarray:
    """6 x 3n map from stacked contact-local forces to the wrench about the CoM."""
    n = obj.n_contacts
    if n < 3:
        raise ContactError("need at least 3 contacts")
    G = np.zeros((6, 3 * n))
    for i in range(n):
        R = obj.contact_frames[i]
        r = obj.contact_points[i] - obj.com
        G[:3, 3 * i:3 * i + 3] = R
        G[3:, 3 * i:3 * i + 3] = skew(r) @ R
    return G


def grasp_pinv(G: np.ndarray) -> np.ndarray:
    """SVD pseudo-inverse with singular values below ``1e-10 * s_max`` dropped."""
    return np.linalg.pinv(G, rcond=PINV_RCOND)


@dataclass
class ContactForces:
    stacked: np.ndarray

    @property
    def per_contact(self) -> np.ndarray:
        return self.stacked.reshape(-1, 3)


def contact_forces(w_gi, G: np.ndarray | None = None, *, pinv: np.ndarray | None = None):
    """Minimum-norm contact forces ``F_C = G^+ (-w_GI)``.

    Accepts a ``Wrench`` (returns ``ContactForces``) or a raw (..., 6) array
    (returns (..., n, 3)). Pass a precomputed ``pinv`` in hot loops.
    """
    if pinv is None:
        pinv = grasp_pinv(G)
    if isinstance(w_gi, Wrench):
        vec = w_gi.vector
        if not np.all(np.isfinite(vec)):
            raise ContactError("non-finite wrench")
        return ContactForces(pinv @ (-vec))
    vec = np.asarray(w_gi, dtype=float)
    F = -vec @ pinv.T
    return F.reshape(vec.shape[:-1] + (-1, 3))


def _as_per_contact(F) -> np.ndarray:
    if isinstance(F, ContactForces):
        return F.per_contact
    F = np.asarray(F, dtype=float)
    if F.ndim == 1 or F.shape[-1] != 3:
        F = F.reshape(F.shape[:-1] + (-1, 3))
    return F


def friction_margins(F, mu: float):
    """Per-contact margins ``mu f_z - |f_t|`` and the ``f_z >= 0`` flags."""
    F = _as_per_contact(F)
    ft = np.hypot(F[..., 0], F[..., 1])
    return mu * F[..., 2] - ft, F[..., 2] >= 0.0


def friction_cost(F, mu: float) -> np.ndarray:
    """Summed cone violation over contacts; zero iff every cone holds.

    A separating contact (``f_z < 0``) pays its cone excess plus ``|f_z|``,
    which keeps the cost continuous through ``f_z = 0``.
    """
    F = _as_per_contact(F)
    fz = F[..., 2]
    excess = np.hypot(F[..., 0], F[..., 1]) - mu * fz
    per = np.where(fz >= 0.0, np.maximum(excess, 0.0), excess - fz)
    return per.sum(axis=-1)


@dataclass
class SlipState:
    """Planar slip of the object relative to the tray (tray frame, metres)."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    distance: float = 0.0

    def copy(self) -> "SlipState":
        return SlipState(self.position.copy(), self.velocity.copy(), float(self.distance))


def slip_step(slip: SlipState, F, obj: ObjectParams, ee: EndEffectorState | None,
              dt: float, mu: float | None = None) -> SlipState:
    """Advance the planar Coulomb slip model by one step.

    The aggregate tangential load on the object is the tangential part of the
    gravitoinertial force, equal to minus the summed tangential contact force.
    Sticking persists while the load fits inside the aggregate cone; otherwise
    the excess accelerates the object along the load. A sliding object feels
    kinetic friction (same ``mu``) against its relative velocity and re-sticks
    when that velocity would reverse under a load the cone can hold.
    ``ee`` is unused by this model and accepted for interface symmetry.
    """
    if not dt > 0:
        raise ContactError("dt must be positive")
    mu = obj.mu if mu is None else mu
    Fc = _as_per_contact(F)
    world = np.einsum("nij,nj->ni", obj.contact_frames, Fc).sum(axis=0)
    load = -world[:2]
    normal = world[2]
    m = obj.mass
    cap = mu * max(normal, 0.0)
    v = slip.velocity
    speed = float(np.linalg.norm(v))
    load_mag = float(np.linalg.norm(load))

    if speed == 0.0:
        if load_mag <= cap:
            return slip.copy()
        acc = (load_mag - cap) / m * (load / load_mag)
        v_new = v + acc * dt
    else:
        acc = (load - cap * v / speed) / m
        v_new = v + acc * dt
        if np.dot(v_new, v) <= 0.0 and load_mag <= cap:
            v_new = np.zeros(2)
    dp = v_new * dt
    return SlipState(slip.position + dp, v_new, slip.distance + float(np.linalg.norm(dp)))


def tilt_sweep_onset(obj: ObjectParams, angles: np.ndarray, axis=(1.0, 0.0, 0.0),
                     g=GRAVITY) -> float | None:
    """First angle (rad) of a quasi-static tilt about ``axis`` with positive friction cost."""
    from .kinematics import axis_angle_matrix

    pinv = grasp_pinv(grasp_matrix(obj))
    axis = np.asarray(axis, dtype=float)
    R = np.stack([axis_angle_matrix(axis, a) for a in angles])
    zeros = np.zeros((len(angles), 3))
    w = gravitoinertial_wrench_arrays(R, zeros, zeros, zeros, obj, g)
    cost = friction_cost(contact_forces(w, pinv=pinv), obj.mu)
    hits = np.nonzero(cost > 0.0)[0]
    return float(angles[hits[0]]) if len(hits) else None
