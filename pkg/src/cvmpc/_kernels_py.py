"""Pure-numpy rollout kinematics (fallback for the compiled ``_kernels``).

``rollout_kinematics`` integrates ``N`` joint-acceleration sequences of length
``H`` from a shared initial state and returns, for steps ``0..H``:

    q, qd, qdd : (N, H+1, J)
    pos        : (N, H+1, 3)
    rot        : (N, H+1, 3, 3)
    vel, acc   : (N, H+1, 6)   linear then angular, world frame

Step 0 is the initial state. Vectorized over samples, looped over time.
"""

import numpy as np


def _rodrigues(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    x, y, z = axis
    s = np.sin(angle)
    c1 = 1.0 - np.cos(angle)
    R = np.zeros(angle.shape + (4, 4))
    R[..., 0, 0] = 1.0 + c1 * (-y * y - z * z)
    R[..., 0, 1] = -s * z + c1 * (x * y)
    R[..., 0, 2] = s * y + c1 * (x * z)
    R[..., 1, 0] = s * z + c1 * (x * y)
    R[..., 1, 1] = 1.0 + c1 * (-x * x - z * z)
    R[..., 1, 2] = -s * x + c1 * (y * z)
    R[..., 2, 0] = -s * y + c1 * (x * z)
    R[..., 2, 1] = s * x + c1 * (y * z)
    R[..., 2, 2] = 1.0 + c1 * (-x * x - y * y)
    R[..., 3, 3] = 1.0
    return R


def fk_jac_batch(base, origins, axes, tool, q):
    """Tool poses (M, 4, 4) and Jacobians (M, 6, J) for joint rows ``q`` (M, J)."""
    M, J = q.shape
    T = np.broadcast_to(base, (M, 4, 4))
    p = np.empty((M, J, 3))
    zs = np.empty((M, J, 3))
    for i in range(J):
        F = T @ origins[i]
        p[:, i] = F[:, :3, 3]
        zs[:, i] = F[:, :3, :3] @ axes[i]
        T = F @ _rodrigues(axes[i], q[:, i])
    T = T @ tool
    r = T[:, None, :3, 3] - p
    jac = np.empty((M, 6, J))
    jac[:, :3, :] = np.cross(zs, r).transpose(0, 2, 1)
    jac[:, 3:, :] = zs.transpose(0, 2, 1)
    return T, jac


def ee_batch(base, origins, axes, tool, q, qd, qdd, eps):
    T, jac = fk_jac_batch(base, origins, axes, tool, q)
    vel = np.einsum("mrj,mj->mr", jac, qd)
    acc = np.einsum("mrj,mj->mr", jac, qdd)
    moving = np.any(qd != 0.0, axis=1)
    if np.any(moving):
        qm = q[moving]
        qdm = qd[moving]
        _, jp = fk_jac_batch(base, origins, axes, tool, qm + eps * qdm)
        _, jn = fk_jac_batch(base, origins, axes, tool, qm - eps * qdm)
        acc[moving] += np.einsum("mrj,mj->mr", (jp - jn) / (2.0 * eps), qdm)
    return T[:, :3, 3], T[:, :3, :3], vel, acc


def rollout_kinematics(base, origins, axes, tool, lower, upper, vel_limit, acc_limit,
                       q0, qd0, qdd0, controls, dt, eps):
    N, H, J = controls.shape
    q_out = np.empty((N, H + 1, J))
    qd_out = np.empty((N, H + 1, J))
    qdd_out = np.empty((N, H + 1, J))
    pos_out = np.empty((N, H + 1, 3))
    rot_out = np.empty((N, H + 1, 3, 3))
    vel_out = np.empty((N, H + 1, 6))
    acc_out = np.empty((N, H + 1, 6))

    p0, R0, v0, a0 = ee_batch(base, origins, axes, tool, q0[None], qd0[None], qdd0[None], eps)
    q = np.repeat(q0[None], N, axis=0)
    qd = np.repeat(qd0[None], N, axis=0)
    q_out[:, 0] = q
    qd_out[:, 0] = qd
    qdd_out[:, 0] = qdd0
    pos_out[:, 0] = p0
    rot_out[:, 0] = R0
    vel_out[:, 0] = v0
    acc_out[:, 0] = a0
    for h in range(H):
        cmd = np.clip(controls[:, h], -acc_limit, acc_limit)
        v = np.clip(qd + cmd * dt, -vel_limit, vel_limit)
        qraw = q + v * dt
        qn = np.clip(qraw, lower, upper)
        v = np.where(qn != qraw, 0.0, v)
        qdd = (v - qd) / dt
        q, qd = qn, v
        q_out[:, h + 1] = q
        qd_out[:, h + 1] = qd
        qdd_out[:, h + 1] = qdd
        p, R, vel, acc = ee_batch(base, origins, axes, tool, q, qd, qdd, eps)
        pos_out[:, h + 1] = p
        rot_out[:, h + 1] = R
        vel_out[:, h + 1] = vel
        acc_out[:, h + 1] = acc
    return q_out, qd_out, qdd_out, pos_out, rot_out, vel_out, acc_out
