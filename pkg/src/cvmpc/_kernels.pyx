# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kinematics.

Mirrors ``cvmpc._kernels_py.rollout_kinematics`` exactly in structure; see
that module for the array contract.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos

cnp.import_array()

DEF MAXJ = 16


cdef inline void matmul4(const double* A, const double* B, double* C) noexcept nogil:
    cdef int i, j
    for i in range(4):
        for j in range(4):
            C[4 * i + j] = (A[4 * i] * B[j] + A[4 * i + 1] * B[4 + j]
                            + A[4 * i + 2] * B[8 + j] + A[4 * i + 3] * B[12 + j])


cdef inline void rot4(const double* a, double angle, double* R) noexcept nogil:
    # Rodrigues: I + s K + (1 - c) K^2, embedded in a 4x4 transform.
    cdef double s = sin(angle)
    cdef double c1 = 1.0 - cos(angle)
    cdef double x = a[0], y = a[1], z = a[2]
    R[0] = 1.0 + c1 * (-y * y - z * z)
    R[1] = -s * z + c1 * (x * y)
    R[2] = s * y + c1 * (x * z)
    R[3] = 0.0
    R[4] = s * z + c1 * (x * y)
    R[5] = 1.0 + c1 * (-x * x - z * z)
    R[6] = -s * x + c1 * (y * z)
    R[7] = 0.0
    R[8] = -s * y + c1 * (x * z)
    R[9] = s * x + c1 * (y * z)
    R[10] = 1.0 + c1 * (-x * x - y * y)
    R[11] = 0.0
    R[12] = 0.0
    R[13] = 0.0
    R[14] = 0.0
    R[15] = 1.0


cdef void fk_jac(const double* base, const double* origins, const double* axes,
                 const double* tool, int J, const double* q,
                 double* T_out, double* jac) noexcept nogil:
    """Tool pose (row-major 4x4) and 6xJ geometric Jacobian (row-major)."""
    cdef double T[16]
    cdef double tmp[16]
    cdef double R[16]
    cdef double pj[MAXJ * 3]
    cdef double zj[MAXJ * 3]
    cdef int i, k
    cdef const double* ax
    for k in range(16):
        T[k] = base[k]
    for i in range(J):
        matmul4(T, &origins[16 * i], tmp)
        ax = &axes[3 * i]
        pj[3 * i] = tmp[3]
        pj[3 * i + 1] = tmp[7]
        pj[3 * i + 2] = tmp[11]
        zj[3 * i] = tmp[0] * ax[0] + tmp[1] * ax[1] + tmp[2] * ax[2]
        zj[3 * i + 1] = tmp[4] * ax[0] + tmp[5] * ax[1] + tmp[6] * ax[2]
        zj[3 * i + 2] = tmp[8] * ax[0] + tmp[9] * ax[1] + tmp[10] * ax[2]
        rot4(ax, q[i], R)
        matmul4(tmp, R, T)
    matmul4(T, tool, T_out)
    cdef double ex = T_out[3], ey = T_out[7], ez = T_out[11]
    cdef double rx, ry, rz, zx, zy, zz
    for i in range(J):
        zx = zj[3 * i]
        zy = zj[3 * i + 1]
        zz = zj[3 * i + 2]
        rx = ex - pj[3 * i]
        ry = ey - pj[3 * i + 1]
        rz = ez - pj[3 * i + 2]
        jac[i] = zy * rz - zz * ry
        jac[J + i] = zz * rx - zx * rz
        jac[2 * J + i] = zx * ry - zy * rx
        jac[3 * J + i] = zx
        jac[4 * J + i] = zy
        jac[5 * J + i] = zz


cdef void ee_eval(const double* base, const double* origins, const double* axes,
                  const double* tool, int J, double eps,
                  const double* q, const double* qd, const double* qdd,
                  double* pos, double* rot, double* vel, double* acc) noexcept nogil:
    cdef double T[16]
    cdef double jac[6 * MAXJ]
    cdef double jp[6 * MAXJ]
    cdef double jm[6 * MAXJ]
    cdef double qp[MAXJ]
    cdef double qm[MAXJ]
    cdef int i, r
    cdef bint moving = 0
    fk_jac(base, origins, axes, tool, J, q, T, jac)
    for r in range(3):
        pos[r] = T[4 * r + 3]
        rot[3 * r] = T[4 * r]
        rot[3 * r + 1] = T[4 * r + 1]
        rot[3 * r + 2] = T[4 * r + 2]
    for i in range(J):
        if qd[i] != 0.0:
            moving = 1
    for r in range(6):
        vel[r] = 0.0
        acc[r] = 0.0
        for i in range(J):
            vel[r] += jac[r * J + i] * qd[i]
            acc[r] += jac[r * J + i] * qdd[i]
    if moving:
        for i in range(J):
            qp[i] = q[i] + eps * qd[i]
            qm[i] = q[i] - eps * qd[i]
        fk_jac(base, origins, axes, tool, J, qp, T, jp)
        fk_jac(base, origins, axes, tool, J, qm, T, jm)
        for r in range(6):
            for i in range(J):
                acc[r] += (jp[r * J + i] - jm[r * J + i]) / (2.0 * eps) * qd[i]


def rollout_kinematics(const double[:, ::1] base, const double[:, :, ::1] origins,
                       const double[:, ::1] axes, const double[:, ::1] tool,
                       const double[::1] lower, const double[::1] upper,
                       const double[::1] vel_limit, const double[::1] acc_limit,
                       const double[::1] q0, const double[::1] qd0, const double[::1] qdd0,
                       const double[:, :, ::1] controls, double dt, double eps):
    cdef int N = controls.shape[0]
    cdef int H = controls.shape[1]
    cdef int J = controls.shape[2]
    if J > MAXJ:
        raise ValueError("too many joints for the compiled kernel")
    q_out = np.empty((N, H + 1, J))
    qd_out = np.empty((N, H + 1, J))
    qdd_out = np.empty((N, H + 1, J))
    pos_out = np.empty((N, H + 1, 3))
    rot_out = np.empty((N, H + 1, 3, 3))
    vel_out = np.empty((N, H + 1, 6))
    acc_out = np.empty((N, H + 1, 6))
    cdef double[:, :, ::1] qv = q_out
    cdef double[:, :, ::1] qdv = qd_out
    cdef double[:, :, ::1] qddv = qdd_out
    cdef double[:, :, ::1] posv = pos_out
    cdef double[:, :, :, ::1] rotv = rot_out
    cdef double[:, :, ::1] velv = vel_out
    cdef double[:, :, ::1] accv = acc_out
    cdef double q[MAXJ]
    cdef double qd[MAXJ]
    cdef double qdd[MAXJ]
    cdef double e0pos[3]
    cdef double e0rot[9]
    cdef double e0vel[6]
    cdef double e0acc[6]
    cdef double cmd, v, qraw, qn
    cdef int n, h, i, k

    with nogil:
        ee_eval(&base[0, 0], &origins[0, 0, 0], &axes[0, 0], &tool[0, 0], J, eps,
                &q0[0], &qd0[0], &qdd0[0], e0pos, e0rot, e0vel, e0acc)
        for n in range(N):
            for i in range(J):
                q[i] = q0[i]
                qd[i] = qd0[i]
                qdd[i] = qdd0[i]
                qv[n, 0, i] = q[i]
                qdv[n, 0, i] = qd[i]
                qddv[n, 0, i] = qdd[i]
            for k in range(3):
                posv[n, 0, k] = e0pos[k]
            for k in range(9):
                rotv[n, 0, k // 3, k % 3] = e0rot[k]
            for k in range(6):
                velv[n, 0, k] = e0vel[k]
                accv[n, 0, k] = e0acc[k]
            for h in range(H):
                for i in range(J):
                    cmd = controls[n, h, i]
                    if cmd > acc_limit[i]:
                        cmd = acc_limit[i]
                    elif cmd < -acc_limit[i]:
                        cmd = -acc_limit[i]
                    v = qd[i] + cmd * dt
                    if v > vel_limit[i]:
                        v = vel_limit[i]
                    elif v < -vel_limit[i]:
                        v = -vel_limit[i]
                    qraw = q[i] + v * dt
                    qn = qraw
                    if qn > upper[i]:
                        qn = upper[i]
                    elif qn < lower[i]:
                        qn = lower[i]
                    if qn != qraw:
                        v = 0.0
                    qdd[i] = (v - qd[i]) / dt
                    qd[i] = v
                    q[i] = qn
                    qv[n, h + 1, i] = qn
                    qdv[n, h + 1, i] = v
                    qddv[n, h + 1, i] = qdd[i]
                ee_eval(&base[0, 0], &origins[0, 0, 0], &axes[0, 0], &tool[0, 0], J, eps,
                        q, qd, qdd, &posv[n, h + 1, 0], &rotv[n, h + 1, 0, 0],
                        &velv[n, h + 1, 0], &accv[n, h + 1, 0])
    return q_out, qd_out, qdd_out, pos_out, rot_out, vel_out, acc_out
