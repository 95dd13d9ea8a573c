"""End-effector observation vectors fed to the value ensemble.

The full observation is 24 numbers laid out as::

    [p (3) | v (3) | w (3) | a (3) | alpha (3) | R row-major (9)]

and every other mode is a fixed subset of those columns, so a dataset logged
in full mode can be projected onto any mode.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .kinematics import EndEffectorState


class ObservationMode(str, Enum):
    FULL = "full"
    VEL_ACC_ROT = "vel_acc_rot"
    VEL_ACC = "vel_acc"
    ROT = "rot"


_POS = list(range(0, 3))
_VEL = list(range(3, 9))
_ACC = list(range(9, 15))
_ROT = list(range(15, 24))

COLUMNS = {
    ObservationMode.FULL: _POS + _VEL + _ACC + _ROT,
    ObservationMode.VEL_ACC_ROT: _VEL + _ACC + _ROT,
    ObservationMode.VEL_ACC: _VEL + _ACC,
    ObservationMode.ROT: _ROT,
}
FULL_DIM = 24


def obs_dim(mode) -> int:
    return len(COLUMNS[ObservationMode(mode)])


def full_from_arrays(pos, rot, vel, acc) -> np.ndarray:
    """Stack batched kinematic arrays (..., 3), (..., 3, 3), (..., 6), (..., 6) into (..., 24)."""
    rot = np.asarray(rot)
    return np.concatenate(
        [pos, vel, acc, rot.reshape(rot.shape[:-2] + (9,))], axis=-1)


def project(full_obs: np.ndarray, mode) -> np.ndarray:
    """Select the columns of ``mode`` from full observations."""
    return np.asarray(full_obs)[..., COLUMNS[ObservationMode(mode)]]


def extract_observation(ee: EndEffectorState, mode=ObservationMode.FULL) -> np.ndarray:
    full = full_from_arrays(ee.position, ee.rotation, ee.twist, ee.spatial_acc)
    return project(full, mode)
