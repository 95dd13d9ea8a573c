"""Backend selection for the rollout hot loop.

The compiled extension is used when it imports; set ``CVMPC_PURE_PYTHON=1``
to force the numpy fallback. ``BACKEND`` names the active implementation.
"""

import os

import numpy as np

from . import _kernels_py
from .kinematics import JDOT_EPS, ChainModel, JointState

_compiled = None
if os.environ.get("CVMPC_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def get_backend(name: str | None = None):
    if name is None:
        return _compiled if _compiled is not None else _kernels_py
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def rollout_kinematics(chain: ChainModel, start: JointState, controls: np.ndarray,
                       dt: float, backend: str | None = None):
    """Integrate ``controls`` (N, H, J) from ``start``; see ``_kernels_py`` for outputs."""
    impl = get_backend(backend)
    c = np.ascontiguousarray
    return impl.rollout_kinematics(
        c(chain.base, float), c(chain.origins, float), c(chain.axes, float),
        c(chain.tool, float), c(chain.lower, float), c(chain.upper, float),
        c(chain.vel_limit, float), c(chain.acc_limit, float),
        c(start.q, float), c(start.qd, float), c(start.qdd, float),
        c(controls, float), float(dt), JDOT_EPS,
    )
