"""Pessimistic trajectory returns from a value ensemble.

For a rollout ``x_0..x_H`` each member ``i`` gives ``G_i = sum_t gamma^t V_i(x_t)``.
Costs are minimized, so pessimism means leaning toward the largest ``G_i``:

- ``scaled_log_mean_exp`` (default): ``lam * log(mean_i exp(G_i / lam))``,
  between the member mean (``lam -> inf``) and the member max (``lam -> 0``).
- ``paper_literal``: ``log(sum_i exp(G_i / lam))`` with no outer scale.

``initial_state`` mode aggregates whole-rollout member returns once;
``pointwise`` aggregates members at every step and then discounts.

Costs are non-negative, so member predictions are floored at ``floor``
(default 0) before aggregation; a member extrapolating below zero would
otherwise make unexplored states look better than any visited one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .observation import ObservationMode, extract_observation, full_from_arrays, project
from .value import EnsembleCheckpoint

__all__ = [
    "ObservationMode", "PessimismConfig", "PessimismMode", "Formula", "extract_observation",
    "member_return", "pessimistic_return", "blended_return", "blend_values", "ValueTerm",
]


class PessimismMode(str, Enum):
    INITIAL_STATE = "initial_state"
    POINTWISE = "pointwise"


class Formula(str, Enum):
    SCALED = "scaled_log_mean_exp"
    LITERAL = "paper_literal"


@dataclass(frozen=True)
class PessimismConfig:
    lam: float = 20.0
    mode: PessimismMode = PessimismMode.INITIAL_STATE
    formula: Formula = Formula.SCALED
    weight: float = 1.0
    floor: float | None = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.weight < 0:
            raise ValueError("blend weight must be non-negative")
        object.__setattr__(self, "mode", PessimismMode(self.mode))
        object.__setattr__(self, "formula", Formula(self.formula))


def discounts(n: int, gamma: float) -> np.ndarray:
    return gamma ** np.arange(n, dtype=float)


def member_return(values, gamma: float) -> np.ndarray:
    """Discounted sum over the last axis (the ``H+1`` rollout steps, step 0 included)."""
    values = np.asarray(values, dtype=float)
    return values @ discounts(values.shape[-1], gamma)


def pessimistic_return(returns, lam: float, formula=Formula.SCALED, axis: int = 0) -> np.ndarray:
    """Aggregate member returns along ``axis`` with a max-shifted log-sum-exp."""
    G = np.asarray(returns, dtype=float)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not np.all(np.isfinite(G)):
        raise ValueError("non-finite member returns")
    formula = Formula(formula)
    K = G.shape[axis]
    z = G / lam
    zmax = np.max(z, axis=axis, keepdims=True)
    lse = np.squeeze(zmax, axis=axis) + np.log(np.sum(np.exp(z - zmax), axis=axis))
    if formula is Formula.LITERAL:
        return lse
    return lam * (lse - np.log(K))


def blend_values(values, cfg: PessimismConfig, gamma: float) -> np.ndarray:
    """Conservative return term from member predictions ``values`` of shape (K, ..., H+1)."""
    values = np.asarray(values, dtype=float)
    if cfg.mode is PessimismMode.INITIAL_STATE:
        agg = pessimistic_return(member_return(values, gamma), cfg.lam, cfg.formula)
    else:
        per_step = pessimistic_return(values, cfg.lam, cfg.formula)
        agg = member_return(per_step, gamma)
    return cfg.weight * agg


class ValueTerm:
    """Binds a checkpoint to a pessimism config for use inside the MPC cost."""

    def __init__(self, ckpt: EnsembleCheckpoint, cfg: PessimismConfig = PessimismConfig(),
                 gamma: float = 0.99):
        self.ckpt = ckpt
        self.cfg = cfg
        self.gamma = gamma
        self.mode = ObservationMode(ckpt.obs_mode)

    def member_values(self, pos, rot, vel, acc) -> np.ndarray:
        """Predictions (K, N, H+1) for batched rollout arrays."""
        obs = project(full_from_arrays(pos, rot, vel, acc), self.mode)
        if obs.shape[-1] != self.ckpt.input_dim:
            raise ValueError("observation mode does not match the checkpoint input")
        values = self.ckpt.predict(obs)
        if self.cfg.floor is not None:
            np.maximum(values, self.cfg.floor, out=values)
        return values

    def __call__(self, pos, rot, vel, acc) -> np.ndarray:
        return blend_values(self.member_values(pos, rot, vel, acc), self.cfg, self.gamma)


def blended_return(rollout, ckpt: EnsembleCheckpoint, cfg: PessimismConfig,
                   gamma: float) -> np.ndarray:
    """Conservative return for rollouts (anything with pos/rot/vel/acc arrays)."""
    return ValueTerm(ckpt, cfg, gamma)(rollout.pos, rollout.rot, rollout.vel, rollout.acc)
