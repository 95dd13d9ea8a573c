"""Experiment configuration.

One YAML document configures a whole campaign. Top-level keys mirror
``ExperimentConfig``; the nested ``demonstrator``, ``controller``, ``train``
and ``sim`` blocks map onto ``MpcConfig``, ``MpcConfig``, ``TrainConfig`` and
``SimConfig``. Missing keys keep their defaults, unknown keys are errors.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import yaml

from .conservative import Formula, PessimismConfig, PessimismMode
from .contact import ContactError, object_preset
from .kinematics import KinematicsError, load_chain
from .mpc import MpcConfig, MpcError
from .observation import ObservationMode
from .simulator import SimConfig
from .value import TrainConfig


class ConfigError(ValueError):
    pass


def _default_demonstrator() -> MpcConfig:
    return MpcConfig().with_weights(friction=300.0)


def _default_controller() -> MpcConfig:
    return MpcConfig(noise_sigma=0.5).with_weights(value=1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "default"
    object: str = "cube_sim"
    mu_true: float = 0.3
    mu_assumed: float = 0.3
    n_demos: int = 50
    n_trials: int = 20
    seed: int = 0
    start_pose: str = "home"
    shifted_pose: str = "shifted"
    workspace_lo: tuple = (0.25, -0.3, 0.3)
    workspace_hi: tuple = (0.75, 0.3, 0.6)
    reach_radius: float = 0.85
    K: int = 80
    lam: float = 20.0
    K_grid: tuple = (3, 10, 40, 80)
    lam_grid: tuple = (1.0, 5.0, 20.0, 100.0)
    gamma: float = 0.8
    obs_mode: str = "full"
    pessimism_mode: str = "initial_state"
    formula: str = "scaled_log_mean_exp"
    biased_mu_assumed: float = 0.6
    biased_mu_true: tuple = (0.2, 0.3, 0.4, 0.6)
    demonstrator: MpcConfig = field(default_factory=_default_demonstrator)
    controller: MpcConfig = field(default_factory=_default_controller)
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            object_preset(self.object)
            chain = load_chain()
            chain.pose(self.start_pose)
            chain.pose(self.shifted_pose)
            ObservationMode(self.obs_mode)
            PessimismMode(self.pessimism_mode)
            Formula(self.formula)
        except (ContactError, KinematicsError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_demos < 1 or self.n_trials < 1:
            raise ConfigError("n_demos and n_trials must be >= 1")
        if self.K < 1 or self.lam <= 0:
            raise ConfigError("K must be >= 1 and lam > 0")
        if not self.K_grid or not self.lam_grid or not self.biased_mu_true:
            raise ConfigError("grids must be non-empty")
        if min(self.K_grid) < 1 or min(self.lam_grid) <= 0:
            raise ConfigError("grid entries must be K >= 1 and lam > 0")
        if min(self.mu_true, self.mu_assumed, self.biased_mu_assumed, *self.biased_mu_true) < 0:
            raise ConfigError("friction coefficients must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if len(self.workspace_lo) != 3 or len(self.workspace_hi) != 3:
            raise ConfigError("workspace bounds must be 3-vectors")
        if any(h < l for l, h in zip(self.workspace_lo, self.workspace_hi)):
            raise ConfigError("workspace_lo must not exceed workspace_hi")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def pessimism(self, **kw) -> PessimismConfig:
        base = dict(lam=self.lam, mode=self.pessimism_mode, formula=self.formula,
                    weight=self.controller.weights.value or 1.0)
        base.update(kw)
        return PessimismConfig(**base)

    def with_(self, **kw) -> "ExperimentConfig":
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def as_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


_NESTED = {"demonstrator": MpcConfig, "controller": MpcConfig, "train": TrainConfig, "sim": SimConfig}


def _build_nested(key: str, value, default):
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected a mapping")
    if key in ("demonstrator", "controller"):
        merged = default.as_dict()
        weights = dict(merged.pop("weights"))
        value = dict(value)
        new_weights = value.pop("weights", {}) or {}
        unknown = (set(value) - set(merged)) | (set(new_weights) - set(weights))
        weights.update(new_weights)
        if unknown:
            raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
        merged.update(value)
        merged["weights"] = weights
        return MpcConfig.from_dict(merged)
    cls = _NESTED[key]
    names = {f.name for f in fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"{key}: unknown keys {sorted(unknown)}")
    value = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
    return replace(default, **value)


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = dict(raw or {})
    defaults = ExperimentConfig()
    names = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kw = {}
    try:
        for key, value in raw.items():
            if key in _NESTED:
                kw[key] = _build_nested(key, value, getattr(defaults, key))
            elif isinstance(value, list):
                kw[key] = tuple(value)
            else:
                kw[key] = value
        return ExperimentConfig(**kw)
    except (TypeError, MpcError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Load a YAML experiment config; ``None`` gives the bundled defaults."""
    if path is None:
        text = resources.files("cvmpc.data").joinpath("experiment.yaml").read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    return config_from_dict(raw)
