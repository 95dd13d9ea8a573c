"""Value-function ensemble trained by Bellman regression.

Each member is a small ReLU MLP with a scalar output, trained on
``(x, c, x', done)`` transitions toward ``c + gamma * (1 - done) * V_target(x')``
where ``V_target`` is a frozen copy of the same member refreshed every
``target_period`` gradient steps. Members are trained in lockstep on stacked
parameter arrays, but each has its own initialization and minibatch stream
derived from ``(seed, member index)``, so a member's result does not depend on
how many others are trained with it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .observation import ObservationMode, project

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cvmpc-ensemble"
CHECKPOINT_VERSION = 1
STD_FLOOR = 1e-8


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


# -- single-member MLP -------------------------------------------------------

@dataclass
class MlpParams:
    """Weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]``; ReLU between layers."""

    weights: list
    biases: list

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


def init_mlp(sizes, rng: np.random.Generator) -> MlpParams:
    """He-normal hidden layers, small output layer, zero biases."""
    weights, biases = [], []
    for l, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = np.sqrt(2.0 / fi) if l < len(sizes) - 2 else np.sqrt(1.0 / fi)
        weights.append(rng.normal(0.0, scale, size=(fi, fo)))
        biases.append(np.zeros(fo))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x) -> np.ndarray:
    """V(x) for one observation (returns a float) or a batch (returns shape (B,))."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None] if single else x
    if h.shape[-1] != params.weights[0].shape[0]:
        raise ValueError(f"input dim {h.shape[-1]} != {params.weights[0].shape[0]}")
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ W + b
        if l < last:
            h = np.maximum(h, 0.0)
    out = h[:, 0]
    return float(out[0]) if single else out


def backward(params: MlpParams, x, target) -> MlpParams:
    """Gradient of ``0.5 * mean((V(x) - target)^2)`` w.r.t. every parameter."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_1d(np.asarray(target, dtype=float))
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0) if l < last else z
        acts.append(h)
    delta = (acts[-1][:, 0] - target)[:, None] / len(x)
    gW, gb = [None] * len(params.weights), [None] * len(params.weights)
    for l in range(last, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l].T) * (pre[l - 1] > 0)
    return MlpParams(gW, gb)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, arrays) -> "AdamState":
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(params: list, grads: list, state: AdamState, hyper: AdamHyper = AdamHyper()):
    """One bias-corrected Adam update over parallel lists of arrays; returns new copies."""
    t = state.t + 1
    m = [hyper.beta1 * mi + (1 - hyper.beta1) * g for mi, g in zip(state.m, grads)]
    v = [hyper.beta2 * vi + (1 - hyper.beta2) * g * g for vi, g in zip(state.v, grads)]
    c1 = 1 - hyper.beta1 ** t
    c2 = 1 - hyper.beta2 ** t
    new = [p - hyper.lr * (mi / c1) / (np.sqrt(vi / c2) + hyper.eps)
           for p, mi, vi in zip(params, m, v)]
    return new, AdamState(m, v, t)


# -- dataset ------------------------------------------------------------------

@dataclass
class Dataset:
    """Transitions with full (24-d) observations; ``mode`` projects on access."""

    obs: np.ndarray
    cost: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray
    episode: np.ndarray
    obs_mode: str = ObservationMode.FULL.value

    def __len__(self) -> int:
        return len(self.cost)

    def features(self, mode):
        if ObservationMode(mode) == ObservationMode(self.obs_mode):
            return self.obs, self.next_obs
        if ObservationMode(self.obs_mode) != ObservationMode.FULL:
            raise ValueError(f"cannot project {self.obs_mode!r} observations to {mode!r}")
        return project(self.obs, mode), project(self.next_obs, mode)

    @classmethod
    def from_transitions(cls, transitions, obs_mode="full") -> "Dataset":
        tr = list(transitions)
        return cls(np.array([t.observation for t in tr], dtype=float),
                   np.array([t.cost for t in tr], dtype=float),
                   np.array([t.next_observation for t in tr], dtype=float),
                   np.array([t.done for t in tr], dtype=bool),
                   np.array([t.episode for t in tr], dtype=int), obs_mode)


# -- ensemble -----------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (32, 32)
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    target_period: int = 5
    normalize: bool = True
    max_steps: int | None = None

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class EnsembleCheckpoint:
    members: list
    obs_mode: str
    norm_mean: np.ndarray
    norm_std: np.ndarray
    gamma: float
    config_digest: str = ""
    final_losses: list = field(default_factory=list)
    version: int = CHECKPOINT_VERSION

    def __post_init__(self):
        if not self.members:
            raise CheckpointError("ensemble needs at least one member")
        self._stack = None

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def input_dim(self) -> int:
        return self.members[0].weights[0].shape[0]

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.norm_mean) / self.norm_std

    def stacked(self):
        if self._stack is None:
            n_layers = len(self.members[0].weights)
            self._stack = (
                [np.stack([m.weights[l] for m in self.members]) for l in range(n_layers)],
                [np.stack([m.biases[l] for m in self.members]) for l in range(n_layers)],
            )
        return self._stack

    def predict(self, x) -> np.ndarray:
        """Member predictions for raw observations ``x`` (..., d) -> (K, ...)."""
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        h = self.normalize(x).reshape(-1, x.shape[-1])
        Ws, bs = self.stacked()
        # first layer as one wide GEMM across members
        W0 = Ws[0]
        K, d, hid = W0.shape
        z = h @ W0.transpose(1, 0, 2).reshape(d, K * hid)
        z = z.reshape(-1, K, hid).transpose(1, 0, 2) + bs[0][:, None, :]
        h = np.maximum(z, 0.0)
        last = len(Ws) - 1
        for l in range(1, len(Ws)):
            h = np.matmul(h, Ws[l]) + bs[l][:, None, :]
            if l < last:
                np.maximum(h, 0.0, out=h)
        return h[..., 0].reshape((K,) + lead)

    def subset(self, k: int) -> "EnsembleCheckpoint":
        """The first ``k`` members."""
        if not 1 <= k <= self.K:
            raise CheckpointError(f"cannot take {k} members from an ensemble of {self.K}")
        if k == self.K:
            return self
        return EnsembleCheckpoint(self.members[:k], self.obs_mode, self.norm_mean, self.norm_std,
                                  self.gamma, self.config_digest, self.final_losses[:k], self.version)

    def member_forward(self, i: int, x) -> np.ndarray:
        return forward(self.members[i], self.normalize(x))


def _stack_forward(Ws, bs, x):
    """Per-member forward on stacked params; ``x`` is (K, B, d). Returns activations."""
    acts = [x]
    pre = []
    h = x
    last = len(Ws) - 1
    for l in range(len(Ws)):
        z = np.matmul(h, Ws[l]) + bs[l][:, None, :]
        pre.append(z)
        h = np.maximum(z, 0.0) if l < last else z
        acts.append(h)
    return acts, pre


def _stack_backward(Ws, acts, pre, err):
    """Gradients of 0.5*mean(err^2) per member; ``err`` is (K, B)."""
    B = err.shape[1]
    delta = err[..., None] / B
    last = len(Ws) - 1
    gW, gb = [None] * len(Ws), [None] * len(Ws)
    for l in range(last, -1, -1):
        gW[l] = np.matmul(acts[l].transpose(0, 2, 1), delta)
        gb[l] = delta.sum(axis=1)
        if l > 0:
            delta = np.matmul(delta, Ws[l].transpose(0, 2, 1)) * (pre[l - 1] > 0)
    return gW, gb


def member_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def train_ensemble(dataset: Dataset, K: int, gamma: float, config: TrainConfig = TrainConfig(),
                   seed: int = 0, mode=ObservationMode.FULL, member_offset: int = 0,
                   loss_history: list | None = None) -> EnsembleCheckpoint:
    """Fit ``K`` value functions to ``dataset`` by semi-gradient Bellman regression.

    Members ``member_offset .. member_offset+K-1`` are trained; member ``i``
    always draws from ``member_seed(seed, i)``. If ``loss_history`` is given,
    the per-step mean squared Bellman error of each member is appended to it.
    """
    if len(dataset) == 0:
        raise TrainingError("empty dataset")
    if not 0.0 <= gamma < 1.0:
        raise TrainingError("gamma must lie in [0, 1)")
    mode = ObservationMode(mode)
    X, Xn = dataset.features(mode)
    n, d = X.shape
    if config.normalize:
        mean = X.mean(axis=0)
        std = np.maximum(X.std(axis=0), STD_FLOOR)
    else:
        mean, std = np.zeros(d), np.ones(d)
    Xs = (X - mean) / std
    Xns = (Xn - mean) / std
    cost = dataset.cost.astype(float)
    notdone = (~dataset.done.astype(bool)).astype(float)

    rngs = [member_seed(seed, member_offset + i) for i in range(K)]
    sizes = [d, *config.hidden, 1]
    init = [init_mlp(sizes, r) for r in rngs]
    Ws = [np.stack([m.weights[l] for m in init]) for l in range(len(sizes) - 1)]
    bs = [np.stack([m.biases[l] for m in init]) for l in range(len(sizes) - 1)]
    params = Ws + bs
    opt = AdamState.zeros_like(params)
    hyper = AdamHyper(lr=config.lr)
    n_layers = len(Ws)
    target = [p.copy() for p in params]

    batch = min(config.batch_size, n)
    per_epoch = int(np.ceil(n / batch))
    total = config.epochs * per_epoch
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    perms = [r.permutation(n) for r in rngs]
    cursor = 0
    step = 0
    last_loss = np.zeros(K)
    while step < total:
        if cursor + batch > n:
            perms = [r.permutation(n) for r in rngs]
            cursor = 0
        idx = np.stack([p[cursor:cursor + batch] for p in perms])
        cursor += batch
        xb = Xs[idx]
        xnb = Xns[idx]
        tW, tb = target[:n_layers], target[n_layers:]
        v_next = _stack_forward(tW, tb, xnb)[0][-1][..., 0]
        y = cost[idx] + gamma * notdone[idx] * v_next
        acts, pre = _stack_forward(params[:n_layers], params[n_layers:], xb)
        err = acts[-1][..., 0] - y
        last_loss = np.mean(err * err, axis=1)
        if not np.all(np.isfinite(last_loss)):
            raise TrainingError(f"non-finite Bellman loss at step {step}: {last_loss}")
        if loss_history is not None:
            loss_history.append(last_loss.copy())
        gW, gb = _stack_backward(params[:n_layers], acts, pre, err)
        params, opt = adam_step(params, gW + gb, opt, hyper)
        step += 1
        if step % config.target_period == 0:
            target = [p.copy() for p in params]
    log.debug("trained %d members for %d steps, final losses %s", K, step, last_loss)

    Ws, bs = params[:n_layers], params[n_layers:]
    members = [MlpParams([W[i].copy() for W in Ws], [b[i].copy() for b in bs]) for i in range(K)]
    return EnsembleCheckpoint(members, mode.value, mean, std, float(gamma), config.digest(),
                              [float(x) for x in last_loss])


# -- checkpoint I/O -------------------------------------------------------------

def save_checkpoint(ckpt: EnsembleCheckpoint, path: str | Path) -> Path:
    """Write an ``.npz`` container.

    Layout: ``header`` holds UTF-8 JSON bytes with ``format``, ``version``,
    ``K``, ``sizes``, ``obs_mode``, ``gamma``, ``config_digest`` and
    ``final_losses``; ``norm_mean`` / ``norm_std`` are float64 vectors; member
    ``k`` layer ``l`` is stored as ``m{k}_W{l}`` and ``m{k}_b{l}`` in float64.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": CHECKPOINT_FORMAT, "version": ckpt.version, "K": ckpt.K,
              "sizes": ckpt.members[0].sizes, "obs_mode": ckpt.obs_mode,
              "gamma": ckpt.gamma, "config_digest": ckpt.config_digest,
              "final_losses": ckpt.final_losses}
    arrays = {"header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
              "norm_mean": ckpt.norm_mean, "norm_std": ckpt.norm_std}
    for k, m in enumerate(ckpt.members):
        for l, (W, b) in enumerate(zip(m.weights, m.biases)):
            arrays[f"m{k}_W{l}"] = W
            arrays[f"m{k}_b{l}"] = b
    tmp = path.with_name(path.name + ".tmp")
    # Fixed entry timestamps so identical ensembles give identical files.
    with zipfile.ZipFile(tmp, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w") as fh:
                np.lib.format.write_array(fh, np.ascontiguousarray(arr), allow_pickle=False)
    tmp.replace(path)
    return path


def load_checkpoint(path: str | Path) -> EnsembleCheckpoint:
    try:
        with np.load(path, allow_pickle=False) as data:
            files = {k: data[k] for k in data.files}
    except (zipfile.BadZipFile, OSError, ValueError, EOFError) as exc:
        raise CheckpointError(f"{path}: corrupt or unreadable checkpoint ({exc})") from exc
    try:
        header = json.loads(files["header"].tobytes().decode())
    except (KeyError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: missing header") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not an ensemble checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: version {header.get('version')} != {CHECKPOINT_VERSION}")
    sizes = header["sizes"]
    members = []
    try:
        for k in range(header["K"]):
            Ws = [files[f"m{k}_W{l}"] for l in range(len(sizes) - 1)]
            bs = [files[f"m{k}_b{l}"] for l in range(len(sizes) - 1)]
            for l, (W, b) in enumerate(zip(Ws, bs)):
                if W.shape != (sizes[l], sizes[l + 1]) or b.shape != (sizes[l + 1],):
                    raise CheckpointError(f"{path}: member {k} layer {l} has wrong shape")
            members.append(MlpParams(Ws, bs))
        mean, std = files["norm_mean"], files["norm_std"]
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing array {exc}") from exc
    if mean.shape != (sizes[0],) or std.shape != (sizes[0],):
        raise CheckpointError(f"{path}: normalization has wrong shape")
    return EnsembleCheckpoint(members, header["obs_mode"], mean, std, header["gamma"],
                              header.get("config_digest", ""), header.get("final_losses", []),
                              header["version"])
