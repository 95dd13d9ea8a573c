"""Campaign orchestration: demonstrations, training, evaluation and ablations.

Every episode draws its goal and controller noise from a seed derived from
``(config.seed, stream, index)``, so any campaign can be rerun bit-for-bit and
paired arms of an ablation see identical goals. Results are written as one CSV
per table plus a JSON manifest next to it.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .conservative import PessimismConfig, ValueTerm
from .contact import object_preset
from .kernels import BACKEND
from .kinematics import load_chain
from .mpc import CostStack, MpcConfig, MppiController
from .observation import ObservationMode
from .simulator import (EpisodeLogWriter, EpisodeMetrics, Simulator, Transition,
                        finalize_metrics, read_episode_log, sample_goal, step_record)
from .value import (Dataset, EnsembleCheckpoint, load_checkpoint, save_checkpoint,
                    train_ensemble)

log = logging.getLogger(__name__)

# Seed streams; distinct so demonstrations never share goals with evaluations.
STREAM_COLLECT = 1
STREAM_EVAL = 2


class HarnessError(RuntimeError):
    pass


def episode_seed(seed: int, stream: int, index: int) -> int:
    ss = np.random.SeedSequence([int(seed), int(stream), int(index)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def episode_goal(cfg: ExperimentConfig, ep_seed: int) -> np.ndarray:
    return sample_goal(np.random.default_rng(ep_seed), cfg.workspace_lo, cfg.workspace_hi,
                       cfg.reach_radius)


# -- controllers ----------------------------------------------------------------

@dataclass(frozen=True)
class ControllerSpec:
    """What drives the arm in an episode.

    ``demonstrator`` plans with the friction cost under ``mu_assumed``;
    ``cvmpc`` adds the conservative value term from ``checkpoint``;
    ``goal`` uses the task terms only.
    """

    kind: str = "demonstrator"
    mu_assumed: float = 0.3
    pessimism: PessimismConfig | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("demonstrator", "cvmpc", "goal"):
            raise HarnessError(f"unknown controller kind {self.kind!r}")
        if self.kind == "cvmpc" and self.pessimism is None:
            raise HarnessError("cvmpc controller needs a pessimism config")


def build_controller(spec: ControllerSpec, cfg: ExperimentConfig, chain,
                     ckpt: EnsembleCheckpoint | None = None, seed: int = 0) -> MppiController:
    obj = object_preset(cfg.object)
    if spec.kind == "demonstrator":
        mpc = cfg.demonstrator
        costs = CostStack(chain, mpc.weights, obj.with_mu(spec.mu_assumed))
    elif spec.kind == "goal":
        mpc = cfg.controller.with_weights(friction=0.0, value=0.0)
        costs = CostStack(chain, mpc.weights)
    else:
        if ckpt is None:
            raise HarnessError("cvmpc controller needs a checkpoint")
        # The blend weight lives in the pessimism config; the stack applies it once.
        mpc = cfg.controller.with_weights(friction=0.0, value=1.0)
        term = ValueTerm(ckpt, spec.pessimism, mpc.gamma)
        costs = CostStack(chain, mpc.weights, value_term=term)
    return MppiController(chain, mpc, costs, seed=seed)


# -- episodes -------------------------------------------------------------------

@dataclass
class EpisodeResult:
    index: int
    seed: int
    goal: np.ndarray
    start_q: np.ndarray
    metrics: EpisodeMetrics
    transitions: list = field(default_factory=list)
    records: list = field(default_factory=list)


def run_episode(sim: Simulator, ctl: MppiController, q0, goal, index: int = 0,
                seed: int = 0, record: bool = False) -> EpisodeResult:
    ctl.reset(seed)
    world = sim.reset(q0, goal)
    traj = [world]
    transitions: list[Transition] = []
    records = [step_record(world, index)] if record else []
    while not world.terminal:
        cmd = ctl.control_step(world.joint_state, world.goal)
        world, tr = sim.step(world, cmd, index)
        traj.append(world)
        if record:
            transitions.append(tr)
            records.append(step_record(world, index, cmd))
    metrics = finalize_metrics(traj, sim.cfg)
    return EpisodeResult(index, seed, np.asarray(goal, float), np.asarray(q0, float),
                         metrics, transitions, records)


@dataclass(frozen=True)
class _Job:
    cfg: ExperimentConfig
    spec: ControllerSpec
    ckpt: EnsembleCheckpoint | None
    mu_true: float
    start_pose: str
    stream: int
    record: bool


def _run_indices(job: _Job, indices) -> list[EpisodeResult]:
    cfg = job.cfg
    chain = load_chain()
    sim = Simulator(chain, object_preset(cfg.object).with_mu(job.mu_true), cfg.sim)
    ctl = build_controller(job.spec, cfg, chain, job.ckpt)
    q0 = chain.pose(job.start_pose)
    out = []
    for i in indices:
        s = episode_seed(cfg.seed, job.stream, i)
        out.append(run_episode(sim, ctl, q0, episode_goal(cfg, s), i, s, job.record))
    return out


def run_episodes(job: _Job, n: int, workers: int = 1) -> list[EpisodeResult]:
    """Run episodes ``0..n-1``; results come back in index order for any worker count."""
    if n < 1:
        raise HarnessError("need at least one episode")
    if workers <= 1 or n == 1:
        return _run_indices(job, range(n))
    chunks = [list(range(w, n, workers)) for w in range(min(workers, n))]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(_run_indices, [job] * len(chunks), chunks))
    results = [r for part in parts for r in part]
    return sorted(results, key=lambda r: r.index)


# -- results --------------------------------------------------------------------

RESULT_COLUMNS = ["table", "cell", "trials", "successes", "success_rate",
                  "alpha_max_mean", "alpha_max_stderr", "v_max_mean", "v_max_stderr",
                  "w_max_mean", "w_max_stderr"]


def _mean_stderr(xs) -> tuple[float, float]:
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return math.nan, math.nan
    if xs.size == 1:
        return float(xs[0]), 0.0
    return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(xs.size))


@dataclass
class ResultRow:
    table: str
    cell: str
    trials: int
    successes: int
    success_rate: float
    alpha_max_mean: float
    alpha_max_stderr: float
    v_max_mean: float
    v_max_stderr: float
    w_max_mean: float
    w_max_stderr: float

    @classmethod
    def from_metrics(cls, table: str, cell: str, metrics: list[EpisodeMetrics]) -> "ResultRow":
        if not metrics:
            raise HarnessError("cannot aggregate zero episodes")
        ok = [m for m in metrics if m.success]
        a = _mean_stderr([m.alpha_max for m in ok])
        v = _mean_stderr([m.v_max for m in ok])
        w = _mean_stderr([m.w_max for m in ok])
        return cls(table, cell, len(metrics), len(ok), 100.0 * len(ok) / len(metrics),
                   *a, *v, *w)


class ResultsTable:
    """Rows of aggregated episode metrics; dynamic metrics cover successful episodes only."""

    def __init__(self, rows: list[ResultRow] | None = None):
        self.rows: list[ResultRow] = list(rows or [])

    def add(self, table: str, cell: str, metrics: list[EpisodeMetrics]) -> ResultRow:
        row = ResultRow.from_metrics(table, cell, metrics)
        self.rows.append(row)
        return row

    def extend(self, other: "ResultsTable"):
        self.rows.extend(other.rows)

    def get(self, cell: str, table: str | None = None) -> ResultRow:
        for r in self.rows:
            if r.cell == cell and (table is None or r.table == table):
                return r
        raise KeyError(cell)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in asdict(r).values()])
        return buf.getvalue()

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def read(cls, path: str | Path) -> "ResultsTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != RESULT_COLUMNS:
                raise HarnessError(f"{path}: unexpected columns {reader.fieldnames}")
            rows = []
            for rec in reader:
                rows.append(ResultRow(
                    rec["table"], rec["cell"], int(rec["trials"]), int(rec["successes"]),
                    *(float(rec[c]) for c in RESULT_COLUMNS[4:])))
        return cls(rows)

    def __len__(self) -> int:
        return len(self.rows)

    def format(self) -> str:
        lines = []
        for r in self.rows:
            lines.append(f"{r.table:>12s} {r.cell:<28s} success {r.success_rate:6.1f}% "
                         f"({r.successes}/{r.trials})  alpha {r.alpha_max_mean:6.2f}"
                         f"±{r.alpha_max_stderr:.2f}  v {r.v_max_mean:.3f}±{r.v_max_stderr:.3f}"
                         f"  w {r.w_max_mean:.3f}±{r.w_max_stderr:.3f}")
        return "\n".join(lines)


EPISODE_COLUMNS = ["table", "cell", "episode", "seed", "success", "reason", "steps",
                   "alpha_max", "v_max", "w_max", "slip"]


def episodes_csv(rows) -> str:
    """Per-episode metrics; ``rows`` yields ``(table, cell, EpisodeResult)``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPISODE_COLUMNS)
    for table, cell, r in rows:
        m = r.metrics
        w.writerow([table, cell, r.index, r.seed, int(m.success), m.reason, m.steps,
                    repr(m.alpha_max), repr(m.v_max), repr(m.w_max), repr(m.slip)])
    return buf.getvalue()


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: str | Path, command: str, cfg: ExperimentConfig,
                   outputs: dict, inputs: dict | None = None, extra: dict | None = None) -> Path:
    """JSON manifest: config, seeds, input/output content hashes and build info."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    man = {
        "command": command,
        "version": __version__,
        "backend": BACKEND,
        "config": cfg.as_dict(),
        "seed": cfg.seed,
        "inputs": {k: {"path": str(p), "sha256": file_digest(p)} for k, p in (inputs or {}).items()},
        "outputs": {k: {"path": str(p), "sha256": file_digest(p)} for k, p in outputs.items()},
    }
    if extra:
        man.update(extra)
    path = out_dir / f"manifest_{command.replace(' ', '_')}.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return path


# -- demonstrations ---------------------------------------------------------------

@dataclass
class CollectResult:
    dataset: Dataset
    episodes: list[EpisodeResult]
    path: Path | None = None

    @property
    def n_success(self) -> int:
        return sum(e.metrics.success for e in self.episodes)

    def violation_fraction(self) -> float:
        return float(np.mean(self.dataset.cost > 0)) if len(self.dataset) else 0.0


def collect_demos(cfg: ExperimentConfig, path: str | Path | None = None,
                  workers: int = 1) -> CollectResult:
    """Run ``n_demos`` demonstrator episodes (assumed vs true friction) and log them."""
    spec = ControllerSpec("demonstrator", mu_assumed=cfg.mu_assumed)
    job = _Job(cfg, spec, None, cfg.mu_true, cfg.start_pose, STREAM_COLLECT, True)
    episodes = run_episodes(job, cfg.n_demos, workers)
    transitions = [t for e in episodes for t in e.transitions]
    dataset = Dataset.from_transitions(transitions)
    res = CollectResult(dataset, episodes)
    if res.n_success == 0:
        log.warning("no successful demonstrations among %d episodes", cfg.n_demos)
    if path is not None:
        meta = {"object": cfg.object, "mu_true": cfg.mu_true, "mu_assumed": cfg.mu_assumed,
                "seed": cfg.seed, "start_pose": cfg.start_pose}
        with EpisodeLogWriter(path, meta, cfg.sim.dt) as writer:
            for e in episodes:
                writer.write_episode(e.index, e.records, e.metrics, e.seed, e.start_q, e.goal)
        res.path = Path(path)
    return res


def dataset_from_log(path: str | Path) -> Dataset:
    """Rebuild the transition dataset from an episode log."""
    _, episodes = read_episode_log(path)
    transitions = []
    for ep in episodes:
        steps = ep["steps"]
        for prev, cur in zip(steps[:-1], steps[1:]):
            transitions.append(Transition(np.array(prev["obs"]), float(cur["cost"]),
                                          np.array(cur["obs"]), int(cur["episode"]),
                                          int(prev["step"]), cur["reason"] is not None))
    if not transitions:
        raise HarnessError(f"{path}: no transitions")
    return Dataset.from_transitions(transitions)


# -- training ---------------------------------------------------------------------

def run_training(dataset: Dataset, cfg: ExperimentConfig, K: int | None = None,
                 gamma: float | None = None, mode: str | None = None,
                 out: str | Path | None = None) -> EnsembleCheckpoint:
    K = cfg.K if K is None else K
    gamma = cfg.gamma if gamma is None else gamma
    mode = cfg.obs_mode if mode is None else mode
    ckpt = train_ensemble(dataset, K, gamma, cfg.train, cfg.seed, mode)
    if out is not None:
        save_checkpoint(ckpt, out)
    return ckpt


class CheckpointCache:
    """Trained ensembles keyed by (dataset, gamma, mode).

    Member ``i`` depends only on ``(seed, i)``, so the first ``K`` members of a
    larger ensemble are exactly the ``K``-member ensemble; one training run at
    the largest ``K`` serves every smaller one.
    """

    def __init__(self, directory: str | Path | None = None):
        self.dir = Path(directory) if directory is not None else None
        self._mem: dict[str, EnsembleCheckpoint] = {}
        self.trained = 0

    def _key(self, dataset: Dataset, cfg: ExperimentConfig, gamma: float, mode: str) -> str:
        h = hashlib.sha256()
        for a in (dataset.obs, dataset.cost, dataset.next_obs, dataset.done):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(json.dumps([cfg.seed, gamma, mode, cfg.train.digest()]).encode())
        return h.hexdigest()[:20]

    def get(self, dataset: Dataset, cfg: ExperimentConfig, K: int, gamma: float,
            mode: str) -> EnsembleCheckpoint:
        key = self._key(dataset, cfg, gamma, mode)
        ckpt = self._mem.get(key)
        if ckpt is None and self.dir is not None:
            path = self.dir / f"ensemble_{key}.npz"
            if path.exists():
                ckpt = load_checkpoint(path)
        if ckpt is None or ckpt.K < K:
            ckpt = train_ensemble(dataset, K, gamma, cfg.train, cfg.seed, mode)
            self.trained += 1
            if self.dir is not None:
                save_checkpoint(ckpt, self.dir / f"ensemble_{key}.npz")
        self._mem[key] = ckpt
        return ckpt.subset(K)


# -- evaluation -------------------------------------------------------------------

def evaluate(cfg: ExperimentConfig, spec: ControllerSpec, ckpt: EnsembleCheckpoint | None = None,
             mu_true: float | None = None, start_pose: str | None = None,
             n_trials: int | None = None, workers: int = 1) -> list[EpisodeResult]:
    n = cfg.n_trials if n_trials is None else n_trials
    if n < 1:
        raise HarnessError("trial count must be >= 1")
    job = _Job(cfg, spec, ckpt, cfg.mu_true if mu_true is None else mu_true,
               start_pose or cfg.start_pose, STREAM_EVAL, False)
    return run_episodes(job, n, workers)


def cvmpc_spec(cfg: ExperimentConfig, **pess) -> ControllerSpec:
    return ControllerSpec("cvmpc", pessimism=cfg.pessimism(**pess))


def run_eval(cfg: ExperimentConfig, ckpt: EnsembleCheckpoint | None, spec: ControllerSpec | None = None,
             table: str = "eval", cell: str | None = None, workers: int = 1):
    """Evaluate one controller; returns ``(ResultsTable, episodes)``."""
    spec = spec or cvmpc_spec(cfg)
    eps = evaluate(cfg, spec, ckpt, workers=workers)
    out = ResultsTable()
    out.add(table, cell or spec.label or spec.kind, [e.metrics for e in eps])
    return out, [(table, cell or spec.label or spec.kind, e) for e in eps]


# -- ablations --------------------------------------------------------------------

@dataclass
class Campaign:
    table: ResultsTable
    episodes: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, table: str, cell: str, eps: list[EpisodeResult]) -> ResultRow:
        self.episodes.extend((table, cell, e) for e in eps)
        return self.table.add(table, cell, [e.metrics for e in eps])

    def write(self, out_dir: str | Path, name: str) -> dict:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {"results": self.table.write(out_dir / f"{name}.csv")}
        ep_path = out_dir / f"{name}_episodes.csv"
        ep_path.write_text(episodes_csv(self.episodes))
        paths["episodes"] = ep_path
        return paths


def ablate_grid(dataset: Dataset, cfg: ExperimentConfig, K_list=None, lam_list=None,
                cache: CheckpointCache | None = None, workers: int = 1,
                one_step: bool = True) -> Campaign:
    """Success per (K, lambda) for the value ensemble and, optionally, the one-step cost."""
    K_list = tuple(cfg.K_grid if K_list is None else K_list)
    lam_list = tuple(cfg.lam_grid if lam_list is None else lam_list)
    if not K_list or not lam_list:
        raise HarnessError("grids must be non-empty")
    cache = cache or CheckpointCache()
    camp = Campaign(ResultsTable())
    variants = [("value", cfg.gamma)] + ([("one_step", 0.0)] if one_step else [])
    for table, gamma in variants:
        cache.get(dataset, cfg, max(K_list), gamma, cfg.obs_mode)  # smaller K are prefixes
        for K in K_list:
            ckpt = cache.get(dataset, cfg, K, gamma, cfg.obs_mode)
            for lam in lam_list:
                spec = ControllerSpec("cvmpc", pessimism=cfg.pessimism(lam=lam))
                camp.add(table, f"K={K},lam={lam:g}", evaluate(cfg, spec, ckpt, workers=workers))
    camp.info["trained"] = cache.trained
    return camp


def ablate_biased_expert(cfg: ExperimentConfig, mu_true_list=None, workers: int = 1,
                         log_dir: str | Path | None = None) -> Campaign:
    """Demonstrator assuming ``biased_mu_assumed`` vs CV-MPC learned from its demos."""
    mu_true_list = tuple(cfg.biased_mu_true if mu_true_list is None else mu_true_list)
    if not mu_true_list:
        raise HarnessError("mu_true list must be non-empty")
    camp = Campaign(ResultsTable())
    for mu in mu_true_list:
        sub = cfg.with_(mu_true=mu, mu_assumed=cfg.biased_mu_assumed)
        log_path = None if log_dir is None else Path(log_dir) / f"demos_mu{mu:g}.jsonl"
        demos = collect_demos(sub, log_path, workers)
        ckpt = run_training(demos.dataset, sub)
        demo_spec = ControllerSpec("demonstrator", mu_assumed=cfg.biased_mu_assumed)
        camp.add("biased", f"mu={mu:g},demonstrator", evaluate(sub, demo_spec, workers=workers))
        camp.add("biased", f"mu={mu:g},cvmpc", evaluate(sub, cvmpc_spec(sub), ckpt, workers=workers))
        camp.info[f"mu={mu:g}"] = {"demo_success": demos.n_success,
                                   "violation_fraction": demos.violation_fraction()}
    return camp


def ablate_observations(dataset: Dataset, cfg: ExperimentConfig, modes=None,
                        cache: CheckpointCache | None = None, workers: int = 1) -> Campaign:
    """One ensemble per observation mode, evaluated from the training and a shifted start."""
    modes = [ObservationMode(m).value for m in (modes or list(ObservationMode))]
    cache = cache or CheckpointCache()
    camp = Campaign(ResultsTable())
    for start, table in ((cfg.start_pose, "same_start"), (cfg.shifted_pose, "shifted_start")):
        for mode in modes:
            ckpt = cache.get(dataset, cfg, cfg.K, cfg.gamma, mode)
            eps = evaluate(cfg, cvmpc_spec(cfg), ckpt, start_pose=start, workers=workers)
            camp.add(table, mode, eps)
    return camp


def ablate_pessimism_mode(ckpt: EnsembleCheckpoint, cfg: ExperimentConfig,
                          workers: int = 1) -> Campaign:
    """Same checkpoint, seeds and lambda; only the aggregation point differs."""
    camp = Campaign(ResultsTable())
    for mode in ("initial_state", "pointwise"):
        camp.add("pessimism", mode, evaluate(cfg, cvmpc_spec(cfg, mode=mode), ckpt, workers=workers))
    return camp


# -- audit tools ------------------------------------------------------------------

@dataclass
class ReplayReport:
    episodes: int
    max_divergence: float
    first_divergence: tuple | None
    metrics_match: bool
    metrics: list = field(default_factory=list)


def _state_vector(rec: dict) -> np.ndarray:
    ee = rec["ee"]
    return np.concatenate([rec["q"], rec["qd"], ee["p"], ee["R"], ee["v"], ee["w"],
                           ee["a"], ee["alpha"], [rec["slip"], rec["cost"]]])


def replay(path: str | Path, cfg: ExperimentConfig | None = None, tol: float = 0.0) -> ReplayReport:
    """Re-step the simulator with the logged commands and compare every state."""
    header, episodes = read_episode_log(path)
    cfg = cfg or ExperimentConfig()
    meta = header.get("meta", {})
    obj = object_preset(meta.get("object", cfg.object)).with_mu(meta.get("mu_true", cfg.mu_true))
    chain = load_chain()
    sim = Simulator(chain, obj, replace(cfg.sim, dt=header.get("dt", cfg.sim.dt)))
    worst, first = 0.0, None
    all_match = True
    metrics = []
    for ep in episodes:
        steps = ep["steps"]
        world = sim.reset(np.array(steps[0]["q"]), np.array(steps[0]["goal"]))
        traj = [world]
        for rec in steps[1:]:
            if world.terminal:
                raise HarnessError(f"episode {rec['episode']}: log continues past a terminal state")
            world, _ = sim.step(world, np.array(rec["cmd"]), rec["episode"])
            traj.append(world)
            d = float(np.max(np.abs(_state_vector(step_record(world, rec["episode"])) - _state_vector(rec))))
            if d > worst:
                worst = d
            if d > tol and first is None:
                first = (rec["episode"], rec["step"])
        m = finalize_metrics(traj, sim.cfg)
        metrics.append(m)
        if ep["end"] is not None and m.as_dict() != ep["end"]["metrics"]:
            all_match = False
    return ReplayReport(len(episodes), worst, first, all_match, metrics)


def inspect_path(path: str | Path) -> dict:
    """Summaries of episode logs, checkpoints and results CSVs."""
    path = Path(path)
    if path.suffix == ".npz":
        ckpt = load_checkpoint(path)
        return {"kind": "checkpoint", "K": ckpt.K, "obs_mode": ckpt.obs_mode,
                "input_dim": ckpt.input_dim, "gamma": ckpt.gamma,
                "hidden": [w.shape[1] for w in ckpt.members[0].weights[:-1]],
                "final_loss_mean": float(np.mean(ckpt.final_losses)) if ckpt.final_losses else None}
    if path.suffix == ".csv":
        table = ResultsTable.read(path)
        return {"kind": "results", "rows": [asdict(r) for r in table.rows]}
    header, episodes = read_episode_log(path)
    ds = dataset_from_log(path)
    ends = [e["end"]["metrics"] for e in episodes if e["end"] is not None]
    reasons: dict[str, int] = {}
    for m in ends:
        reasons[m["reason"]] = reasons.get(m["reason"], 0) + 1
    return {"kind": "episodes", "meta": header.get("meta", {}), "episodes": len(episodes),
            "transitions": len(ds), "violation_fraction": float(np.mean(ds.cost > 0)),
            "successes": sum(bool(m["success"]) for m in ends), "terminations": reasons,
            "mean_steps": float(np.mean([len(e["steps"]) - 1 for e in episodes]))}
