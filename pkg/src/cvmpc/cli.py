"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 a requested
threshold check failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .contact import ContactError
from .harness import (CheckpointCache, ControllerSpec, HarnessError, ablate_biased_expert,
                      ablate_grid, ablate_observations, ablate_pessimism_mode, collect_demos,
                      cvmpc_spec, dataset_from_log, episodes_csv, evaluate, inspect_path,
                      replay, run_training, write_manifest, ResultsTable)
from .kinematics import KinematicsError
from .mpc import MpcError
from .simulator import LogFormatError, SimulationError
from .trends import biased_checks, grid_checks, observation_checks, pessimism_checks
from .value import CheckpointError, TrainingError, load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

log = logging.getLogger("cvmpc")


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cvmpc", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="experiment YAML (default: bundled config)")
    p.add_argument("--seed", type=int, help="override the campaign seed")
    p.add_argument("--out", help="output directory (default: config out_dir)")
    p.add_argument("--workers", type=int, default=1, help="parallel episode workers")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="record demonstrator episodes")
    c.add_argument("--n-demos", type=int)
    c.add_argument("--mu-true", type=float)
    c.add_argument("--mu-assumed", type=float)

    t = sub.add_parser("train", help="fit a value ensemble to a demonstration log")
    t.add_argument("--dataset", required=True)
    t.add_argument("--K", type=int)
    t.add_argument("--gamma", type=float)
    t.add_argument("--mode", help="observation mode")

    e = sub.add_parser("eval", help="evaluate a controller over seeded episodes")
    e.add_argument("--checkpoint")
    e.add_argument("--controller", choices=["cvmpc", "demonstrator", "goal"], default="cvmpc")
    e.add_argument("--lam", type=float)
    e.add_argument("--pessimism-mode", choices=["initial_state", "pointwise"])
    e.add_argument("--trials", type=int)
    e.add_argument("--start", help="named start pose")
    e.add_argument("--mu-true", type=float)
    e.add_argument("--min-success", type=float, help="exit 3 below this success rate (%%)")

    a = sub.add_parser("ablate", help="run an ablation study")
    asub = a.add_subparsers(dest="study", required=True)
    g = asub.add_parser("grid")
    g.add_argument("--dataset", required=True)
    g.add_argument("--K-grid", type=_ints)
    g.add_argument("--lam-grid", type=_floats)
    g.add_argument("--no-one-step", action="store_true")
    b = asub.add_parser("biased")
    b.add_argument("--mu-true-list", type=_floats)
    o = asub.add_parser("obs")
    o.add_argument("--dataset", required=True)
    ps = asub.add_parser("pessimism")
    ps.add_argument("--checkpoint", required=True)
    for q in (g, b, o, ps):
        q.add_argument("--check", action="store_true", help="exit 3 if the expected trend fails")

    r = sub.add_parser("replay", help="re-simulate an episode log and report divergence")
    r.add_argument("log")
    r.add_argument("--tol", type=float, default=0.0)

    i = sub.add_parser("inspect", help="summarize a log, checkpoint or results CSV")
    i.add_argument("path")
    return p


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.out is not None:
        kw["out_dir"] = args.out
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return cfg.with_(**kw) if kw else cfg


def _report_checks(checks) -> int:
    ok = True
    for name, passed, detail in checks:
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        ok &= passed
    return EXIT_OK if ok else EXIT_CHECK


def _write_campaign(camp, out: Path, name: str, cfg, inputs=None) -> None:
    paths = camp.write(out, name)
    write_manifest(out, f"ablate {name}", cfg, paths, inputs, {"info": camp.info})
    print(camp.table.format())


def cmd_collect(args, cfg: ExperimentConfig, out: Path) -> int:
    kw = {k: v for k, v in (("n_demos", args.n_demos), ("mu_true", args.mu_true),
                            ("mu_assumed", args.mu_assumed)) if v is not None}
    cfg = cfg.with_(**kw) if kw else cfg
    res = collect_demos(cfg, out / "demos.jsonl", args.workers)
    write_manifest(out, "collect", cfg, {"demos": res.path},
                   extra={"successes": res.n_success, "transitions": len(res.dataset),
                          "violation_fraction": res.violation_fraction()})
    print(f"{res.n_success}/{cfg.n_demos} successful demonstrations, "
          f"{len(res.dataset)} transitions -> {res.path}")
    return EXIT_OK


def cmd_train(args, cfg: ExperimentConfig, out: Path) -> int:
    ds = dataset_from_log(args.dataset)
    path = out / "checkpoint.npz"
    ckpt = run_training(ds, cfg, args.K, args.gamma, args.mode, path)
    write_manifest(out, "train", cfg, {"checkpoint": path}, {"dataset": args.dataset},
                   {"final_losses": ckpt.final_losses, "K": ckpt.K, "obs_mode": ckpt.obs_mode})
    print(f"trained K={ckpt.K} ({ckpt.obs_mode}) -> {path}")
    return EXIT_OK


def cmd_eval(args, cfg: ExperimentConfig, out: Path) -> int:
    if args.trials is not None:
        cfg = cfg.with_(n_trials=args.trials)
    if args.mu_true is not None:
        cfg = cfg.with_(mu_true=args.mu_true)
    ckpt = None
    inputs = {}
    if args.controller == "cvmpc":
        if not args.checkpoint:
            raise ConfigError("--checkpoint is required for the cvmpc controller")
        ckpt = load_checkpoint(args.checkpoint)
        inputs["checkpoint"] = args.checkpoint
        pess = {k: v for k, v in (("lam", args.lam), ("mode", args.pessimism_mode)) if v is not None}
        spec = cvmpc_spec(cfg, **pess)
    else:
        spec = ControllerSpec(args.controller, mu_assumed=cfg.mu_assumed)
    eps = evaluate(cfg, spec, ckpt, start_pose=args.start, workers=args.workers)
    table = ResultsTable()
    row = table.add("eval", args.controller, [e.metrics for e in eps])
    paths = {"results": table.write(out / "eval.csv")}
    (out / "eval_episodes.csv").write_text(episodes_csv(("eval", args.controller, e) for e in eps))
    paths["episodes"] = out / "eval_episodes.csv"
    write_manifest(out, "eval", cfg, paths, inputs)
    print(table.format())
    if args.min_success is not None and row.success_rate < args.min_success:
        print(f"FAIL success {row.success_rate:.1f}% < {args.min_success:.1f}%")
        return EXIT_CHECK
    return EXIT_OK


def cmd_ablate(args, cfg: ExperimentConfig, out: Path) -> int:
    study = args.study
    if study == "grid":
        ds = dataset_from_log(args.dataset)
        camp = ablate_grid(ds, cfg, args.K_grid, args.lam_grid, CheckpointCache(out / "cache"),
                           args.workers, one_step=not args.no_one_step)
        _write_campaign(camp, out, "grid", cfg, {"dataset": args.dataset})
        checks = grid_checks(camp.table) if args.check else []
    elif study == "biased":
        camp = ablate_biased_expert(cfg, args.mu_true_list, args.workers, out)
        _write_campaign(camp, out, "biased", cfg)
        checks = biased_checks(camp.table) if args.check else []
    elif study == "obs":
        ds = dataset_from_log(args.dataset)
        camp = ablate_observations(ds, cfg, cache=CheckpointCache(out / "cache"), workers=args.workers)
        _write_campaign(camp, out, "obs", cfg, {"dataset": args.dataset})
        checks = observation_checks(camp.table) if args.check else []
    else:
        ckpt = load_checkpoint(args.checkpoint)
        camp = ablate_pessimism_mode(ckpt, cfg, args.workers)
        _write_campaign(camp, out, "pessimism", cfg, {"checkpoint": args.checkpoint})
        checks = pessimism_checks(camp.table) if args.check else []
    return _report_checks(checks)


def cmd_replay(args, cfg: ExperimentConfig, out: Path) -> int:
    rep = replay(args.log, cfg, args.tol)
    print(json.dumps({"episodes": rep.episodes, "max_divergence": rep.max_divergence,
                      "first_divergence": rep.first_divergence,
                      "metrics_match": rep.metrics_match}, indent=2))
    return EXIT_OK if rep.first_divergence is None and rep.metrics_match else EXIT_CHECK


def cmd_inspect(args, cfg: ExperimentConfig, out: Path) -> int:
    print(json.dumps(inspect_path(args.path), indent=2))
    return EXIT_OK


COMMANDS = {"collect": cmd_collect, "train": cmd_train, "eval": cmd_eval, "ablate": cmd_ablate,
            "replay": cmd_replay, "inspect": cmd_inspect}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        out = Path(cfg.out_dir)
        if args.command not in ("replay", "inspect"):
            out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, cfg, out)
    except (ConfigError, ContactError, KinematicsError, MpcError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HarnessError, SimulationError, TrainingError, CheckpointError, LogFormatError,
            OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
