"""Command-line entry point.

Subcommands: simulate (write a dataset), train (offline or online), evaluate
(deterministic replay of a checkpoint), grid-search, report (tables and
figures). Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 grid-search threshold not met.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import yaml

from . import __version__
from .baseline import baseline_policy, fit_baseline, load_baseline, save_baseline
from .config import (
    ConfigError,
    RunConfig,
    config_hash,
    config_to_dict,
    load_config,
    with_scenario,
    with_seed,
)
from .pipeline import (
    DATASET_ONLINE,
    DATASET_PRETRAIN,
    DATASET_TRAIN,
    DATASET_VALIDATION,
    TrainingDiverged,
    agent_policy,
    build_dataset,
    build_population,
    compute_metrics,
    evaluate_policy,
    grid_search,
    load_dataset,
    make_agents,
    make_encoder,
    save_dataset,
    train_offline,
    train_online,
    write_metrics,
    write_outcome_csv,
    write_profit_curve,
)
from .simulators import STREAM_BASELINE, make_rng

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_THRESHOLD = 3


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "scenario", None) is not None:
        cfg = with_scenario(cfg, args.scenario)
    if getattr(args, "seed", None) is not None:
        cfg = with_seed(cfg, args.seed)
    return cfg


def _write_manifest(cfg: RunConfig, out: Path, extra: dict | None = None) -> None:
    manifest = {
        "tool_version": __version__,
        "config": config_to_dict(cfg),
        "config_hash": config_hash(cfg),
        "seed": cfg.pipeline.seed,
    }
    manifest.update(extra or {})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=list)


def _outdir(args, cfg: RunConfig, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path(cfg.output_dir) / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    days = args.days if args.days is not None else cfg.pipeline.offline_days
    if args.dry_run:
        print(f"config ok (hash {config_hash(cfg)}); would simulate {days} day(s)")
        return EXIT_OK
    out = _outdir(args, cfg, "dataset")
    if days == 0:
        print("warning: writing an empty dataset (0 days)", file=sys.stderr)
    population = build_population(cfg)
    dataset = build_dataset(cfg, days, DATASET_TRAIN, population)
    save_dataset(dataset, out)
    _write_manifest(cfg, out, {"command": "simulate", "days": days,
                               "periods": dataset.periods})
    print(f"wrote {days} day(s), {dataset.periods} period(s) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    if args.mode == "online" and not args.pretrained:
        print("error: online mode needs --pretrained pointing at an offline run",
              file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        print(f"config ok (hash {config_hash(cfg)}); would train mode={args.mode}")
        return EXIT_OK
    out = _outdir(args, cfg, f"train_{args.mode}")
    population = build_population(cfg)
    encoder = make_encoder(cfg)
    agents = make_agents(cfg, encoder)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    if args.mode == "offline":
        if args.dataset:
            dataset = load_dataset(args.dataset)
        else:
            days = args.days if args.days is not None else cfg.pipeline.offline_days
            dataset = build_dataset(cfg, days, DATASET_TRAIN, population)
        result = train_offline(cfg, agents, dataset, checkpoint_dir=ckpt_dir)
        write_outcome_csv(result.rows, out / "train_log.csv")
        write_profit_curve(result.profit_curve, out / "profit_curve.csv")
        rows, metrics = evaluate_policy(cfg, agent_policy(agents), dataset, population)
        write_outcome_csv(rows, out / "outcome.csv")
        write_metrics(metrics, out / "metrics.json", tag="offline-frozen-eval")
        model = fit_baseline(cfg, result.rows, dataset,
                             make_rng(cfg.pipeline.seed, STREAM_BASELINE))
        save_baseline(model, ckpt_dir)
        _write_manifest(cfg, out, {"command": "train", "mode": "offline",
                                   "episodes": len(result.profit_curve),
                                   "days": len(dataset.days)})
        print(f"offline training done: success={metrics.success_rate:.3f} "
              f"loose={metrics.rate_loose:.3f} -> {out}")
    else:
        for agent in agents:
            agent.restore(Path(args.pretrained) / "checkpoints")
        if args.dataset:
            dataset = load_dataset(args.dataset)
        else:
            dataset = build_dataset(cfg, cfg.pipeline.online_days, DATASET_ONLINE,
                                    population)
        rows, metrics = train_online(cfg, agents, dataset)
        for agent in agents:
            agent.save(ckpt_dir)
        write_outcome_csv(rows, out / "online_outcome.csv")
        write_metrics(metrics, out / "metrics.json", tag="online")
        _write_manifest(cfg, out, {"command": "train", "mode": "online",
                                   "pretrained": str(args.pretrained),
                                   "days": len(dataset.days)})
        print(f"online run done: success={metrics.success_rate:.3f} "
              f"win_rate={metrics.win_rate:.3f} -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    if args.dry_run:
        print(f"config ok (hash {config_hash(cfg)}); would evaluate {args.checkpoint}")
        return EXIT_OK
    out = _outdir(args, cfg, "evaluate")
    population = build_population(cfg)
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        print(f"error: checkpoint directory {ckpt} not found", file=sys.stderr)
        return EXIT_CONFIG
    if args.dataset:
        dataset = load_dataset(args.dataset)
    else:
        dataset = build_dataset(cfg, cfg.pipeline.validation_days,
                                DATASET_VALIDATION, population)
    if args.tag == "baseline":
        policy = baseline_policy(load_baseline(cfg, ckpt))
    else:
        agents = make_agents(cfg, make_encoder(cfg))
        for agent in agents:
            agent.restore(ckpt)
        policy = agent_policy(agents)
    rows, metrics = evaluate_policy(cfg, policy, dataset, population)
    name = "baseline_outcome.csv" if args.tag == "baseline" else "outcome.csv"
    write_outcome_csv(rows, out / name)
    write_metrics(metrics, out / "metrics.json", tag=args.tag)
    _write_manifest(cfg, out, {"command": "evaluate", "tag": args.tag,
                               "checkpoint": str(ckpt)})
    print(f"evaluation ({args.tag}): success={metrics.success_rate:.3f} "
          f"win_rate={metrics.win_rate:.3f} -> {out}")
    return EXIT_OK


def cmd_grid_search(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    with open(args.grid) as fh:
        grid = yaml.safe_load(fh)
    if not isinstance(grid, dict) or not grid:
        print("error: grid file must hold a non-empty mapping of config paths "
              "to value lists", file=sys.stderr)
        return EXIT_CONFIG
    if args.dry_run:
        n = 1
        for values in grid.values():
            n *= len(values)
        print(f"config ok (hash {config_hash(cfg)}); would search {n} candidate(s)")
        return EXIT_OK
    out = _outdir(args, cfg, "grid_search")
    result = grid_search(cfg, grid, mode=args.mode)
    payload = {
        "qualified": result.qualified,
        "mode": args.mode,
        "best_params": result.best_params,
        "best_metrics": result.best_metrics.to_dict() if result.best_metrics else None,
        "trials": [
            {"params": t.params, "qualified": t.qualified, "metrics": t.metrics.to_dict()}
            for t in result.trials
        ],
    }
    with open(out / "grid_results.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    _write_manifest(cfg, out, {"command": "grid-search", "mode": args.mode})
    if not result.qualified:
        print("no qualifying configuration met the success threshold", file=sys.stderr)
        return EXIT_THRESHOLD
    print(f"best: {result.best_params} "
          f"(success={result.best_metrics.success_rate:.3f}) -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_run

    run_dir = Path(args.run)
    if not run_dir.exists():
        print(f"error: run directory {run_dir} not found", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) if args.out else run_dir / "report"
    written = render_run(run_dir, out)
    if not written:
        print(f"error: nothing to report in {run_dir} (no outcome CSVs)",
              file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drbid",
        description="Demand-bidding simulation and two-agent bidding learner",
    )
    parser.add_argument("--version", action="version", version=f"drbid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, dataset_flag=True):
        p.add_argument("--config", default=None, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override pipeline seed")
        p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=None,
                       help="noise scenario (sigma 0 / 0.2 / 0.5)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--dry-run", action="store_true",
                       help="validate configuration and exit")
        if dataset_flag:
            p.add_argument("--dataset", default=None,
                           help="existing dataset directory (else auto-generated)")

    p = sub.add_parser("simulate", help="generate and persist an event dataset")
    common(p, dataset_flag=False)
    p.add_argument("--days", type=int, default=None, help="number of event days")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("train", help="offline or online training")
    common(p)
    p.add_argument("--mode", choices=("offline", "online"), default="offline")
    p.add_argument("--pretrained", default=None,
                   help="offline run directory to continue from (online mode)")
    p.add_argument("--days", type=int, default=None,
                   help="override training days (offline mode)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="deterministic replay of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--tag", choices=("agents", "baseline"), default="agents")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("grid-search", help="exhaustive hyperparameter search")
    common(p, dataset_flag=False)
    p.add_argument("--grid", required=True, help="YAML mapping of config paths to values")
    p.add_argument("--mode", choices=("offline", "online"), default="offline")
    p.set_defaults(fn=cmd_grid_search)

    p = sub.add_parser("report", help="render figures and tables for a run")
    p.add_argument("--run", required=True, help="run directory to render")
    p.add_argument("--out", default=None, help="report output directory")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # keep scripted pipelines honest about failures
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
