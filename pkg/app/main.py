"""Command-line entry point.

Usage:
    python -m app.main collect --seed 1                       # expert datasets
    python -m app.main train --seed 1 --data runs/data        # three learners
    python -m app.main drive --seed 1 --mode ensemble         # 17-lap fault protocol
    python -m app.main drive --seed 1 --mode single --learner state --schedule own
    python -m app.main report --run runs/drive/ensemble-seed1

All subcommands take --config FILE and repeated --set dotted.key=value overrides.
"""
import argparse
import asyncio
import logging
import sys
from pathlib import Path

from app.config import get_settings, load_experiment_config
from app.constants import EXIT_CRASH, EXIT_DIVERGED, EXIT_OK
from app.errors import BayesDriveError
from app.schemas import DatasetPaths, ExperimentConfig, FaultSchedule, RunLog
from app.services.harness import (
    collect_dataset,
    default_schedule,
    emit_report,
    load_networks,
    run_ensemble,
    run_expert,
    run_single_learner,
    train_all,
)
from app.services.harness.trainer import checkpoint_path
from app.services.learners import load_checkpoint
from app.services.sensors import single_channel_schedule
from app.utils.logs import configure_logging

logger = logging.getLogger(__name__)


def _load_config(args) -> ExperimentConfig:
    settings = get_settings()
    path = args.config
    if path is None and settings.default_config.exists():
        path = settings.default_config
    config = load_experiment_config(path, args.set)
    if getattr(args, "seed", None) is not None:
        config = config.model_copy(update={"master_seed": args.seed})
    return config


def cmd_collect(args) -> int:
    config = _load_config(args)
    laps = config.collection_laps if args.laps is None else args.laps
    out = args.out or get_settings().output_dir / "data"
    paths = collect_dataset(config, laps, out, config.master_seed)
    print(f"Collected {paths.rows} rows per channel into {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args)
    data = args.data or get_settings().output_dir / "data"
    out = args.out or get_settings().output_dir / "checkpoints"
    datasets = DatasetPaths(state=data / "state.csv", left=data / "left.csv", right=data / "right.csv", rows=0)
    outcome = train_all(config, datasets, out, config.master_seed, get_settings().max_workers)
    for channel, path in outcome.checkpoints.items():
        print(f"  {channel}: {path}")
    if not outcome.ok:
        print(f"Training diverged for: {', '.join(outcome.failures)}")
        return EXIT_DIVERGED
    return EXIT_OK


def _schedule(config: ExperimentConfig, args) -> FaultSchedule:
    if args.schedule == "protocol":
        return default_schedule(config)
    if args.schedule == "clean":
        return FaultSchedule()
    channel = args.learner if args.schedule == "own" else args.schedule
    return single_channel_schedule(
        channel,
        config.track,
        config.cost,
        clean_laps=config.protocol.clean_laps,
        duty_cycle=config.protocol.duty_cycle,
        burst_period=config.protocol.burst_period,
    )


def _drive_one(config: ExperimentConfig, args, seed: int) -> RunLog:
    checkpoints = args.checkpoints or get_settings().output_dir / "checkpoints"
    out = args.out or get_settings().output_dir / "drive"
    schedule = _schedule(config, args)
    if args.mode == "expert":
        return run_expert(config, out / f"expert-seed{seed}", seed, args.laps or config.lap_budget, schedule)
    if args.mode == "single":
        network = load_checkpoint(checkpoint_path(checkpoints, args.learner))
        run_dir = out / f"single-{args.learner}-{args.schedule}-seed{seed}"
        return run_single_learner(config, network, schedule, run_dir, seed, args.laps)
    run_dir = out / f"ensemble-{args.schedule}-seed{seed}"
    return run_ensemble(config, load_networks(checkpoints), schedule, run_dir, seed, args.laps)


async def _drive_batch(config: ExperimentConfig, args) -> list[RunLog]:
    """Episodes of a --runs batch on worker threads; run i uses seed + i."""
    limit = asyncio.Semaphore(get_settings().max_workers)

    async def one(seed: int) -> RunLog:
        async with limit:
            return await asyncio.to_thread(_drive_one, config, args, seed)

    return await asyncio.gather(*(one(config.master_seed + i) for i in range(args.runs)))


def cmd_drive(args) -> int:
    config = _load_config(args)
    if args.mode == "single" and args.learner is None:
        parser.error("--mode single needs --learner")
    if args.schedule == "own" and args.mode != "single":
        parser.error("--schedule own only applies to --mode single")
    logs = asyncio.run(_drive_batch(config, args))
    for log in logs:
        emit_report(log, track=config.track)
        status = f"CRASH at step {log.crash_step}" if log.crashed else log.end_reason
        print(f"  seed {log.seed}: {log.laps_completed} laps, {status} -> {log.run_dir}")
    return EXIT_CRASH if any(log.crashed for log in logs) else EXIT_OK


def cmd_report(args) -> int:
    log = RunLog.model_validate_json((args.run / "run.json").read_text())
    track = _load_config(args).track
    bundle = emit_report(log, args.out, track=track)
    print(f"Report written to {bundle.report_html.parent}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesdrive", description="Bayesian ensemble driving experiments")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment config")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    common.add_argument("--log-level", default=None, help="override BAYESDRIVE_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    collect = sub.add_parser("collect", parents=[common], help="collect expert datasets")
    collect.add_argument("--seed", type=int, required=True)
    collect.add_argument("--laps", type=int, help="defaults to collection_laps")
    collect.add_argument("--out", type=Path)
    collect.set_defaults(func=cmd_collect)

    train = sub.add_parser("train", parents=[common], help="train the three learners")
    train.add_argument("--seed", type=int, required=True)
    train.add_argument("--data", type=Path, help="directory with state.csv, left.csv, right.csv")
    train.add_argument("--out", type=Path)
    train.set_defaults(func=cmd_train)

    drive = sub.add_parser("drive", parents=[common], help="closed-loop evaluation")
    drive.add_argument("--seed", type=int, required=True)
    drive.add_argument("--mode", choices=["ensemble", "single", "expert"], default="ensemble")
    drive.add_argument("--learner", choices=["state", "left", "right"])
    drive.add_argument(
        "--schedule",
        choices=["protocol", "clean", "own", "state", "left", "right"],
        default="protocol",
        help="fault schedule: the protocol, none, or one channel faulted after the clean prefix",
    )
    drive.add_argument("--laps", type=int, help="lap budget override")
    drive.add_argument("--runs", type=int, default=1)
    drive.add_argument("--checkpoints", type=Path)
    drive.add_argument("--out", type=Path)
    drive.set_defaults(func=cmd_drive)

    report = sub.add_parser("report", parents=[common], help="rebuild the report of a run")
    report.add_argument("--run", type=Path, required=True, help="run directory holding run.json")
    report.add_argument("--out", type=Path)
    report.set_defaults(func=cmd_report)
    return parser


parser = build_parser()


def main(argv: list[str] | None = None) -> int:
    args = parser.parse_args(argv)
    configure_logging(args.log_level or get_settings().log_level)
    try:
        return args.func(args)
    except BayesDriveError as e:
        logger.error("%s", e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
