#!/usr/bin/env python3
"""
Run the whole robustness protocol end to end.

Usage:
    python scripts/reproduce.py --seed 0                  # everything, default config
    python scripts/reproduce.py --seed 0 --skip-collect   # reuse datasets in <out>/seed<N>/data
    python scripts/reproduce.py --seed 0 --master-seeds 1 --fragility-runs 3

Stages: expert check; per master seed, data collection, training, a clean single-learner run
per learner and an ensemble protocol run; then fragility runs of every learner (own channel
faulted after the clean prefix) on the first seed's networks. Writes <out>/acceptance.json
with crash counts, usage shifts and variance ratios.
"""

import argparse
import asyncio
import json
import sys
from pathlib import Path

import numpy as np

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import get_settings, load_experiment_config
from app.constants import CHANNELS, EXIT_DIVERGED
from app.schemas import DatasetPaths, ExperimentConfig, FaultSchedule
from app.services.harness import (
    collect_dataset,
    crashed_after_fault,
    default_schedule,
    emit_report,
    load_networks,
    run_ensemble,
    run_expert,
    run_single_learner,
    train_all_async,
    usage_shift,
    variance_response,
)
from app.services.sensors import single_channel_schedule
from app.services.world import lateral_offset
from app.utils.io import jsonable, read_trajectory
from app.utils.logs import configure_logging

settings = get_settings()

FRAGILITY_LAPS = 2


async def _gather(jobs):
    """Run blocking episode jobs on worker threads, at most max_workers at a time."""
    limit = asyncio.Semaphore(settings.max_workers)

    async def one(job):
        async with limit:
            return await asyncio.to_thread(job)

    return await asyncio.gather(*(one(j) for j in jobs))


def expert_check(config: ExperimentConfig, out: Path, seed: int, laps: int = 5) -> dict:
    log = run_expert(config, out / "expert", seed, laps)
    offsets = [
        abs(lateral_offset([float(r["p_x"]), float(r["p_y"])], config.track))
        for r in read_trajectory(log.trajectory_csv)
    ]
    mean_offset = float(np.mean(offsets)) if offsets else 0.0
    return {
        "laps": log.laps_completed,
        "crashed": log.crashed,
        "mean_abs_lateral_offset": mean_offset,
        "passed": not log.crashed and log.laps_completed >= laps
        and mean_offset < 0.3 * config.track.half_width,
    }


async def prepare(config: ExperimentConfig, out: Path, seed: int, skip_collect: bool):
    """Collect (or reuse) the datasets for one master seed and train its three learners."""
    data_dir, ckpt_dir = out / "data", out / "checkpoints"
    if skip_collect:
        datasets = DatasetPaths(**{c: data_dir / f"{c}.csv" for c in CHANNELS}, rows=0)
    else:
        datasets = await asyncio.to_thread(collect_dataset, config, config.collection_laps, data_dir, seed)
        print(f"  [seed {seed}] collected {datasets.rows} rows per channel")

    outcome = await train_all_async(config, datasets, ckpt_dir, seed, settings.max_workers)
    if not outcome.ok:
        return None, list(outcome.failures)
    return load_networks(ckpt_dir), []


async def main(args) -> int:
    base = load_experiment_config(args.config, args.set)
    seed = args.seed
    out = args.out or settings.output_dir / f"reproduce-seed{seed}"
    master_seeds = [seed + i for i in range(args.master_seeds)]
    acceptance: dict = {"seed": seed, "master_seeds": master_seeds}

    print(f"Reproduction run -> {out}")

    # 1. Expert competence
    acceptance["expert"] = expert_check(base.model_copy(update={"master_seed": seed}), out, seed)
    print(f"  expert: {acceptance['expert']}")

    # 2-3. Collection and training, once per master seed
    artifacts = {}
    for m in master_seeds:
        config = base.model_copy(update={"master_seed": m})
        networks, failures = await prepare(config, out / f"seed{m}", m, args.skip_collect)
        if networks is None:
            print(f"  [seed {m}] training diverged for {failures}; stopping")
            return EXIT_DIVERGED
        artifacts[m] = (config, networks)

    # 4. Single learners, clean
    clean_logs = await _gather([
        (lambda c=c, n=n, m=m: run_single_learner(
            c, n, FaultSchedule(), out / f"seed{m}" / "single-clean" / n.channel, m, lap_budget=5))
        for m, (c, networks) in artifacts.items() for n in networks
    ])
    acceptance["single_clean"] = {
        channel: sum(not log.crashed and log.laps_completed >= 5 for log in clean_logs if log.learners == [channel])
        for channel in CHANNELS
    }
    print(f"  single-learner clean survivals: {acceptance['single_clean']} of {len(master_seeds)}")

    # 5. Single learners, own channel faulted after the clean prefix
    config, networks = artifacts[seed]
    clean_laps = config.protocol.clean_laps
    fragility_seeds = [seed + i for i in range(args.fragility_runs)]
    jobs = []
    for n in networks:
        schedule = single_channel_schedule(
            n.channel, config.track, config.cost, clean_laps=clean_laps,
            duty_cycle=config.protocol.duty_cycle, burst_period=config.protocol.burst_period,
        )
        for s in fragility_seeds:
            jobs.append(lambda n=n, s=s, schedule=schedule: run_single_learner(
                config, n, schedule, out / "single-fault" / f"{n.channel}-seed{s}", s,
                lap_budget=clean_laps + FRAGILITY_LAPS))
    fragility_logs = await _gather(jobs)
    acceptance["single_fault_crashes"] = {
        n.channel: sum(
            crashed_after_fault(log, within_laps=FRAGILITY_LAPS)
            for log in fragility_logs if log.learners == [n.channel]
        )
        for n in networks
    }
    print(f"  single-learner fault crashes: {acceptance['single_fault_crashes']} of {len(fragility_seeds)}")

    # 6. Ensemble under the fault protocol, one run per master seed
    ensemble_logs = await _gather([
        (lambda c=c, networks=networks, m=m: run_ensemble(
            c, networks, default_schedule(c), out / f"seed{m}" / "ensemble", m))
        for m, (c, networks) in artifacts.items()
    ])
    acceptance["ensemble"] = {}
    for log in ensemble_logs:
        emit_report(log, track=base.track)
        shifts, variance = usage_shift(log), variance_response(log)
        acceptance["ensemble"][str(log.seed)] = {
            "laps": log.laps_completed,
            "crashed": log.crashed,
            "shifts": shifts,
            "variance": variance,
            "usage_passed": all(v["passed"] for v in shifts.values()),
            "variance_passed": all(v["passed"] for v in variance.values()),
        }
    print(f"  ensemble survivals: {sum(not log.crashed for log in ensemble_logs)} of {len(ensemble_logs)}")

    (out / "acceptance.json").write_text(json.dumps(jsonable(acceptance), indent=2, sort_keys=True))
    print(f"Acceptance summary written to {out / 'acceptance.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Reproduce the ensemble robustness experiment")
    parser.add_argument("--seed", type=int, required=True, help="first master seed")
    parser.add_argument("--config", type=Path, default=None, help="TOML experiment config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out", type=Path, default=None)
    parser.add_argument("--skip-collect", action="store_true", help="reuse <out>/seed<N>/data")
    parser.add_argument("--master-seeds", type=int, default=3, help="collect, train and drive this many seeds")
    parser.add_argument("--fragility-runs", type=int, default=10)
    return parser


if __name__ == "__main__":
    args = build_parser().parse_args()
    configure_logging(settings.log_level)
    sys.exit(asyncio.run(main(args)))
