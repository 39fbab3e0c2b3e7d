"""Train the three learners on their channel datasets, concurrently."""
import asyncio
import logging
from dataclasses import dataclass, field
from pathlib import Path

from app.constants import CHANNELS
from app.errors import TrainingDivergedError
from app.schemas import DatasetPaths, ExperimentConfig
from app.services.learners import TrainBatch, TrainedNetwork, load_checkpoint, save_checkpoint, train
from app.utils.io import read_dataset, write_csv
from app.utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass
class TrainingOutcome:
    checkpoints: dict[str, Path] = field(default_factory=dict)
    failures: dict[str, TrainingDivergedError] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures


def checkpoint_path(out_dir: Path, channel: str) -> Path:
    return out_dir / f"{channel}.json"


def train_channel(config: ExperimentConfig, channel: str, dataset: Path, out_dir: Path, seed: int) -> Path:
    """Fit one learner and write its checkpoint and loss curve."""
    meta, observations, controls = read_dataset(dataset)
    if meta.get("channel", channel) != channel:
        raise ValueError(f"dataset {dataset} holds channel '{meta.get('channel')}', expected '{channel}'")
    spec = config.learner_spec(channel)
    network = train(
        spec,
        TrainBatch(inputs=observations, targets=controls),
        config.learners[channel].training,
        seed=derive_seed(seed, f"train/{channel}"),
        channel=channel,
    )
    write_csv(out_dir / f"loss_{channel}.csv", ["epoch", "loss"], enumerate(network.loss_history, start=1))
    return save_checkpoint(network, checkpoint_path(out_dir, channel))


async def train_all_async(
    config: ExperimentConfig,
    datasets: DatasetPaths,
    out_dir: Path,
    seed: int,
    max_workers: int = 3,
) -> TrainingOutcome:
    """Train every channel on worker threads; one diverging learner does not stop the others."""
    limit = asyncio.Semaphore(max_workers)

    async def run(channel: str) -> Path:
        async with limit:
            logger.info("training '%s' learner", channel)
            return await asyncio.to_thread(
                train_channel, config, channel, datasets.for_channel(channel), out_dir, seed
            )

    results = await asyncio.gather(*(run(c) for c in CHANNELS), return_exceptions=True)
    outcome = TrainingOutcome()
    for channel, result in zip(CHANNELS, results):
        if isinstance(result, TrainingDivergedError):
            logger.error("training of '%s' diverged: %s", channel, result)
            outcome.failures[channel] = result
        elif isinstance(result, BaseException):
            raise result
        else:
            outcome.checkpoints[channel] = result
    return outcome


def train_all(
    config: ExperimentConfig, datasets: DatasetPaths, out_dir: Path, seed: int, max_workers: int = 3
) -> TrainingOutcome:
    return asyncio.run(train_all_async(config, datasets, out_dir, seed, max_workers))


def load_networks(checkpoint_dir: Path) -> list[TrainedNetwork]:
    """The three trained learners, in channel order."""
    return [load_checkpoint(checkpoint_path(checkpoint_dir, c)) for c in CHANNELS]
