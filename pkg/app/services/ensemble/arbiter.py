"""Minimum-variance arbitration between redundant learners."""
import asyncio
import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from app.constants import CONTROL_LIMIT
from app.errors import NoValidLearnerError, NonFiniteError
from app.services.ensemble.sampling import UncertaintyReport, decompose, mc_sample
from app.services.learners.model import TrainedNetwork
from app.utils.io import jsonable

logger = logging.getLogger(__name__)

ArbiterMode = Literal["min_variance", "blend"]


@dataclass(frozen=True)
class EnsembleDecision:
    t: float
    learners: tuple[str, ...]
    reports: tuple[UncertaintyReport, ...]
    selected_index: int
    control: np.ndarray
    mode: str = "min_variance"
    excluded: tuple[int, ...] = field(default_factory=tuple)

    @property
    def selected(self) -> str:
        return self.learners[self.selected_index]

    def to_record(self) -> dict:
        """JSONL event record; non-finite numbers become null."""
        return jsonable({
            "type": "decision",
            "t": self.t,
            "mode": self.mode,
            "learners": {
                name: {
                    "mean": r.mean,
                    "epistemic": r.epistemic,
                    "aleatoric": r.aleatoric,
                    "total": r.total,
                }
                for name, r in zip(self.learners, self.reports)
            },
            "selected": self.selected,
            "excluded": [self.learners[i] for i in self.excluded],
            "control": self.control,
        })


def _clamp(control) -> np.ndarray:
    return np.clip(np.asarray(control, dtype=float), -CONTROL_LIMIT, CONTROL_LIMIT)


def _valid_indices(reports: Sequence[UncertaintyReport]) -> list[int]:
    if not reports:
        raise ValueError("no learner reports to arbitrate")
    valid = [i for i, r in enumerate(reports) if r.valid]
    if not valid:
        raise NoValidLearnerError("every learner produced a non-finite prediction")
    return valid


def min_variance_select(reports: Sequence[UncertaintyReport]) -> tuple[int, np.ndarray]:
    """Index of the lowest total variance (lowest index on ties) and its clamped mean.

    Learners with a non-finite total are skipped.
    """
    valid = _valid_indices(reports)
    best = min(valid, key=lambda i: (reports[i].total, i))
    return best, _clamp(reports[best].mean)


def inverse_variance_blend(reports: Sequence[UncertaintyReport]) -> np.ndarray:
    """Precision-weighted mean of the learner means, clamped.

    A learner with zero total variance takes the full weight (the first one, if several).
    Kept as a comparison baseline to min-variance selection.
    """
    valid = _valid_indices(reports)
    for i in valid:
        if reports[i].total == 0.0:
            return _clamp(reports[i].mean)
    weights = np.array([1.0 / reports[i].total for i in valid])
    means = np.stack([reports[i].mean for i in valid])
    return _clamp(weights @ means / weights.sum())


def evaluate_learner(
    net: TrainedNetwork, observation, count: int, rng: np.random.Generator
) -> UncertaintyReport:
    """mc_sample + decompose for one learner; a non-finite prediction yields an invalid report."""
    try:
        report = decompose(mc_sample(net, observation, count, rng))
    except NonFiniteError as exc:
        logger.warning("learner '%s' excluded: %s", net.channel, exc)
        return UncertaintyReport.invalid(net.spec.output_dim)
    if not report.valid:
        logger.warning("learner '%s' excluded: non-finite variance", net.channel)
    return report


def decide(
    nets: Sequence[TrainedNetwork],
    reports: Sequence[UncertaintyReport],
    t: float = 0.0,
    mode: ArbiterMode = "min_variance",
) -> EnsembleDecision:
    selected, control = min_variance_select(reports)
    if mode == "blend":
        control = inverse_variance_blend(reports)
    return EnsembleDecision(
        t=t,
        learners=tuple(n.channel for n in nets),
        reports=tuple(reports),
        selected_index=selected,
        control=control,
        mode=mode,
        excluded=tuple(i for i, r in enumerate(reports) if not r.valid),
    )


def _check_inputs(observations, nets, rngs) -> None:
    if not (len(observations) == len(nets) == len(rngs)):
        raise ValueError("need one observation and one random stream per learner")


def ensemble_step(
    observations: Sequence,
    nets: Sequence[TrainedNetwork],
    count: int,
    rngs: Sequence[np.random.Generator],
    t: float = 0.0,
    mode: ArbiterMode = "min_variance",
) -> EnsembleDecision:
    """Evaluate every learner on its own observation, then arbitrate."""
    _check_inputs(observations, nets, rngs)
    reports = [evaluate_learner(n, o, count, r) for n, o, r in zip(nets, observations, rngs)]
    return decide(nets, reports, t, mode)


async def ensemble_step_async(
    observations: Sequence,
    nets: Sequence[TrainedNetwork],
    count: int,
    rngs: Sequence[np.random.Generator],
    t: float = 0.0,
    mode: ArbiterMode = "min_variance",
) -> EnsembleDecision:
    """Same decision as ensemble_step, with learners evaluated on concurrent worker threads."""
    _check_inputs(observations, nets, rngs)
    reports = await asyncio.gather(
        *(asyncio.to_thread(evaluate_learner, n, o, count, r) for n, o, r in zip(nets, observations, rngs))
    )
    return decide(nets, list(reports), t, mode)
