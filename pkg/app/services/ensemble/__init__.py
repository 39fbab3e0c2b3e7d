from app.services.ensemble.arbiter import (
    EnsembleDecision,
    decide,
    ensemble_step,
    ensemble_step_async,
    evaluate_learner,
    inverse_variance_blend,
    min_variance_select,
)
from app.services.ensemble.sampling import (
    PredictiveSamples,
    UncertaintyReport,
    decompose,
    decompose_many,
    mc_sample,
)

__all__ = [
    "EnsembleDecision",
    "PredictiveSamples",
    "UncertaintyReport",
    "decide",
    "decompose",
    "decompose_many",
    "ensemble_step",
    "ensemble_step_async",
    "evaluate_learner",
    "inverse_variance_blend",
    "min_variance_select",
    "mc_sample",
]
