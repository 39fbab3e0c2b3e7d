from app.services.harness.acceptance import (
    crashed_after_fault,
    fault_onset_step,
    usage_shift,
    variance_response,
)
from app.services.harness.collector import collect_dataset
from app.services.harness.driver import (
    default_schedule,
    drive_episode,
    run_ensemble,
    run_expert,
    run_single_learner,
    start_state,
)
from app.services.harness.reporter import ReportBundle, emit_report
from app.services.harness.trainer import TrainingOutcome, load_networks, train_all, train_all_async
from app.services.harness.usage import usage_table

__all__ = [
    "ReportBundle",
    "TrainingOutcome",
    "collect_dataset",
    "crashed_after_fault",
    "default_schedule",
    "drive_episode",
    "emit_report",
    "fault_onset_step",
    "load_networks",
    "run_ensemble",
    "run_expert",
    "run_single_learner",
    "start_state",
    "train_all",
    "train_all_async",
    "usage_shift",
    "usage_table",
    "variance_response",
]
