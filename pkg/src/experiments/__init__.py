from .config import ExperimentConfig, ExperimentResult, Provenance
from .harness import ReplicationRunner, replication_seeds, write_outputs
from .runners import (
    RUNNERS,
    mp_frames,
    run_eigvec_variance_experiment,
    run_experiment,
    run_mp_dump,
    run_que_experiment,
    run_risk_experiment,
    run_shrinker_experiment,
    run_spike_experiment,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "Provenance",
    "ReplicationRunner",
    "replication_seeds",
    "write_outputs",
    "RUNNERS",
    "mp_frames",
    "run_eigvec_variance_experiment",
    "run_experiment",
    "run_mp_dump",
    "run_que_experiment",
    "run_risk_experiment",
    "run_shrinker_experiment",
    "run_spike_experiment",
]
