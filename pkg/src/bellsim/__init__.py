"""Bell-test simulator: CH and CHSH statistics from closed-form models and
trial-by-trial Monte Carlo runs."""

from .core import (
    Angle,
    EstimateWithError,
    JointProbabilitySet,
    OutcomeJointSet,
    SettingsQuad,
    ch_chsh_consistency,
    ch_value,
    chsh_value,
    conditional_probability,
    correlation_from_joints,
    criterion_exceeds_singles,
    relative_angle,
)
from .models import ModelKind, ModelSpec, sample_trial
from .simulator import CountsTable, ExperimentConfig, merge_counts, run_experiment

__version__ = "0.1.0"
