"""Engagement estimation for multi-party human-robot interaction.

Engagement is modeled as a piecewise-linear process whose slope in each
section is drawn from a per-behavior Gaussian; the interaction ends when
engagement first reaches zero. Slope distributions are fitted by maximum
likelihood against observed interaction durations.
"""
from .behaviors import (
    BEHAVIORS,
    BehaviorCategory,
    GaussianParams,
    ParameterError,
    ParameterSet,
    default_parameter_set,
    load_parameters,
    reference_parameter_set,
    save_parameters,
)
from .engine import (
    CompiledDataset,
    EngagementTrace,
    effective_slope,
    estimate_duration,
    gaussian_product,
    trajectory,
    write_trace,
)
from .evaluation import EvalMetrics, compare_methods, evaluate
from .synthgen import ScenarioConfig, corpus_stats, generate
from .timeline import (
    BehaviorInterval,
    InteractionSession,
    Section,
    SessionError,
    UserRecord,
    load_session,
    segment,
    validate,
)
from .trainer import TrainConfig, TrainReport, negative_log_likelihood, split_dataset, train

__version__ = "0.1.0"

__all__ = [
    "BehaviorCategory",
    "BehaviorInterval",
    "BEHAVIORS",
    "compare_methods",
    "CompiledDataset",
    "corpus_stats",
    "default_parameter_set",
    "effective_slope",
    "EngagementTrace",
    "estimate_duration",
    "EvalMetrics",
    "evaluate",
    "gaussian_product",
    "GaussianParams",
    "generate",
    "InteractionSession",
    "load_parameters",
    "load_session",
    "negative_log_likelihood",
    "ParameterError",
    "ParameterSet",
    "reference_parameter_set",
    "save_parameters",
    "ScenarioConfig",
    "Section",
    "segment",
    "SessionError",
    "split_dataset",
    "train",
    "TrainConfig",
    "TrainReport",
    "trajectory",
    "UserRecord",
    "validate",
    "write_trace",
]
