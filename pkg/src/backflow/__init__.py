"""Backward reconstruction of noisy particle flows in strain fields.

Forward: simulate diffusing particles carried by a steady strain field.
Backward: learn the per-step conditional mean drift by regression and roll
the chain back deterministically from the observed terminal states.  An
exactly solvable linear-flow case provides closed-form ground truth.
"""

__version__ = "0.1.0"

from .backward import ReconstructionResult, backward_step, reconstruct
from .errors import (
    BackflowError,
    DatasetCorruptionError,
    DegenerateDenominatorError,
    DegenerateVarianceError,
    DomainError,
    FormatVersionError,
    ModelDivergenceError,
)
from .forward import (
    RngSpec,
    TimeGrid,
    TrajectoryBatch,
    generate_batch,
    initial_state,
    split_batch,
)
from .harness import (
    ComponentStats,
    SweepResult,
    TrialResult,
    TrialStatistics,
    relative_mae,
    run_trial,
    run_until_converged,
    sweep,
)
from .oracle import (
    GaussianChain,
    chain_marginal,
    finite_diff_grad,
    frozen_transition_density,
    gaussian_score,
    posterior_drift_fn,
    posterior_mean_drift,
)
from .scorenet import (
    Architecture,
    NormStats,
    PairSet,
    ScoreModel,
    TimeEmbeddingSpec,
    TrainConfig,
    TrainingReport,
    build_training_pairs,
    init_model,
    loss,
    loss_gradient,
    train,
)
from .strain import FlowKind, StrainConfig, drift, forcing, reaction, velocity

__all__ = [
    "Architecture",
    "BackflowError",
    "ComponentStats",
    "DatasetCorruptionError",
    "DegenerateDenominatorError",
    "DegenerateVarianceError",
    "DomainError",
    "FlowKind",
    "FormatVersionError",
    "GaussianChain",
    "ModelDivergenceError",
    "NormStats",
    "PairSet",
    "ReconstructionResult",
    "RngSpec",
    "ScoreModel",
    "StrainConfig",
    "SweepResult",
    "TimeEmbeddingSpec",
    "TimeGrid",
    "TrainConfig",
    "TrainingReport",
    "TrajectoryBatch",
    "TrialResult",
    "TrialStatistics",
    "backward_step",
    "build_training_pairs",
    "chain_marginal",
    "drift",
    "finite_diff_grad",
    "forcing",
    "frozen_transition_density",
    "gaussian_score",
    "generate_batch",
    "init_model",
    "initial_state",
    "loss",
    "loss_gradient",
    "posterior_drift_fn",
    "posterior_mean_drift",
    "reaction",
    "reconstruct",
    "relative_mae",
    "run_trial",
    "run_until_converged",
    "split_batch",
    "sweep",
    "train",
    "velocity",
]
