"""Cached return targets for minibatched experience replay.

Instead of bootstrapping minibatch targets from a stale parameter copy, the
agents here periodically promote whole blocks of consecutive transitions
into a small cache, recompute their multi-step return targets in one
backward pass per block, and sample minibatches from the cache until the
next refresh. Because errors are measured before sampling, minibatches can
be prioritized by the true size of each sample's TD error, and the decay
parameter of the return can be chosen per block or per step at refresh time.
"""

from .agent import (
    RunLog,
    TrainConfig,
    TrainingDiverged,
    epsilon_greedy,
    epsilon_schedule,
    evaluate_policy,
    train_dqn_lambda,
    train_dqn_nstep_baseline,
)
from .envs import (
    ApproxState,
    Chain,
    CliffWalk,
    Environment,
    GridWorld,
    Observation,
    PartialObservability,
    RewardClip,
    StepResult,
    UnknownEnvironment,
    VelocityChain,
    clip_reward,
    make_env,
    make_partially_observable,
    phi,
)
from .qfunc import (
    Adam,
    AdamConfig,
    LinearQ,
    MlpQ,
    QFunction,
    Sgd,
    SnapshotMismatch,
    TabularQ,
    gradient_check,
)
from .replay import (
    Cache,
    CacheEntry,
    PrioritySplit,
    ReplayMemory,
    Transition,
    anneal_p,
    build_cache,
    make_block_view,
    priority_split,
    sample_block_start,
    sample_minibatch,
)
from .returns import (
    BlockView,
    ReturnEstimatorConfig,
    ReturnSequence,
    direct_lambda_sequence,
    error_bounded_lambda,
    estimate_returns,
    lambda_return_direct,
    lambda_return_sequence,
    median_dynamic_returns,
    n_step_return,
    n_step_return_sequence,
    recursive_lambda_sequence,
    watkins_cut_mask,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "AdamConfig",
    "ApproxState",
    "BlockView",
    "Cache",
    "CacheEntry",
    "Chain",
    "CliffWalk",
    "Environment",
    "GridWorld",
    "LinearQ",
    "MlpQ",
    "Observation",
    "PartialObservability",
    "PrioritySplit",
    "QFunction",
    "ReplayMemory",
    "ReturnEstimatorConfig",
    "ReturnSequence",
    "RewardClip",
    "RunLog",
    "Sgd",
    "SnapshotMismatch",
    "StepResult",
    "TabularQ",
    "TrainConfig",
    "TrainingDiverged",
    "Transition",
    "UnknownEnvironment",
    "VelocityChain",
    "anneal_p",
    "build_cache",
    "clip_reward",
    "direct_lambda_sequence",
    "epsilon_greedy",
    "epsilon_schedule",
    "error_bounded_lambda",
    "estimate_returns",
    "evaluate_policy",
    "gradient_check",
    "lambda_return_direct",
    "lambda_return_sequence",
    "make_block_view",
    "make_env",
    "make_partially_observable",
    "median_dynamic_returns",
    "n_step_return",
    "n_step_return_sequence",
    "phi",
    "priority_split",
    "recursive_lambda_sequence",
    "sample_block_start",
    "sample_minibatch",
    "train_dqn_lambda",
    "train_dqn_nstep_baseline",
    "watkins_cut_mask",
]
