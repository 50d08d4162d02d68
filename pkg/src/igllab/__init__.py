"""Interaction-grounded learning with action-posterior reward inference.

The package learns policies when the reward is never observed: an online
posterior model predicts which action produced each (context, feedback)
pair, deviations from the uniform prior flag nonzero latent rewards, a
definitely-negative oracle signs them, and a contextual bandit consumes
the extracted pseudo-rewards. Simulators, off-policy replay, and an
experiment CLI are included.
"""

from .core import (
    ActionSet,
    Context,
    DistributionNotNormalized,
    DuplicateActionId,
    Feedback,
    FeatureVector,
    IndexOutOfRange,
    InteractionRecord,
    LatentReward,
    PolicyDistribution,
    PseudoReward,
    ValidationError,
    validate_record,
)
from .igl import (
    IglConfig,
    IglStep,
    LatentStates,
    constant_zero_dn,
    detect_extreme,
    dn_from_signals,
    extract_reward,
    igl_step,
    run_off_policy,
    run_on_policy,
    synthetic_uniform_weight,
)
from .learners import (
    GateConfig,
    ModelConfig,
    OnlineSoftmaxModel,
    WeightedExample,
)

__all__ = [
    "ActionSet",
    "Context",
    "DistributionNotNormalized",
    "DuplicateActionId",
    "Feedback",
    "FeatureVector",
    "GateConfig",
    "IglConfig",
    "IglStep",
    "IndexOutOfRange",
    "InteractionRecord",
    "LatentReward",
    "LatentStates",
    "ModelConfig",
    "OnlineSoftmaxModel",
    "PolicyDistribution",
    "PseudoReward",
    "ValidationError",
    "WeightedExample",
    "constant_zero_dn",
    "detect_extreme",
    "dn_from_signals",
    "extract_reward",
    "igl_step",
    "run_off_policy",
    "run_on_policy",
    "synthetic_uniform_weight",
    "validate_record",
]

__version__ = "0.1.0"
