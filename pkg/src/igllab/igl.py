"""The reduction engine: action-posterior estimation, extreme-event
detection and disambiguation, pseudo-reward extraction, and the on/off
policy drivers.

Per round: the posterior model predicts which action produced the observed
(context, feedback) pair; an action whose posterior exceeds
``detection_factor`` times the uniform prior 1/K signals a nonzero latent
reward; a definitely-negative oracle splits those events into +1 and
-1/alpha; the bandit policy consumes the resulting pseudo-reward; finally
the posterior model trains on the round with an importance weight that
synthesizes a uniform action distribution. The two-state configuration is
the special case alpha = 1 with a constant-zero oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Iterator

import numpy as np

from .cb import PROPENSITY_FLOOR, CbPolicy, ZeroPropensity
from .core import (
    ActionSet,
    Context,
    Feedback,
    FeatureVector,
    InteractionRecord,
    LatentReward,
    PolicyDistribution,
    ValidationError,
    validate_record,
)
from .learners import OnlineSoftmaxModel, WeightedExample
from .metrics import MetricsAccumulator, StepMetrics


class ConfigMismatch(Exception):
    """A record or model disagrees with the configured action-set size."""


class RecordInvalid(Exception):
    """An off-policy record failed validation; carries its line number."""

    def __init__(self, line: int, cause: Exception):
        super().__init__(f"record {line}: {cause}")
        self.line = line
        self.cause = cause


class LatentStates(Enum):
    TWO = 2
    THREE = 3


DnOracle = Callable[[Context, Feedback], int]


def constant_zero_dn(context: Context, feedback: Feedback) -> int:
    """The two-state oracle: nothing is ever definitely negative."""
    return 0


def dn_from_signals(negative_signal_ids: frozenset[int] | set[int]) -> DnOracle:
    """Oracle flagging a fixed set of feedback signals as definitely negative.

    The designated signals must never be emitted on satisfied interactions;
    that is the environment's contract, not checked here.
    """
    ids = frozenset(negative_signal_ids)

    def oracle(context: Context, feedback: Feedback) -> int:
        return -1 if feedback.signal_id in ids else 0

    return oracle


@dataclass(frozen=True)
class IglConfig:
    """Everything the drivers need besides the two models.

    ``ik_encoder`` maps one (context, feedback) pair into the posterior
    model's input space. Two-state configurations must use alpha 1 and the
    constant-zero oracle; the classmethods below enforce that.
    """

    latent_states: LatentStates
    action_count: int
    ik_encoder: Callable[[Context, Feedback], FeatureVector]
    alpha: float = 1.0
    detection_factor: float = 2.0
    dn_oracle: DnOracle = constant_zero_dn

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.action_count < 2:
            raise ValueError("action_count must be >= 2")
        if self.latent_states is LatentStates.TWO:
            if self.alpha != 1.0 or self.dn_oracle is not constant_zero_dn:
                raise ValueError(
                    "two-state configuration requires alpha=1 and the "
                    "constant-zero oracle"
                )

    @classmethod
    def two_state(
        cls,
        action_count: int,
        ik_encoder: Callable[[Context, Feedback], FeatureVector],
        detection_factor: float = 2.0,
    ) -> "IglConfig":
        return cls(
            LatentStates.TWO,
            action_count,
            ik_encoder,
            alpha=1.0,
            detection_factor=detection_factor,
            dn_oracle=constant_zero_dn,
        )

    @classmethod
    def three_state(
        cls,
        action_count: int,
        ik_encoder: Callable[[Context, Feedback], FeatureVector],
        alpha: float,
        dn_oracle: DnOracle,
        detection_factor: float = 2.0,
    ) -> "IglConfig":
        return cls(
            LatentStates.THREE,
            action_count,
            ik_encoder,
            alpha=alpha,
            detection_factor=detection_factor,
            dn_oracle=dn_oracle,
        )


@dataclass(frozen=True)
class IglStep:
    """Everything one round produced, for metrics and tests."""

    record: InteractionRecord
    ik_posterior: float
    importance_weight: float
    extreme: bool
    pseudo_reward: float
    ik_top1: int


def synthetic_uniform_weight(k: int, p_chosen: float) -> float:
    """Importance weight 1/(K * p) that re-weights data collected under an
    arbitrary policy to look uniformly collected."""
    if k < 2:
        raise ValueError(f"action count must be >= 2, got {k}")
    if p_chosen <= PROPENSITY_FLOOR:
        raise ZeroPropensity(
            f"chosen-action probability {p_chosen} below {PROPENSITY_FLOOR}"
        )
    if p_chosen > 1.0:
        raise ValueError(f"probability {p_chosen} > 1")
    return 1.0 / (k * p_chosen)


def detect_extreme(k: int, posterior: float, factor: float = 2.0) -> bool:
    """True iff the action posterior exceeds ``factor`` times the uniform
    prior 1/K, implying a nonzero latent reward."""
    return k * posterior > factor


def extract_reward(extreme: bool, dn: int, alpha: float) -> float:
    """Three-case reward extractor over (detection, oracle) outcomes."""
    if not extreme:
        return 0.0
    if dn == -1:
        return -1.0 / alpha
    return 1.0


def igl_step(
    config: IglConfig,
    ik: OnlineSoftmaxModel,
    cb: CbPolicy,
    record: InteractionRecord,
) -> IglStep:
    """Run one round of the reduction on a (possibly logged) record.

    Order matters and is fixed: posterior predict, bandit update with the
    extracted pseudo-reward, then posterior update with the synthetic
    uniform weight.
    """
    k = record.action_set.size
    if k != config.action_count:
        raise ConfigMismatch(
            f"record has {k} actions, configuration expects {config.action_count}"
        )
    context = record.context
    chosen = record.chosen_index
    weight = synthetic_uniform_weight(k, record.behavior_probs.probs[chosen])

    ik_input = config.ik_encoder(context, record.feedback)
    probs = ik.predict(ik_input, k)
    posterior = float(probs[chosen])
    top1 = int(np.argmax(probs))

    extreme = detect_extreme(k, posterior, config.detection_factor)
    dn = config.dn_oracle(context, record.feedback) if extreme else 0
    pseudo_reward = extract_reward(extreme, dn, config.alpha)

    cb.learn(context, record.action_set, chosen, pseudo_reward, record.behavior_probs)
    ik.learn(WeightedExample(ik_input, k, chosen, weight))

    return IglStep(record, posterior, weight, extreme, pseudo_reward, top1)


def run_on_policy(
    config: IglConfig,
    ik: OnlineSoftmaxModel,
    cb: CbPolicy,
    env,
    horizon: int,
    seed: int,
    capture: list[InteractionRecord] | None = None,
) -> Iterator[StepMetrics]:
    """Interact with a simulator for ``horizon`` rounds, learning online.

    Yields one metric row per round. When ``capture`` is given, every
    played record (with ground-truth latent reward) is appended to it for
    later off-policy replay.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    rng = np.random.default_rng(seed)
    acc = MetricsAccumulator()
    for _ in range(horizon):
        context, actions = env.next()
        dist = cb.predict(context, actions)
        cdf = np.cumsum(dist.as_array)
        chosen = int(np.searchsorted(cdf, rng.random() * cdf[-1]))
        chosen = min(chosen, actions.size - 1)
        feedback, latent = env.feedback(context, actions.action_ids[chosen])
        record = InteractionRecord(
            context, actions, chosen, dist, feedback, latent
        )
        if capture is not None:
            capture.append(record)
        step = igl_step(config, ik, cb, record)
        best = env.oracle_best(context, actions)
        regret_delta = float(
            env.true_reward(context, actions.action_ids[best])
            - env.true_reward(context, actions.action_ids[chosen])
        )
        yield acc.update(
            pseudo_reward=step.pseudo_reward,
            true_reward=int(latent),
            ik_posterior=step.ik_posterior,
            top1_correct=step.ik_top1 == chosen,
            regret_delta=regret_delta,
        )


def run_off_policy(
    config: IglConfig,
    ik: OnlineSoftmaxModel,
    cb: CbPolicy,
    records: Iterable[InteractionRecord],
) -> Iterator[StepMetrics]:
    """Replay logged records through the reduction; never samples actions."""
    acc = MetricsAccumulator()
    for line, record in enumerate(records, start=1):
        try:
            validate_record(record)
        except ValidationError as err:
            raise RecordInvalid(line, err) from err
        step = igl_step(config, ik, cb, record)
        truth = None if record.latent_reward is None else int(record.latent_reward)
        yield acc.update(
            pseudo_reward=step.pseudo_reward,
            true_reward=truth,
            ik_posterior=step.ik_posterior,
            top1_correct=step.ik_top1 == record.chosen_index,
            regret_delta=None,
        )
